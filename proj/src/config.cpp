#include "depthmup/config.hpp"

#include <fstream>
#include <set>

#include "depthmup/errors.hpp"

namespace depthmup {

using nlohmann::json;

std::string_view to_string(ExperimentKind k) { return k == ExperimentKind::Train ? "train" : "limit"; }

ExperimentKind parse_experiment_kind(std::string_view s) {
  if (s == "train") return ExperimentKind::Train;
  if (s == "limit") return ExperimentKind::Limit;
  throw ConfigError("unknown experiment kind '" + std::string(s) + "' (expected train|limit)");
}

namespace {

// Reads keys from one JSON object and remembers which were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_null() && !j.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    if (j.is_object()) j_ = j;
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  template <class Parse, class T>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (present) out = parse(s);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + name_ + "." + k + "'");
    }
  }

 private:
  std::string name_;
  json j_ = json::object();
  std::set<std::string> seen_;
};

const json& sub(const json& j, const char* key) {
  static const json null;
  return j.contains(key) ? j.at(key) : null;
}

}  // namespace

void HarnessConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  param.validate();
  rule.validate();
  net.validate();
  dataset.validate();
  if (training.steps < 1) throw ConfigError("training.steps must be >= 1");
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (!(training.slice_fraction > 0.0 && training.slice_fraction <= 1.0)) {
    throw ConfigError("training.slice_fraction must lie in (0, 1]");
  }
  if (sweep.depths.empty() || sweep.lrs.empty() || sweep.a_values.empty() || sweep.seeds < 1) {
    throw ConfigError("sweep grids must be nonempty and seeds >= 1");
  }
  for (int d : sweep.depths) {
    if (d < 1) throw ConfigError("sweep.depths entries must be >= 1");
  }
  for (double v : sweep.lrs) {
    if (!(v > 0.0)) throw ConfigError("sweep.lrs entries must be > 0");
  }
  for (double v : sweep.a_values) {
    if (!(v > 0.0)) throw ConfigError("sweep.a_values entries must be > 0");
  }
  if (limit.depth < 1 || limit.steps < 1) throw ConfigError("limit.depth and limit.steps must be >= 1");
}

HarnessConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  HarnessConfig c;
  Section root(j, "root");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.get("out", c.out);
  for (const char* s : {"parametrization", "optimizer", "network", "dataset", "training", "sweep", "limit", "diagnostics"}) {
    json ignore;
    root.get(s, ignore);
  }
  root.finish();

  Section p(sub(j, "parametrization"), "parametrization");
  p.get("alpha", c.param.alpha);
  p.get("gamma", c.param.gamma);
  p.get("delta", c.param.delta);
  p.get("a", c.param.a);
  p.get("eta", c.param.eta);
  p.get("base_depth", c.param.base_depth);
  p.get("c_input", c.param.input.c);
  p.get("c_hidden", c.param.hidden.c);
  p.get("c_output", c.param.output.c);
  p.get("d_input", c.param.input.d);
  p.get("d_hidden", c.param.hidden.d);
  p.get("d_output", c.param.output.d);
  p.finish();

  Section o(sub(j, "optimizer"), "optimizer");
  o.get_enum("optimizer", c.rule.kind, parse_rule_kind);
  o.get("adam_beta1", c.rule.beta1);
  o.get("adam_beta2", c.rule.beta2);
  o.get("adam_eps", c.rule.epsilon);
  o.finish();

  Section n(sub(j, "network"), "network");
  n.get("d_in", c.net.d_in);
  n.get("d_out", c.net.d_out);
  n.get("n", c.net.n);
  n.get("depth", c.net.L);
  n.get("block_depth", c.net.k);
  n.get_enum("phi", c.net.phi, parse_nonlinearity);
  n.get_enum("placement", c.net.placement, sim::parse_placement);
  n.get("mean_subtraction", c.net.mean_subtraction);
  n.get("pre_layernorm", c.net.pre_layernorm);
  n.get("train_io", c.net.train_io);
  n.get_enum("loss", c.net.loss, sim::parse_loss);
  n.finish();

  Section d(sub(j, "dataset"), "dataset");
  d.get_enum("kind", c.dataset.kind, parse_dataset_kind);
  d.get_enum("task", c.dataset.task, parse_task_kind);
  d.get("d_in", c.dataset.d_in);
  d.get("size", c.dataset.size);
  d.get("seed", c.dataset.seed);
  d.get("noise", c.dataset.noise);
  d.get("blob_separation", c.dataset.blob_separation);
  d.get("image_path", c.dataset.image_path);
  d.get("label_path", c.dataset.label_path);
  d.get("norm_mean", c.dataset.norm_mean);
  d.get("norm_std", c.dataset.norm_std);
  d.get("scalar_projection", c.dataset.scalar_projection);
  d.get("projection_seed", c.dataset.projection_seed);
  d.finish();

  Section t(sub(j, "training"), "training");
  t.get("steps", c.training.steps);
  t.get("batch_size", c.training.batch_size);
  t.get("slice_fraction", c.training.slice_fraction);
  t.finish();

  Section s(sub(j, "sweep"), "sweep");
  s.get("depths", c.sweep.depths);
  s.get("lrs", c.sweep.lrs);
  s.get("a_values", c.sweep.a_values);
  s.get("seeds", c.sweep.seeds);
  s.get_enum("experiment", c.sweep.experiment, parse_experiment_kind);
  s.finish();

  Section l(sub(j, "limit"), "limit");
  l.get("depth", c.limit.depth);
  l.get("steps", c.limit.steps);
  l.get("alpha", c.limit.alpha);
  l.get("gamma", c.limit.gamma);
  l.get("eta", c.limit.eta);
  l.get_enum("precision", c.limit.precision, tp::parse_precision);
  l.get_enum("phi", c.limit.phi, parse_nonlinearity);
  l.get_enum("variant", c.limit.variant, tp::parse_cross_variant);
  l.get("quadrature_order", c.limit.quadrature_order);
  l.get("inputs", c.limit.inputs);
  l.get("targets", c.limit.targets);
  l.get("max_depth", c.limit.max_depth);
  l.get("max_steps", c.limit.max_steps);
  l.get("dump_tables", c.limit.dump_tables);
  l.finish();

  Section g(sub(j, "diagnostics"), "diagnostics");
  g.get("lambda", c.diagnostics.lambda);
  g.get("trials", c.diagnostics.trials);
  g.get("depths", c.diagnostics.depths);
  g.get("quantile", c.diagnostics.quantile);
  g.get_enum("warmup_rule", c.diagnostics.warmup_rule, parse_rule_kind);
  g.finish();

  c.validate();
  return c;
}

json config_to_json(const HarnessConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out;
  j["parametrization"] = {{"alpha", c.param.alpha},         {"gamma", c.param.gamma},
                          {"delta", c.param.delta},         {"a", c.param.a},
                          {"eta", c.param.eta},             {"base_depth", c.param.base_depth},
                          {"c_input", c.param.input.c},     {"c_hidden", c.param.hidden.c},
                          {"c_output", c.param.output.c},   {"d_input", c.param.input.d},
                          {"d_hidden", c.param.hidden.d},   {"d_output", c.param.output.d}};
  j["optimizer"] = {{"optimizer", std::string(to_string(c.rule.kind))},
                    {"adam_beta1", c.rule.beta1},
                    {"adam_beta2", c.rule.beta2},
                    {"adam_eps", c.rule.epsilon}};
  j["network"] = {{"d_in", c.net.d_in},
                  {"d_out", c.net.d_out},
                  {"n", c.net.n},
                  {"depth", c.net.L},
                  {"block_depth", c.net.k},
                  {"phi", std::string(to_string(c.net.phi))},
                  {"placement", std::string(sim::to_string(c.net.placement))},
                  {"mean_subtraction", c.net.mean_subtraction},
                  {"pre_layernorm", c.net.pre_layernorm},
                  {"train_io", c.net.train_io},
                  {"loss", std::string(sim::to_string(c.net.loss))}};
  j["dataset"] = {{"kind", std::string(to_string(c.dataset.kind))},
                  {"task", std::string(to_string(c.dataset.task))},
                  {"d_in", c.dataset.d_in},
                  {"size", c.dataset.size},
                  {"seed", c.dataset.seed},
                  {"noise", c.dataset.noise},
                  {"blob_separation", c.dataset.blob_separation},
                  {"image_path", c.dataset.image_path},
                  {"label_path", c.dataset.label_path},
                  {"norm_mean", c.dataset.norm_mean},
                  {"norm_std", c.dataset.norm_std},
                  {"scalar_projection", c.dataset.scalar_projection},
                  {"projection_seed", c.dataset.projection_seed}};
  j["training"] = {{"steps", c.training.steps},
                   {"batch_size", c.training.batch_size},
                   {"slice_fraction", c.training.slice_fraction}};
  j["sweep"] = {{"depths", c.sweep.depths},
                {"lrs", c.sweep.lrs},
                {"a_values", c.sweep.a_values},
                {"seeds", c.sweep.seeds},
                {"experiment", std::string(to_string(c.sweep.experiment))}};
  j["limit"] = {{"depth", c.limit.depth},
                {"steps", c.limit.steps},
                {"alpha", c.limit.alpha},
                {"gamma", c.limit.gamma},
                {"eta", c.limit.eta},
                {"precision", std::string(tp::to_string(c.limit.precision))},
                {"phi", std::string(to_string(c.limit.phi))},
                {"variant", std::string(tp::to_string(c.limit.variant))},
                {"quadrature_order", c.limit.quadrature_order},
                {"inputs", c.limit.inputs},
                {"targets", c.limit.targets},
                {"max_depth", c.limit.max_depth},
                {"max_steps", c.limit.max_steps},
                {"dump_tables", c.limit.dump_tables}};
  j["diagnostics"] = {{"lambda", c.diagnostics.lambda},
                      {"trials", c.diagnostics.trials},
                      {"depths", c.diagnostics.depths},
                      {"quantile", c.diagnostics.quantile},
                      {"warmup_rule", std::string(to_string(c.diagnostics.warmup_rule))}};
  return j;
}

HarnessConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void limit_streams(const HarnessConfig& c, std::vector<double>& xi, std::vector<double>& y) {
  const int T = c.limit.steps;
  if (!c.limit.inputs.empty() || !c.limit.targets.empty()) {
    if (static_cast<int>(c.limit.inputs.size()) != T || static_cast<int>(c.limit.targets.size()) != T) {
      throw ConfigError("limit.inputs and limit.targets must each have limit.steps = " + std::to_string(T) + " entries");
    }
    xi = c.limit.inputs;
    y = c.limit.targets;
    return;
  }
  DatasetSpec spec = c.dataset;
  if (spec.kind == DatasetKind::Synthetic) {
    spec.d_in = 1;
    spec.task = TaskKind::Regression;
    spec.size = std::max(spec.size, T);
  } else {
    spec.scalar_projection = true;
  }
  const Dataset ds = make_dataset(spec);
  if (ds.size() < T) throw ConfigError("dataset has fewer samples than limit.steps");
  xi.resize(T);
  y.resize(T);
  for (int t = 0; t < T; ++t) {
    xi[t] = ds.inputs(0, t);
    y[t] = ds.targets(0, t);
  }
}

}  // namespace depthmup

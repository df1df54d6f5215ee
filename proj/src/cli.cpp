#include "depthmup/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "depthmup/checkpoint.hpp"
#include "depthmup/config.hpp"
#include "depthmup/csv.hpp"
#include "depthmup/diagnostics.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/experiments.hpp"
#include "depthmup/rng.hpp"
#include "depthmup/sweep.hpp"
#include "depthmup/tp_linear.hpp"
#include "depthmup/tp_nonlinear.hpp"
#include "depthmup/version.hpp"

namespace depthmup {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Values of the per-subcommand override flags. Each flag is registered only on the
// subcommands where it has a meaning, and always targets one config key there.
struct Overrides {
  std::optional<int> depth;
  std::optional<double> alpha;
  std::optional<double> gamma;
  std::optional<double> lr;
  std::optional<int> steps;
  std::optional<std::string> phi;
  std::optional<int> block_depth;
  std::optional<std::string> rule;
};

std::string path_in(const HarnessConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

void prepare_out(const HarnessConfig& c) { fs::create_directories(c.out); }

tp::LimitConfig limit_config(const HarnessConfig& c) {
  tp::LimitConfig lc;
  lc.L = c.limit.depth;
  lc.T = c.limit.steps;
  limit_streams(c, lc.xi, lc.y);
  lc.alpha = c.limit.alpha;
  lc.gamma = c.limit.gamma;
  lc.eta = c.limit.eta;
  lc.precision = c.limit.precision;
  lc.max_L = c.limit.max_depth;
  lc.max_T = c.limit.max_steps;
  return lc;
}

void write_manifest(const HarnessConfig& c, const std::string& started, json extra = json::object()) {
  json m = make_manifest(c, started, utc_timestamp());
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_json(path_in(c, "manifest.json"), m);
}

void emit_limit(const HarnessConfig& c, const tp::LimitResult& r, const std::string& started, std::ostream& out) {
  prepare_out(c);
  tp::write_rms_csv(path_in(c, "rms.csv"), r);
  tp::write_kernel_csv(path_in(c, "kernel.csv"), r);
  tp::write_trace_csv(path_in(c, "trace.csv"), r);
  if (c.limit.dump_tables) tp::write_binary_dump(path_in(c, "tables.bin"), r);
  json streams = {{"xi", r.cfg.xi}, {"y", r.cfg.y}};
  write_manifest(c, started, {{"streams", streams}});
  out << "wrote " << path_in(c, "rms.csv") << "\n";
  for (int t = 0; t < r.cfg.T; ++t) {
    out << "step " << t + 1 << " f " << format_double(r.trace.f_ring[t]) << " rms(L) "
        << format_double(r.trace.layer_rms[t][r.cfg.L]) << "\n";
  }
}

void cmd_limit_linear(const HarnessConfig& c, const std::string& started, std::ostream& out) {
  emit_limit(c, tp::run_generalized(limit_config(c)), started, out);
}

void cmd_limit_nonlinear(const HarnessConfig& c, const std::string& started, std::ostream& out) {
  tp::NonlinearConfig nc;
  nc.limit = limit_config(c);
  nc.phi = c.limit.phi;
  nc.variant = c.limit.variant;
  nc.quadrature_order = c.limit.quadrature_order;
  emit_limit(c, tp::run_nonlinear(nc), started, out);
}

void cmd_train(const HarnessConfig& c, const std::string& started, std::ostream& out) {
  const Dataset data = make_dataset(c.dataset);
  sim::NetConfig net = c.net;
  net.d_in = data.d_in();
  net.d_out = data.d_out();
  net.validate();
  prepare_out(c);
  sim::NetState state = sim::init(net, c.seed, true);
  const std::uint64_t batch_seed = derive_seed(c.seed, {0xBA7C});
  std::ofstream log(path_in(c, "steps.csv"));
  log << sim::step_log_csv_header() << "\n";
  std::vector<double> losses;
  for (int s = 0; s < c.training.steps; ++s) {
    const sim::StepLog sl = sim::train_step(state, net, c.param, c.rule, data.minibatch(s, c.training.batch_size, batch_seed));
    log << sim::step_log_csv_row(sl) << "\n";
    losses.push_back(sl.loss);
  }
  sim::save_checkpoint(path_in(c, "checkpoint.bin"), {config_to_json(c).dump(), net, state});
  const double fl = final_slice_mean(losses, c.training.slice_fraction);
  write_manifest(c, started, {{"final_slice_loss", fl}, {"batch_seed", batch_seed}});
  out << "final-slice loss " << format_double(fl) << "\n";
}

void cmd_sweep(const HarnessConfig& c, const std::string&, std::ostream& out) {
  prepare_out(c);
  const SweepResult r = run_sweep(c);
  write_sweep_csv(path_in(c, "sweep.csv"), r);
  json m = r.manifest;
  int failed = 0;
  for (const auto& row : r.rows) failed += row.error.empty() ? 0 : 1;
  if (c.sweep.depths.size() >= 2 && c.sweep.lrs.size() >= 2) {
    const auto grid = mean_loss_grid(r, c.sweep.depths, static_cast<int>(c.sweep.lrs.size()), 0);
    const diag::TransferShift ts = diag::transfer_shift(grid, c.sweep.lrs);
    m["transfer"] = {{"argmin_lr_index", ts.argmin}, {"max_shift", ts.max_shift}, {"total_shift", ts.total_shift}};
    for (std::size_t i = 0; i < c.sweep.depths.size(); ++i) {
      out << "depth " << c.sweep.depths[i] << " argmin lr index " << ts.argmin[i] << "\n";
    }
    out << "max shift " << ts.max_shift << " total shift " << ts.total_shift << "\n";
  }
  write_json(path_in(c, "manifest.json"), m);
  out << "wrote " << r.rows.size() << " rows (" << failed << " failed) to " << path_in(c, "sweep.csv") << "\n";
}

void cmd_diversity(const HarnessConfig& c, const std::string& started, std::ostream& out) {
  exp::DiversitySpec s;
  s.n = c.net.n;
  s.L = c.net.L;
  s.phi = c.net.phi;
  s.steps = c.training.steps;
  s.batch = c.training.batch_size;
  s.d_in = c.dataset.d_in;
  s.lr = c.param.eta;
  s.alpha = c.param.alpha;
  s.gamma = c.param.gamma;
  s.lambda = c.diagnostics.lambda;
  s.seed = c.seed;
  const exp::DiversityRun r = exp::diversity_run(s);
  prepare_out(c);
  diag::write_diversity_csv(path_in(c, "diversity.csv"), r.report);
  diag::write_diversity_json(path_in(c, "diversity.json"), r.report);
  write_manifest(c, started, {{"final_loss", r.losses.back()}});
  for (const auto& w : r.report.warnings) out << "warning: " << w << "\n";
  out << "d(eps) exponent " << format_double(r.report.fitted_exponent) << " kappa " << format_double(r.report.kappa_hat)
      << "\n";
}

void cmd_warmup(const HarnessConfig& c, const std::string& started, std::ostream& out) {
  const auto kind = c.diagnostics.warmup_rule;
  const diag::WarmupResult r = diag::warmup_al_scaling(kind, c.diagnostics.depths, c.diagnostics.trials, c.seed);
  const diag::Expectation e{kind == RuleKind::SGD ? 1.0 : 2.0, 0.15};
  prepare_out(c);
  diag::write_warmup_csv(path_in(c, "warmup.csv"), r);
  diag::write_fit_json(path_in(c, "warmup.json"), "warmup_" + std::string(to_string(kind)), r.fit, &e);
  write_manifest(c, started);
  out << to_string(kind) << " exponent " << format_double(r.fit.exponent) << " (expected " << e.target << " +- "
      << e.tolerance << ")\n";
}

void cmd_classify(const HarnessConfig& c, const std::string&, std::ostream& out) {
  out << to_string(classify_region(c.param.alpha, c.param.gamma)) << "\n";
}

void cmd_vkernels(const HarnessConfig& c, const std::string& started, std::ostream& out) {
  std::vector<tp::GaussPair> grid;
  for (double c11 : {0.5, 1.0, 2.0}) {
    for (double c22 : {0.5, 1.0, 2.0}) {
      for (int k = -4; k <= 4; ++k) grid.push_back({c11, c22, 0.24 * k * std::sqrt(c11 * c22)});
    }
  }
  prepare_out(c);
  tp::write_vkernel_table(path_in(c, "vkernels.csv"),
                          tp::VKernelSet(c.limit.phi, c.limit.variant, c.limit.quadrature_order), grid);
  write_manifest(c, started);
  out << "wrote " << grid.size() << " rows to " << path_in(c, "vkernels.csv") << "\n";
}

void cmd_slope(const HarnessConfig& c, const std::string&, std::ostream& out) {
  prepare_out(c);
  const exp::SlopeReport r = exp::slope_sweep(c, c.diagnostics.quantile);
  write_sweep_csv(path_in(c, "sweep.csv"), r.sweep);
  {
    CsvWriter w(path_in(c, "slope_grid.csv"), {"lr", "a", "mean_loss"});
    for (std::size_t i = 0; i < c.sweep.lrs.size(); ++i) {
      for (std::size_t j = 0; j < c.sweep.a_values.size(); ++j) w.row({c.sweep.lrs[i], c.sweep.a_values[j], r.losses[i][j]});
    }
  }
  json m = r.sweep.manifest;
  m["slope"] = {{"slope", r.slope.slope}, {"selected", r.slope.selected}, {"quantile", c.diagnostics.quantile}};
  write_json(path_in(c, "manifest.json"), m);
  out << "depth " << c.sweep.depths[0] << " sublevel slope " << format_double(r.slope.slope) << " (" << r.slope.selected
      << " cells)\n";
}

using Handler = std::function<void(const HarnessConfig&, const std::string&, std::ostream&)>;

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depth-scaled residual networks: finite-width training, infinite-width limits and diagnostics.",
               "depthmup"};
  app.set_version_flag("--version", kVersion);
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON configuration file (nested sections; flags win over its keys)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (key: out)");
  app.add_option("--seed", seed, "master seed (key: seed)");
  app.add_option("--threads", threads, "worker threads for sweeps and Monte Carlo (key: threads)")
      ->check(CLI::PositiveNumber);

  Overrides ov;
  std::vector<std::pair<CLI::App*, Handler>> subs;
  std::vector<std::function<void(HarnessConfig&)>> appliers;

  // Registers one override flag on `sub`, bound to the config key written by `set`.
  auto flag = [&](CLI::App* sub, const std::string& name, auto& slot, const std::string& key, auto set) {
    sub->add_option(name, slot, "override " + key);
    appliers.push_back([sub, &slot, set](HarnessConfig& c) {
      if (sub->parsed() && slot) set(c, *slot);
    });
  };

  auto* limit_linear = app.add_subcommand("limit-linear", "infinite-width limit of the linear resnet (CSV of layer RMS per step)");
  flag(limit_linear, "--depth", ov.depth, "limit.depth", [](HarnessConfig& c, int v) { c.limit.depth = v; });
  flag(limit_linear, "--alpha", ov.alpha, "limit.alpha", [](HarnessConfig& c, double v) { c.limit.alpha = v; });
  flag(limit_linear, "--gamma", ov.gamma, "limit.gamma", [](HarnessConfig& c, double v) { c.limit.gamma = v; });
  flag(limit_linear, "--lr", ov.lr, "limit.eta", [](HarnessConfig& c, double v) { c.limit.eta = v; });
  flag(limit_linear, "--steps", ov.steps, "limit.steps", [](HarnessConfig& c, int v) { c.limit.steps = v; });
  subs.emplace_back(limit_linear, cmd_limit_linear);

  auto* limit_nonlinear = app.add_subcommand("limit-nonlinear", "infinite-width Depth-muP limit with a nonlinearity and mean subtraction");
  flag(limit_nonlinear, "--depth", ov.depth, "limit.depth", [](HarnessConfig& c, int v) { c.limit.depth = v; });
  flag(limit_nonlinear, "--lr", ov.lr, "limit.eta", [](HarnessConfig& c, double v) { c.limit.eta = v; });
  flag(limit_nonlinear, "--steps", ov.steps, "limit.steps", [](HarnessConfig& c, int v) { c.limit.steps = v; });
  flag(limit_nonlinear, "--phi", ov.phi, "limit.phi",
       [](HarnessConfig& c, const std::string& v) { c.limit.phi = parse_nonlinearity(v); });
  subs.emplace_back(limit_nonlinear, cmd_limit_nonlinear);

  // Subcommands that train finite networks share the network and parametrization keys.
  auto net_flags = [&](CLI::App* sub, bool with_depth) {
    if (with_depth) flag(sub, "--depth", ov.depth, "network.depth", [](HarnessConfig& c, int v) { c.net.L = v; });
    flag(sub, "--alpha", ov.alpha, "parametrization.alpha", [](HarnessConfig& c, double v) { c.param.alpha = v; });
    flag(sub, "--gamma", ov.gamma, "parametrization.gamma", [](HarnessConfig& c, double v) { c.param.gamma = v; });
    flag(sub, "--phi", ov.phi, "network.phi",
         [](HarnessConfig& c, const std::string& v) { c.net.phi = parse_nonlinearity(v); });
    flag(sub, "--block-depth", ov.block_depth, "network.block_depth", [](HarnessConfig& c, int v) { c.net.k = v; });
    flag(sub, "--steps", ov.steps, "training.steps", [](HarnessConfig& c, int v) { c.training.steps = v; });
  };

  auto* train = app.add_subcommand("train", "train one finite-width resnet; writes per-step logs and a checkpoint");
  net_flags(train, true);
  flag(train, "--lr", ov.lr, "parametrization.eta", [](HarnessConfig& c, double v) { c.param.eta = v; });
  subs.emplace_back(train, cmd_train);

  auto* sweep = app.add_subcommand("sweep", "grid over depth, learning rate, branch constant and seed");
  net_flags(sweep, false);
  flag(sweep, "--depth", ov.depth, "sweep.depths (single depth)", [](HarnessConfig& c, int v) { c.sweep.depths = {v}; });
  flag(sweep, "--lr", ov.lr, "sweep.lrs (single value)", [](HarnessConfig& c, double v) { c.sweep.lrs = {v}; });
  subs.emplace_back(sweep, cmd_sweep);

  auto* diversity = app.add_subcommand("diversity", "train on two-blob classification and fit the feature diversity exponent");
  net_flags(diversity, true);
  flag(diversity, "--lr", ov.lr, "parametrization.eta", [](HarnessConfig& c, double v) { c.param.eta = v; });
  subs.emplace_back(diversity, cmd_diversity);

  auto* warmup = app.add_subcommand("warmup", "single-neuron warm-up model: E[A_L^2] versus depth");
  flag(warmup, "--rule", ov.rule, "diagnostics.warmup_rule (sgd|signsgd)",
       [](HarnessConfig& c, const std::string& v) { c.diagnostics.warmup_rule = parse_rule_kind(v); });
  subs.emplace_back(warmup, cmd_warmup);

  auto* classify = app.add_subcommand("classify", "print the region of an (alpha, gamma) depth parametrization");
  flag(classify, "--alpha", ov.alpha, "parametrization.alpha", [](HarnessConfig& c, double v) { c.param.alpha = v; });
  flag(classify, "--gamma", ov.gamma, "parametrization.gamma", [](HarnessConfig& c, double v) { c.param.gamma = v; });
  subs.emplace_back(classify, cmd_classify);

  auto* vkernels = app.add_subcommand("vkernels", "tabulate the Gaussian V-kernels of a nonlinearity");
  flag(vkernels, "--phi", ov.phi, "limit.phi",
       [](HarnessConfig& c, const std::string& v) { c.limit.phi = parse_nonlinearity(v); });
  subs.emplace_back(vkernels, cmd_vkernels);

  auto* slope = app.add_subcommand("slope", "learning rate x branch constant sweep at one depth and its sublevel slope");
  net_flags(slope, false);
  flag(slope, "--depth", ov.depth, "sweep.depths (single depth)", [](HarnessConfig& c, int v) { c.sweep.depths = {v}; });
  subs.emplace_back(slope, cmd_slope);

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    const std::string started = utc_timestamp();
    HarnessConfig c = config_path.empty() ? HarnessConfig{} : load_config(config_path);
    if (out_dir) c.out = *out_dir;
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    for (auto& apply : appliers) apply(c);
    c.validate();
    for (auto& [sub, handler] : subs) {
      if (sub->parsed()) handler(c, started, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace depthmup

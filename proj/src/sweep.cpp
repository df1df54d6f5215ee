#include "depthmup/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <thread>
#include <tuple>

#include "depthmup/csv.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/resnet_sim.hpp"
#include "depthmup/rng.hpp"
#include "depthmup/tp_linear.hpp"
#include "depthmup/tp_nonlinear.hpp"
#include "depthmup/version.hpp"

namespace depthmup {

using nlohmann::json;

std::uint64_t cell_seed(std::uint64_t master, int depth, int lr_index, int a_index, int seed_index) {
  return derive_seed(master, {static_cast<std::uint64_t>(depth), static_cast<std::uint64_t>(lr_index),
                              static_cast<std::uint64_t>(a_index), static_cast<std::uint64_t>(seed_index)});
}

double final_slice_mean(const std::vector<double>& losses, double fraction) {
  if (losses.empty()) throw ContractViolation("final_slice_mean: no losses");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("slice fraction must lie in (0, 1]");
  const auto n = losses.size();
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  double s = 0.0;
  for (std::size_t i = n - k; i < n; ++i) s += losses[i];
  return s / static_cast<double>(k);
}

std::vector<double> train_losses(const HarnessConfig& c, const Dataset& data, int depth, double lr, double a,
                                 std::uint64_t seed) {
  sim::NetConfig net = c.net;
  net.L = depth;
  net.d_in = data.d_in();
  net.d_out = data.d_out();
  Parametrization p = c.param;
  p.eta = lr;
  p.a = a;
  net.validate();
  p.validate();

  sim::NetState state = sim::init(net, seed);
  const std::uint64_t batch_seed = derive_seed(seed, {0xBA7C});
  std::vector<double> losses;
  losses.reserve(c.training.steps);
  for (int s = 0; s < c.training.steps; ++s) {
    const sim::Batch b = data.minibatch(s, c.training.batch_size, batch_seed);
    const sim::StepLog log = sim::train_step(state, net, p, c.rule, b);
    if (!std::isfinite(log.loss)) throw NumericalError("non-finite loss at step " + std::to_string(s), net.L);
    losses.push_back(log.loss);
  }
  return losses;
}

std::vector<double> limit_losses(const HarnessConfig& c, int depth, double lr, double a) {
  if (a != 1.0) throw ConfigError("limit experiments support only a = 1");
  tp::LimitConfig lc;
  lc.L = depth;
  lc.T = c.limit.steps;
  limit_streams(c, lc.xi, lc.y);
  lc.alpha = c.limit.alpha;
  lc.gamma = c.limit.gamma;
  lc.eta = lr;
  lc.precision = c.limit.precision;
  lc.max_L = c.limit.max_depth;
  lc.max_T = c.limit.max_steps;

  tp::LimitResult r;
  if (c.limit.phi == Nonlinearity::Identity) {
    r = tp::run_generalized(lc);
  } else {
    tp::NonlinearConfig nc;
    nc.limit = lc;
    nc.phi = c.limit.phi;
    nc.variant = c.limit.variant;
    nc.quadrature_order = c.limit.quadrature_order;
    r = tp::run_nonlinear(nc);
  }
  std::vector<double> losses(lc.T);
  for (int t = 0; t < lc.T; ++t) {
    const double d = r.trace.f_ring[t] - lc.y[t];
    losses[t] = 0.5 * d * d;
  }
  return losses;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json make_manifest(const HarnessConfig& c, const std::string& started, const std::string& finished) {
  json m;
  m["version"] = kVersion;
  m["schema_version"] = kSchemaVersion;
  m["master_seed"] = c.seed;
  m["config"] = config_to_json(c);
  m["started_utc"] = started;
  m["finished_utc"] = finished;
  m["fp_environment"] =
      "IEEE-754 binary64, round-to-nearest, no fast-math; results are bit-identical for a fixed build "
      "and platform, independent of the thread count";
  return m;
}

SweepResult run_sweep(const HarnessConfig& c) {
  c.validate();
  const std::string started = utc_timestamp();
  const auto& g = c.sweep;

  std::vector<SweepRow> rows;
  for (int depth : g.depths) {
    for (int i = 0; i < static_cast<int>(g.lrs.size()); ++i) {
      for (int j = 0; j < static_cast<int>(g.a_values.size()); ++j) {
        for (int s = 0; s < g.seeds; ++s) {
          SweepRow r;
          r.depth = depth;
          r.lr_index = i;
          r.lr = g.lrs[i];
          r.a_index = j;
          r.a = g.a_values[j];
          r.seed_index = s;
          r.seed = cell_seed(c.seed, depth, i, j, s);
          rows.push_back(r);
        }
      }
    }
  }

  std::optional<Dataset> data;
  if (g.experiment == ExperimentKind::Train) data = make_dataset(c.dataset);

  // Rows are claimed from a shared counter, so the execution order varies with the thread
  // count; each row writes only its own slot.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) {
      SweepRow& r = rows[k];
      try {
        const std::vector<double> losses = g.experiment == ExperimentKind::Train
                                               ? train_losses(c, *data, r.depth, r.lr, r.a, r.seed)
                                               : limit_losses(c, r.depth, r.lr, r.a);
        r.final_loss = final_slice_mean(losses, c.training.slice_fraction);
      } catch (const std::exception& e) {
        r.final_loss = std::numeric_limits<double>::quiet_NaN();
        r.error = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(c.threads, static_cast<int>(rows.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::sort(rows.begin(), rows.end(), [](const SweepRow& x, const SweepRow& y) {
    return std::tie(x.depth, x.lr_index, x.a_index, x.seed_index) <
           std::tie(y.depth, y.lr_index, y.a_index, y.seed_index);
  });

  SweepResult out;
  out.rows = std::move(rows);
  out.manifest = make_manifest(c, started, utc_timestamp());
  json seeds = json::array();
  for (const auto& r : out.rows) {
    seeds.push_back({{"depth", r.depth}, {"lr_index", r.lr_index}, {"a_index", r.a_index},
                     {"seed_index", r.seed_index}, {"seed", r.seed}});
  }
  out.manifest["cell_seeds"] = std::move(seeds);
  out.manifest["seed_derivation"] =
      "derive_seed(master, {depth, lr_index, a_index, seed_index}); batch stream derive_seed(cell, {0xBA7C})";
  out.manifest["slice_fraction"] = c.training.slice_fraction;
  if (data && c.dataset.scalar_projection) out.manifest["projection_seed"] = c.dataset.projection_seed;
  return out;
}

std::string sweep_csv_header() {
  return "depth,lr_index,lr,a_index,a,seed_index,seed,final_loss,error";
}

std::string sweep_csv_string(const SweepResult& r) {
  std::string out = sweep_csv_header() + "\n";
  for (const auto& row : r.rows) {
    std::string err = row.error;
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += csv_join({row.depth, row.lr_index, row.lr, row.a_index, row.a, row.seed_index, std::to_string(row.seed),
                     row.final_loss, err});
    out += '\n';
  }
  return out;
}

void write_sweep_csv(const std::string& path, const SweepResult& r) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  os << sweep_csv_string(r);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  os << j.dump(2) << '\n';
}

std::vector<std::vector<double>> mean_loss_grid(const SweepResult& r, const std::vector<int>& depths, int n_lrs,
                                                int a_index) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> sum(depths.size(), std::vector<double>(n_lrs, 0.0));
  std::vector<std::vector<int>> finite(depths.size(), std::vector<int>(n_lrs, 0));
  std::vector<std::vector<int>> total(depths.size(), std::vector<int>(n_lrs, 0));
  for (const auto& row : r.rows) {
    if (row.a_index != a_index) continue;
    auto it = std::find(depths.begin(), depths.end(), row.depth);
    if (it == depths.end() || row.lr_index >= n_lrs) continue;
    const auto d = static_cast<std::size_t>(it - depths.begin());
    ++total[d][row.lr_index];
    if (std::isfinite(row.final_loss)) {
      sum[d][row.lr_index] += row.final_loss;
      ++finite[d][row.lr_index];
    }
  }
  std::vector<std::vector<double>> out(depths.size(), std::vector<double>(n_lrs, nan));
  for (std::size_t d = 0; d < depths.size(); ++d) {
    for (int i = 0; i < n_lrs; ++i) {
      if (finite[d][i] == 0) continue;
      out[d][i] = finite[d][i] < total[d][i] ? inf : sum[d][i] / finite[d][i];
    }
  }
  return out;
}

}  // namespace depthmup

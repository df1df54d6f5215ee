#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthmup/dataset.hpp"
#include "depthmup/entrywise_optim.hpp"
#include "depthmup/parametrization.hpp"
#include "depthmup/resnet_sim.hpp"
#include "depthmup/tp_nonlinear.hpp"
#include "depthmup/tp_tables.hpp"

namespace depthmup {

struct TrainingConfig {
  int steps = 200;
  int batch_size = 32;
  double slice_fraction = 0.1;  // final-slice length for the reported mean loss
};

enum class ExperimentKind { Train, Limit };
std::string_view to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view s);

struct SweepGrid {
  std::vector<int> depths{8, 16, 32, 64};
  std::vector<double> lrs{1e-3};
  std::vector<double> a_values{1.0};
  int seeds = 1;
  ExperimentKind experiment = ExperimentKind::Train;
};

struct LimitSection {
  int depth = 64;
  int steps = 10;
  double alpha = 0.5;
  double gamma = 0.5;
  double eta = 1.0;
  tp::Precision precision = tp::Precision::F64;
  Nonlinearity phi = Nonlinearity::ReLU;
  tp::CrossVariant variant = tp::CrossVariant::PhiPrimePairing;
  int quadrature_order = 64;
  std::vector<double> inputs;   // empty: drawn from the dataset section (d_in must be 1)
  std::vector<double> targets;
  int max_depth = 512;
  int max_steps = 10;
  bool dump_tables = false;  // write the Gamma/C binary dump next to the CSVs
};

struct DiagnosticsSection {
  double lambda = 0.0;
  int trials = 10000;
  std::vector<int> depths{8, 16, 32, 64, 128, 256};
  double quantile = 0.1;
  RuleKind warmup_rule = RuleKind::SGD;
};

struct HarnessConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out = "out";
  Parametrization param = depth_mup_preset(RuleKind::Adam);
  UpdateRule rule{RuleKind::Adam};
  sim::NetConfig net;
  DatasetSpec dataset;
  TrainingConfig training;
  SweepGrid sweep;
  LimitSection limit;
  DiagnosticsSection diagnostics;

  void validate() const;
};

/// Unknown keys are rejected so typos surface as errors instead of silent defaults.
HarnessConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const HarnessConfig& c);
HarnessConfig load_config(const std::string& path);

/// Scalar input and target streams for the limit engine: explicit lists from the limit
/// section, else the first `steps` samples of a d_in = 1 dataset.
void limit_streams(const HarnessConfig& c, std::vector<double>& xi, std::vector<double>& y);

}  // namespace depthmup

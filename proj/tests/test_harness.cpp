#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "depthmup/config.hpp"
#include "depthmup/csv.hpp"
#include "depthmup/dataset.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/experiments.hpp"
#include "depthmup/idx.hpp"
#include "depthmup/sweep.hpp"

using namespace depthmup;

namespace {

std::string fixture(const std::string& name) { return std::string(FIXTURE_DIR) + "/" + name; }

HarnessConfig tiny_config() {
  HarnessConfig c;
  c.net.n = 16;
  c.net.d_in = 4;
  c.net.d_out = 1;
  c.dataset.d_in = 4;
  c.dataset.size = 64;
  c.training.steps = 5;
  c.training.batch_size = 8;
  c.sweep.depths = {2};
  c.sweep.lrs = {1e-2};
  c.sweep.a_values = {1.0};
  c.sweep.seeds = 1;
  return c;
}

}  // namespace

TEST_CASE("config round trip") {
  HarnessConfig c = tiny_config();
  c.seed = 99;
  c.sweep.lrs = {1e-3, 2e-3};
  c.limit.inputs = {1.0, -0.5};
  c.limit.targets = {0.25, 0.0};
  const nlohmann::json j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
  CHECK(config_from_json(j).seed == 99);
}

TEST_CASE("config rejects unknown keys and bad values") {
  nlohmann::json j = config_to_json(HarnessConfig{});
  j["network"]["widht"] = 3;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);

  nlohmann::json k = config_to_json(HarnessConfig{});
  k["bogus_section"] = nlohmann::json::object();
  CHECK_THROWS_AS(config_from_json(k), ConfigError);

  nlohmann::json m = config_to_json(HarnessConfig{});
  m["network"]["phi"] = "tanh";
  CHECK_THROWS_AS(config_from_json(m), ConfigError);

  nlohmann::json t = config_to_json(HarnessConfig{});
  t["threads"] = 0;
  CHECK_THROWS_AS(config_from_json(t), ConfigError);
}

TEST_CASE("config file with comments") {
  const auto path = (std::filesystem::temp_directory_path() / "depthmup_cfg.json").string();
  {
    std::ofstream os(path);
    os << "{\n  // master seed\n  \"seed\": 5,\n  \"network\": {\"n\": 32}\n}\n";
  }
  const HarnessConfig c = load_config(path);
  CHECK(c.seed == 5);
  CHECK(c.net.n == 32);
  std::filesystem::remove(path);
}

TEST_CASE("limit streams") {
  HarnessConfig c;
  c.limit.steps = 3;
  c.limit.inputs = {1, 2, 3};
  c.limit.targets = {0, 0, 1};
  std::vector<double> xi, y;
  limit_streams(c, xi, y);
  CHECK(xi == std::vector<double>{1, 2, 3});
  CHECK(y == std::vector<double>{0, 0, 1});

  HarnessConfig d;
  d.limit.steps = 4;
  d.dataset.d_in = 1;
  limit_streams(d, xi, y);
  CHECK(xi.size() == 4);
  CHECK(y.size() == 4);
}

TEST_CASE("idx fixtures") {
  const IdxDataset ds = load_idx(fixture("tiny-images.idx3-ubyte"), fixture("tiny-labels.idx1-ubyte"));
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 9);
  CHECK(ds.pixels(0)[1] == 1.0);
  CHECK(ds.pixels(0)[0] == 0.0);
  CHECK(ds.labels.labels[1] == 7);
  CHECK_THROWS_AS(read_idx_images(fixture("bad-magic.idx3-ubyte")), ParseError);
  CHECK_THROWS_AS(read_idx_images(fixture("truncated.idx3-ubyte")), ParseError);
  CHECK_THROWS_AS(load_idx(fixture("tiny-images.idx3-ubyte"), fixture("tiny-images.idx3-ubyte")), ParseError);

  DatasetSpec s;
  s.kind = DatasetKind::Idx;
  s.task = TaskKind::Classification;
  s.image_path = fixture("tiny-images.idx3-ubyte");
  s.label_path = fixture("tiny-labels.idx1-ubyte");
  const Dataset onehot = make_dataset(s);
  CHECK(onehot.d_in() == 9);
  CHECK(onehot.d_out() == 10);
  CHECK(onehot.targets(4, 0) == 1.0);
  CHECK(onehot.targets.col(1).sum() == 1.0);

  s.scalar_projection = true;
  const Dataset scalar = make_dataset(s);
  CHECK(scalar.d_in() == 1);
  CHECK(scalar.targets(0, 0) == 1.0);   // label 4 is even
  CHECK(scalar.targets(0, 1) == -1.0);  // label 7 is odd
}

TEST_CASE("idx write and read back") {
  const auto path = (std::filesystem::temp_directory_path() / "depthmup_rt.idx").string();
  IdxImages im;
  im.count = 1;
  im.rows = 2;
  im.cols = 2;
  im.pixels = {1, 2, 3, 4};
  write_idx_images(path, im);
  const IdxImages back = read_idx_images(path);
  CHECK(back.pixels == im.pixels);
  CHECK(back.rows == 2);
  std::filesystem::remove(path);
}

TEST_CASE("synthetic datasets") {
  DatasetSpec s;
  s.d_in = 4;
  s.size = 20000;
  s.noise = 0.1;
  const Dataset a = synth_dataset(s);
  const Dataset b = synth_dataset(s);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  // The teacher leaves a residual variance of noise^2.
  const Eigen::RowVectorXd resid = a.targets.row(0) - a.w_star.transpose() * a.inputs;
  CHECK(resid.squaredNorm() / s.size == doctest::Approx(0.01).epsilon(0.05));

  s.seed = 2;
  CHECK(synth_dataset(s).inputs != a.inputs);

  DatasetSpec c;
  c.task = TaskKind::Classification;
  c.size = 100;
  const Dataset cl = synth_dataset(c);
  CHECK(cl.d_out() == 2);
  CHECK((cl.targets.colwise().sum().array() == 1.0).all());

  CHECK(a.minibatch(3, 8, 11).inputs == a.minibatch(3, 8, 11).inputs);
  CHECK(a.minibatch(3, 8, 11).inputs != a.minibatch(4, 8, 11).inputs);
  s.noise = -1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("csv formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(csv_join({std::string("a,b"), 2, 1.5, std::string("q\"")}) == "\"a,b\",2,1.5,\"q\"\"\"");
}

TEST_CASE("seeds and slices") {
  CHECK(cell_seed(1, 8, 0, 0, 0) == cell_seed(1, 8, 0, 0, 0));
  CHECK(cell_seed(1, 8, 0, 0, 0) != cell_seed(1, 8, 0, 0, 1));
  CHECK(cell_seed(1, 8, 1, 0, 0) != cell_seed(1, 8, 0, 1, 0));
  CHECK(final_slice_mean({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.1) == 10.0);
  CHECK(final_slice_mean({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.25) == 9.0);
  CHECK(final_slice_mean({4}, 0.1) == 4.0);
}

TEST_CASE("single cell sweep") {
  const SweepResult r = run_sweep(tiny_config());
  REQUIRE(r.rows.size() == 1);
  CHECK(std::isfinite(r.rows[0].final_loss));
  CHECK(r.rows[0].seed == cell_seed(1, 2, 0, 0, 0));
  CHECK(r.manifest.contains("master_seed"));
  const std::string csv = sweep_csv_string(r);
  CHECK(csv.rfind(sweep_csv_header(), 0) == 0);
}

TEST_CASE("sweep ordering, failures and threads") {
  HarnessConfig c = tiny_config();
  c.sweep.depths = {4, 2};
  c.rule = UpdateRule{RuleKind::SGD};
  c.param = depth_mup_preset(RuleKind::SGD);
  c.sweep.lrs = {1e-2, 1e30};
  c.sweep.seeds = 2;
  c.threads = 3;
  const SweepResult r = run_sweep(c);
  REQUIRE(r.rows.size() == 8);
  CHECK(r.rows.front().depth == 2);
  CHECK(r.rows.back().depth == 4);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& p = r.rows[i - 1];
    const auto& q = r.rows[i];
    CHECK(std::tie(p.depth, p.lr_index, p.a_index, p.seed_index) < std::tie(q.depth, q.lr_index, q.a_index, q.seed_index));
  }
  bool failed = false;
  for (const auto& row : r.rows) {
    if (row.lr_index == 1 && std::isnan(row.final_loss)) failed = !row.error.empty();
  }
  CHECK(failed);
  const auto grid = mean_loss_grid(r, {2, 4}, 2, 0);
  CHECK(std::isfinite(grid[0][0]));
  CHECK(std::isnan(grid[0][1]));

  c.threads = 1;
  const SweepResult s = run_sweep(c);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(format_double(r.rows[i].final_loss) == format_double(s.rows[i].final_loss));
  }
  CHECK(exp::sweep_thread_determinism(2));
}

TEST_CASE("limit sweep cells") {
  HarnessConfig c = tiny_config();
  c.sweep.experiment = ExperimentKind::Limit;
  c.net.phi = Nonlinearity::Identity;
  c.limit.steps = 4;
  c.limit.inputs = {1, -1, 0.5, 1};
  c.limit.targets = {1, 0, -1, 0.5};
  c.training.steps = 4;
  const auto losses = limit_losses(c, 8, 0.1, 1.0);
  CHECK(losses.size() == 4);
  CHECK(losses[0] == doctest::Approx(0.5));  // f_0 = 0
  CHECK_THROWS(limit_losses(c, 8, 0.1, 2.0));
}

#include "depthmup/checkpoint.hpp"

#include <fstream>

#include "depthmup/binary_io.hpp"

namespace depthmup::sim {

namespace {

using binio::get;
using binio::put;

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(os, m(i, j));
  }
}

Eigen::MatrixXd get_matrix(std::istream& is) {
  const auto offset = static_cast<std::uint64_t>(is.tellg());
  const auto rows = get<std::uint64_t>(is);
  const auto cols = get<std::uint64_t>(is);
  if (rows > (1u << 20) || cols > (1u << 20)) throw ParseError("tensor dimensions out of range", offset);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>(is);
  }
  return m;
}

void put_opt(std::ostream& os, const OptimizerState& s) {
  put<std::int64_t>(os, s.rows);
  put<std::int64_t>(os, s.cols);
  put<std::int64_t>(os, s.step);
  put<std::uint8_t>(os, s.saw_nonfinite ? 1 : 0);
  put_matrix(os, s.m);
  put_matrix(os, s.v);
}

OptimizerState get_opt(std::istream& is) {
  OptimizerState s;
  s.rows = get<std::int64_t>(is);
  s.cols = get<std::int64_t>(is);
  s.step = get<std::int64_t>(is);
  s.saw_nonfinite = get<std::uint8_t>(is) != 0;
  s.m = get_matrix(is);
  s.v = get_matrix(is);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const NetConfig& c = ck.cfg;
  const NetState& s = ck.state;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  binio::put_string(os, ck.config_echo);
  for (int v : {c.d_in, c.d_out, c.n, c.L, c.k}) put<std::int32_t>(os, v);
  for (int v : {static_cast<int>(c.phi), static_cast<int>(c.placement), static_cast<int>(c.mean_subtraction),
                static_cast<int>(c.pre_layernorm), static_cast<int>(c.train_io), static_cast<int>(c.loss)}) {
    put<std::uint8_t>(os, static_cast<std::uint8_t>(v));
  }
  put<std::uint64_t>(os, s.seed);
  put<std::int64_t>(os, s.step);

  put_matrix(os, s.U);
  put_matrix(os, s.V);
  for (const auto& block : s.W) {
    for (const auto& w : block) put_matrix(os, w);
  }
  put<std::uint8_t>(os, s.W_init ? 1 : 0);
  if (s.W_init) {
    for (const auto& block : *s.W_init) {
      for (const auto& w : block) put_matrix(os, w);
    }
  }
  put<std::uint8_t>(os, s.opt_U ? 1 : 0);
  if (s.opt_U) put_opt(os, *s.opt_U);
  put<std::uint8_t>(os, s.opt_V ? 1 : 0);
  if (s.opt_V) put_opt(os, *s.opt_V);
  put<std::uint8_t>(os, s.opt_W.empty() ? 0 : 1);
  for (const auto& block : s.opt_W) {
    for (const auto& o : block) put_opt(os, o);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("bad checkpoint magic", 0);
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), sizeof(magic));
  }
  Checkpoint ck;
  ck.config_echo = binio::get_string(is);
  NetConfig& c = ck.cfg;
  c.d_in = get<std::int32_t>(is);
  c.d_out = get<std::int32_t>(is);
  c.n = get<std::int32_t>(is);
  c.L = get<std::int32_t>(is);
  c.k = get<std::int32_t>(is);
  c.phi = static_cast<Nonlinearity>(get<std::uint8_t>(is));
  c.placement = static_cast<Placement>(get<std::uint8_t>(is));
  c.mean_subtraction = get<std::uint8_t>(is) != 0;
  c.pre_layernorm = get<std::uint8_t>(is) != 0;
  c.train_io = get<std::uint8_t>(is) != 0;
  c.loss = static_cast<LossKind>(get<std::uint8_t>(is));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid config in checkpoint: ") + e.what(), static_cast<std::uint64_t>(is.tellg()));
  }

  NetState& s = ck.state;
  s.seed = get<std::uint64_t>(is);
  s.step = get<std::int64_t>(is);
  s.U = get_matrix(is);
  s.V = get_matrix(is);
  auto read_weights = [&] {
    std::vector<std::vector<Eigen::MatrixXd>> W(c.L);
    for (auto& block : W) {
      for (int j = 0; j < c.k; ++j) block.push_back(get_matrix(is));
    }
    return W;
  };
  s.W = read_weights();
  if (get<std::uint8_t>(is)) s.W_init = read_weights();
  if (get<std::uint8_t>(is)) s.opt_U = get_opt(is);
  if (get<std::uint8_t>(is)) s.opt_V = get_opt(is);
  if (get<std::uint8_t>(is)) {
    s.opt_W.resize(c.L);
    for (auto& block : s.opt_W) {
      for (int j = 0; j < c.k; ++j) block.push_back(get_opt(is));
    }
  }
  if (s.U.rows() != c.n || s.U.cols() != c.d_in || s.V.rows() != c.n || s.V.cols() != c.d_out) {
    throw ParseError("checkpoint tensor shapes do not match its config", static_cast<std::uint64_t>(is.tellg()));
  }
  return ck;
}

}  // namespace depthmup::sim

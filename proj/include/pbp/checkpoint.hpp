#ifndef PBP_CHECKPOINT_HPP
#define PBP_CHECKPOINT_HPP

// Binary checkpoint formats (little-endian): PBP-RNN nets, MDE ensembles and
// experience pools. Loaders validate magic bytes and dimensions and never
// leave partial state behind.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbp/common.hpp"
#include "pbp/experience.hpp"
#include "pbp/lstm.hpp"
#include "pbp/rnn.hpp"

namespace pbp::io {

inline constexpr char kRnnMagic[8] = {'P', 'B', 'P', 'R', 'N', 'N', '1', '\0'};
inline constexpr char kMdeMagic[5] = {'M', 'D', 'E', '1', '\0'};
inline constexpr char kPoolMagic[8] = {'E', 'X', 'P', 'P', 'O', 'O', 'L', '1'};

namespace detail {

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path)
      : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw IoError("cannot open for writing: " + path);
  }
  void bytes(const char* p, size_t n) { out.write(p, std::streamsize(n)); }
  void u32(uint32_t v) { bytes(reinterpret_cast<const char*>(&v), 4); }
  void u64(uint64_t v) { bytes(reinterpret_cast<const char*>(&v), 8); }
  void f64(double v) { bytes(reinterpret_cast<const char*>(&v), 8); }
  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError("cannot open for reading: " + p);
  }
  void bytes(char* p, size_t n) {
    in.read(p, std::streamsize(n));
    if (in.gcount() != std::streamsize(n))
      throw IoError("truncated file: " + path);
  }
  uint32_t u32() { uint32_t v; bytes(reinterpret_cast<char*>(&v), 4); return v; }
  uint64_t u64() { uint64_t v; bytes(reinterpret_cast<char*>(&v), 8); return v; }
  double f64() { double v; bytes(reinterpret_cast<char*>(&v), 8); return v; }
  void matrix(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
  }
  void vector(Eigen::VectorXd& v, Eigen::Index n) {
    v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = f64();
  }
  void expect_magic(const char* magic, size_t n, const char* what) {
    std::vector<char> got(n);
    bytes(got.data(), n);
    if (std::memcmp(got.data(), magic, n) != 0)
      throw IoError(std::string("bad magic for ") + what + " in " + path +
                    " (expected \"" + std::string(magic, magic + n) + "\")");
  }
};

}  // namespace detail

// --------------------------------------------------------------------------
// PBP-RNN

inline void save_checkpoint(const RecurrentBayesNetd& net,
                            const std::string& path) {
  detail::Writer w(path);
  w.bytes(kRnnMagic, sizeof(kRnnMagic));
  w.u32(uint32_t(net.input_dim));
  w.u32(uint32_t(net.hidden_dim));
  for (const auto* layer :
       {&net.recurrent_input, &net.recurrent_hidden, &net.readout}) {
    w.matrix(layer->means);
    w.matrix(layer->variances);
  }
  w.f64(net.noise.alpha);
  w.f64(net.noise.beta);
  w.f64(net.prior.alpha_lambda);
  w.f64(net.prior.beta_lambda);
}

inline RecurrentBayesNetd load_rnn_checkpoint(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic(kRnnMagic, sizeof(kRnnMagic), "PBP-RNN checkpoint");
  RecurrentBayesNetd net;
  net.input_dim = Eigen::Index(r.u32());
  net.hidden_dim = Eigen::Index(r.u32());
  if (net.input_dim < 1 || net.hidden_dim < 1)
    throw IoError("bad dimensions in " + path);
  auto read_layer = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m, v;
    r.matrix(m, rows, cols);
    r.matrix(v, rows, cols);
    return GaussianMatrixd(std::move(m), std::move(v));
  };
  net.recurrent_input = read_layer(net.hidden_dim, net.input_dim + 1);
  net.recurrent_hidden = read_layer(net.hidden_dim, net.hidden_dim + 1);
  net.readout = read_layer(1, net.hidden_dim + 1);
  net.noise.alpha = r.f64();
  net.noise.beta = r.f64();
  net.prior.alpha_lambda = r.f64();
  net.prior.beta_lambda = r.f64();
  net.noise.validate();
  net.prior.validate();
  return net;
}

// --------------------------------------------------------------------------
// MDE

inline void save_checkpoint(const Ensemble& ensemble, const std::string& path) {
  detail::Writer w(path);
  w.bytes(kMdeMagic, sizeof(kMdeMagic));
  w.u32(uint32_t(ensemble.members.size()));
  w.u32(uint32_t(ensemble.members.front().input_dim));
  w.u32(uint32_t(ensemble.members.front().hidden_dim));
  for (auto member : ensemble.members) {  // copy: visitor is non-const
    member.for_each_matrix([&](const Eigen::MatrixXd& m) { w.matrix(m); });
    member.for_each_vector([&](const Eigen::VectorXd& v) { w.vector(v); });
    w.f64(member.readout_bias);
  }
  w.f64(ensemble.dropout_rate);
  w.u32(uint32_t(ensemble.passes_per_member));
}

inline Ensemble load_mde_checkpoint(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic(kMdeMagic, sizeof(kMdeMagic), "MDE checkpoint");
  const uint32_t count = r.u32();
  const Eigen::Index input_dim = Eigen::Index(r.u32());
  const Eigen::Index hidden_dim = Eigen::Index(r.u32());
  if (count < 1 || input_dim < 1 || hidden_dim < 1)
    throw IoError("bad dimensions in " + path);
  Ensemble e;
  for (uint32_t k = 0; k < count; ++k) {
    LstmNet net;
    net.input_dim = input_dim;
    net.hidden_dim = hidden_dim;
    auto rd_m = [&](Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
      r.matrix(m, rows, cols);
    };
    rd_m(net.Wi, hidden_dim, input_dim); rd_m(net.Wf, hidden_dim, input_dim);
    rd_m(net.Wo, hidden_dim, input_dim); rd_m(net.Wg, hidden_dim, input_dim);
    rd_m(net.Ui, hidden_dim, hidden_dim); rd_m(net.Uf, hidden_dim, hidden_dim);
    rd_m(net.Uo, hidden_dim, hidden_dim); rd_m(net.Ug, hidden_dim, hidden_dim);
    r.vector(net.bi, hidden_dim); r.vector(net.bf, hidden_dim);
    r.vector(net.bo, hidden_dim); r.vector(net.bg, hidden_dim);
    r.vector(net.readout, hidden_dim);
    net.readout_bias = r.f64();
    e.members.push_back(std::move(net));
    e.optimizers.push_back(AdamState::for_net(e.members.back()));
  }
  e.dropout_rate = r.f64();
  e.passes_per_member = int(r.u32());
  return e;
}

// --------------------------------------------------------------------------
// Experience pool

inline void save_pool(const xp::ExperiencePool& pool, const std::string& path) {
  detail::Writer w(path);
  w.bytes(kPoolMagic, sizeof(kPoolMagic));
  w.u32(uint32_t(pool.window_length));
  w.u32(uint32_t(sim::kObservationDim));
  w.u64(uint64_t(pool.positives.size()));
  w.u64(uint64_t(pool.negatives.size()));
  w.u64(uint64_t(pool.feature_stats.count));
  w.vector(pool.feature_stats.mean);
  w.vector(pool.feature_stats.m2);
  auto dump = [&](const std::vector<ObservationSequenced>& cls) {
    for (const auto& seq : cls) {
      w.u32(uint32_t(seq.pad_count));
      w.matrix(seq.steps);
    }
  };
  dump(pool.positives);
  dump(pool.negatives);
}

inline xp::ExperiencePool load_pool(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic(kPoolMagic, sizeof(kPoolMagic), "experience pool");
  xp::ExperiencePool pool;
  pool.window_length = Eigen::Index(r.u32());
  const Eigen::Index dim = Eigen::Index(r.u32());
  if (dim != sim::kObservationDim)
    throw IoError("pool feature dim mismatch in " + path);
  const uint64_t n_pos = r.u64();
  const uint64_t n_neg = r.u64();
  pool.feature_stats.count = long(r.u64());
  r.vector(pool.feature_stats.mean, dim);
  r.vector(pool.feature_stats.m2, dim);
  auto read_cls = [&](std::vector<ObservationSequenced>& cls, uint64_t n) {
    cls.resize(n);
    for (auto& seq : cls) {
      seq.pad_count = Eigen::Index(r.u32());
      r.matrix(seq.steps, pool.window_length, dim);
    }
  };
  read_cls(pool.positives, n_pos);
  read_cls(pool.negatives, n_neg);
  return pool;
}

}  // namespace pbp::io

#endif  // PBP_CHECKPOINT_HPP

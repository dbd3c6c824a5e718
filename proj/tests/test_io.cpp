// Checkpoint and pool serialization tests: bit-exact round trips, magic-byte
// validation and truncation handling.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pbp/checkpoint.hpp"
#include "pbp/oracles.hpp"

using namespace pbp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pbp_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("rnn checkpoint: bit-exact round trip and matching predictions") {
  TempDir tmp;
  auto rng = SeedSplitter(1).stream("rnn");
  auto net = RecurrentBayesNetd::random_init(9, 16, rng);
  net.noise = {7.5, 3.25};
  net.prior = {6.5, 5.75};
  const auto path = tmp.file("net.ckpt");
  io::save_checkpoint(net, path);
  auto loaded = io::load_rnn_checkpoint(path);

  CHECK(loaded.input_dim == 9);
  CHECK(loaded.hidden_dim == 16);
  CHECK(loaded.recurrent_input.means == net.recurrent_input.means);
  CHECK(loaded.recurrent_input.variances == net.recurrent_input.variances);
  CHECK(loaded.recurrent_hidden.means == net.recurrent_hidden.means);
  CHECK(loaded.readout.variances == net.readout.variances);
  CHECK(loaded.noise.alpha == net.noise.alpha);
  CHECK(loaded.noise.beta == net.noise.beta);
  CHECK(loaded.prior.alpha_lambda == net.prior.alpha_lambda);
  CHECK(loaded.prior.beta_lambda == net.prior.beta_lambda);

  for (int q = 0; q < 100; ++q) {
    auto seq = oracle::random_sequence(8, 9, rng);
    auto a = predict(net, seq);
    auto b = predict(loaded, seq);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(a.total_variance == b.total_variance);
  }
}

TEST_CASE("mde checkpoint: bit-exact round trip") {
  TempDir tmp;
  SeedSplitter seeds(2);
  auto ensemble = Ensemble::random_init(5, 9, 16, seeds);
  ensemble.dropout_rate = 0.7;
  ensemble.passes_per_member = 20;
  const auto path = tmp.file("mde.ckpt");
  io::save_checkpoint(ensemble, path);
  auto loaded = io::load_mde_checkpoint(path);

  REQUIRE(loaded.members.size() == 5);
  CHECK(loaded.dropout_rate == 0.7);
  CHECK(loaded.passes_per_member == 20);
  for (size_t k = 0; k < 5; ++k) {
    CHECK(loaded.members[k].Wi == ensemble.members[k].Wi);
    CHECK(loaded.members[k].Uf == ensemble.members[k].Uf);
    CHECK(loaded.members[k].Ug == ensemble.members[k].Ug);
    CHECK(loaded.members[k].bi == ensemble.members[k].bi);
    CHECK(loaded.members[k].readout == ensemble.members[k].readout);
    CHECK(loaded.members[k].readout_bias == ensemble.members[k].readout_bias);
  }
}

TEST_CASE("pool: bit-exact round trip including feature statistics") {
  TempDir tmp;
  xp::ExperiencePool pool;
  sim::EpisodeResult ep;
  ep.collided = true;
  for (int t = 0; t < 6; ++t) {
    sim::Observation o;
    o.a1_pos = {0.1 * t, -0.2 * t};
    o.a2_pos = {1.0, 2.0};
    o.a1_vel = {0.05, 0.0};
    o.a2_vel = {0.0, 0.05};
    o.primitive_heading = 0.3;
    ep.observations.push_back(o);
  }
  xp::append_episode(pool, ep);
  ep.collided = false;
  xp::append_episode(pool, ep);

  const auto path = tmp.file("pool.bin");
  io::save_pool(pool, path);
  auto loaded = io::load_pool(path);
  CHECK(loaded.window_length == pool.window_length);
  CHECK(loaded.feature_stats.count == pool.feature_stats.count);
  CHECK(loaded.feature_stats.mean == pool.feature_stats.mean);
  CHECK(loaded.feature_stats.m2 == pool.feature_stats.m2);
  REQUIRE(loaded.positives.size() == pool.positives.size());
  REQUIRE(loaded.negatives.size() == pool.negatives.size());
  for (size_t i = 0; i < pool.positives.size(); ++i) {
    CHECK(loaded.positives[i].steps == pool.positives[i].steps);
    CHECK(loaded.positives[i].pad_count == pool.positives[i].pad_count);
  }
}

TEST_CASE("loaders: wrong magic is rejected with the expected magic named") {
  TempDir tmp;
  const auto path = tmp.file("garbage.bin");
  std::ofstream(path, std::ios::binary) << "NOTAMODELFILE_____________";
  try {
    io::load_rnn_checkpoint(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("PBPRNN1") != std::string::npos);
  }
}

TEST_CASE("loaders: cross-model loads are rejected") {
  TempDir tmp;
  SeedSplitter seeds(3);
  auto ensemble = Ensemble::random_init(2, 3, 4, seeds);
  const auto mde_path = tmp.file("cross.ckpt");
  io::save_checkpoint(ensemble, mde_path);
  CHECK_THROWS_AS(io::load_rnn_checkpoint(mde_path), IoError);

  auto rng = seeds.stream("net");
  auto net = RecurrentBayesNetd::random_init(3, 4, rng);
  const auto rnn_path = tmp.file("cross2.ckpt");
  io::save_checkpoint(net, rnn_path);
  CHECK_THROWS_AS(io::load_mde_checkpoint(rnn_path), IoError);
  CHECK_THROWS_AS(io::load_pool(rnn_path), IoError);
}

TEST_CASE("loaders: truncated files raise IoError") {
  TempDir tmp;
  auto rng = SeedSplitter(4).stream("trunc");
  auto net = RecurrentBayesNetd::random_init(3, 4, rng);
  const auto path = tmp.file("full.ckpt");
  io::save_checkpoint(net, path);

  // Chop the file at several points, including inside the header.
  const auto size = fs::file_size(path);
  for (uintmax_t cut : {size / 2, uintmax_t(10), uintmax_t(4)}) {
    const auto cut_path = tmp.file("cut.ckpt");
    fs::copy_file(path, cut_path, fs::copy_options::overwrite_existing);
    fs::resize_file(cut_path, cut);
    CHECK_THROWS_AS(io::load_rnn_checkpoint(cut_path), IoError);
  }
  CHECK_THROWS_AS(io::load_rnn_checkpoint(tmp.file("missing.ckpt")), IoError);
}

TEST_CASE("property: checkpoint round trips across random nets") {
  TempDir tmp;
  for (int trial = 0; trial < 25; ++trial) {
    auto rng = SeedSplitter(100 + uint64_t(trial)).stream("prop");
    std::uniform_int_distribution<int> dims(1, 6);
    auto net = RecurrentBayesNetd::random_init(dims(rng), dims(rng), rng);
    const auto path = tmp.file("prop.ckpt");
    io::save_checkpoint(net, path);
    auto loaded = io::load_rnn_checkpoint(path);
    CHECK(loaded.recurrent_input.means == net.recurrent_input.means);
    CHECK(loaded.recurrent_hidden.variances == net.recurrent_hidden.variances);
    CHECK(loaded.readout.means == net.readout.means);
  }
}

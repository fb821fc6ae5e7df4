#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "arft/common.hpp"
#include "arft/losses.hpp"
#include "arft/synth.hpp"
#include "arft/tape.hpp"
#include "arft/train.hpp"

using namespace arft;

namespace {

Tensor feature_matrix(const Dataset& d) {
  std::vector<std::size_t> rows(d.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return make_matrix(d, rows);
}

double mmd_between(const Dataset& a, const Dataset& b) {
  const Tensor xa = feature_matrix(a);
  const Tensor xb = feature_matrix(b);
  const double sigma = median_sigma(xa, xb);
  Tape t;
  return t.value(mmd_rbf(t, t.constant(xa), t.constant(xb), sigma))[0];
}

}  // namespace

TEST_CASE("synth_generate honors the requested shapes and schema") {
  SynthConfig cfg;
  cfg.n_source = 40;
  cfg.n_target = 25;
  cfg.p = 6;
  cfg.positive_rate = 0.3;
  cfg.seed = 3;
  const auto [src, tgt] = synth_generate(cfg);
  CHECK(src.n_rows() == 40);
  CHECK(tgt.n_rows() == 25);
  CHECK(src.n_features() == 6);
  CHECK(tgt.n_features() == 6);
  CHECK(src.metric_names == tgt.metric_names);
  CHECK(src.metric_names[0] == "m1");
  CHECK(src.metric_names[5] == "m6");
  CHECK(src.project_id == "synth-source");
  CHECK(tgt.project_id == "synth-target");
  REQUIRE(src.has_labels());
  REQUIRE(tgt.has_labels());
  CHECK_NOTHROW(src.validate());
  CHECK_NOTHROW(tgt.validate());
}

TEST_CASE("positive counts track the configured rate binomially") {
  SynthConfig cfg;
  cfg.n_source = 2000;
  cfg.n_target = 500;
  cfg.p = 8;
  cfg.positive_rate = 0.05;
  cfg.seed = 11;
  const auto [src, tgt] = synth_generate(cfg);
  std::size_t src_pos = 0, tgt_pos = 0;
  for (const int y : *src.labels) src_pos += static_cast<std::size_t>(y);
  for (const int y : *tgt.labels) tgt_pos += static_cast<std::size_t>(y);
  // n=2000, rate 0.05: mean 100, sd ~9.7; 4-sigma window
  CHECK(src_pos > 60);
  CHECK(src_pos < 140);
  // n=500: mean 25, sd ~4.9
  CHECK(tgt_pos > 5);
  CHECK(tgt_pos < 45);
}

TEST_CASE("same seed produces byte-identical datasets") {
  SynthConfig cfg;
  cfg.n_source = 30;
  cfg.n_target = 20;
  cfg.p = 4;
  cfg.positive_rate = 0.2;
  cfg.seed = 9;
  const auto [s1, t1] = synth_generate(cfg);
  const auto [s2, t2] = synth_generate(cfg);
  CHECK(s1.features == s2.features);
  CHECK(t1.features == t2.features);
  CHECK(*s1.labels == *s2.labels);
  CHECK(*t1.labels == *t2.labels);
}

TEST_CASE("different seeds produce different data") {
  SynthConfig a, b;
  a.n_source = b.n_source = 20;
  a.n_target = b.n_target = 10;
  a.p = b.p = 4;
  a.positive_rate = b.positive_rate = 0.3;
  a.seed = 1;
  b.seed = 2;
  const auto [s1, t1] = synth_generate(a);
  const auto [s2, t2] = synth_generate(b);
  CHECK(s1.features != s2.features);
}

TEST_CASE("zero shift keeps source and target distributions aligned") {
  SynthConfig cfg;
  cfg.n_source = 500;
  cfg.n_target = 500;
  cfg.p = 10;
  cfg.positive_rate = 0.3;
  cfg.shift_strength = 0.0;
  cfg.seed = 17;
  const auto [src, tgt] = synth_generate(cfg);
  CHECK(mmd_between(src, tgt) < 0.05);
}

TEST_CASE("stronger shift increases the measured MMD") {
  SynthConfig near_cfg;
  near_cfg.n_source = 300;
  near_cfg.n_target = 300;
  near_cfg.p = 8;
  near_cfg.positive_rate = 0.3;
  near_cfg.seed = 23;
  near_cfg.shift_strength = 0.0;
  SynthConfig far_cfg = near_cfg;
  far_cfg.shift_strength = 1.0;

  const auto [s0, t0] = synth_generate(near_cfg);
  const auto [s1, t1] = synth_generate(far_cfg);
  const double mmd0 = mmd_between(s0, t0);
  const double mmd1 = mmd_between(s1, t1);
  CHECK(mmd1 > mmd0);
  CHECK(mmd1 > 0.05);
}

TEST_CASE("shifted target shares the source's seeded base draws") {
  // With the same seed, shift only transforms rows; source stays identical.
  SynthConfig a;
  a.n_source = 25;
  a.n_target = 15;
  a.p = 5;
  a.positive_rate = 0.25;
  a.seed = 31;
  a.shift_strength = 0.0;
  SynthConfig b = a;
  b.shift_strength = 0.7;
  const auto [s0, t0] = synth_generate(a);
  const auto [s1, t1] = synth_generate(b);
  CHECK(s0.features == s1.features);
  CHECK(*t0.labels == *t1.labels);
  CHECK(t0.features != t1.features);
}

TEST_CASE("synth_generate rejects invalid configurations") {
  SynthConfig cfg;
  cfg.positive_rate = 0.0;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg.positive_rate = 0.5;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg.positive_rate = 0.6;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.p = 1;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.n_source = 0;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.n_target = 0;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.shift_strength = -0.1;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
}

TEST_CASE("classes are separated along a consistent direction") {
  SynthConfig cfg;
  cfg.n_source = 400;
  cfg.n_target = 50;
  cfg.p = 6;
  cfg.positive_rate = 0.4;
  cfg.seed = 37;
  const auto [src, tgt] = synth_generate(cfg);
  // Mean positive and mean negative rows should differ markedly in norm of
  // their difference (the +/- 1.5u class-mean offset).
  std::vector<double> mean_pos(cfg.p, 0.0), mean_neg(cfg.p, 0.0);
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t r = 0; r < src.n_rows(); ++r) {
    if ((*src.labels)[r] == 1) {
      ++n_pos;
      for (std::size_t c = 0; c < cfg.p; ++c) mean_pos[c] += src.features[r][c];
    } else {
      ++n_neg;
      for (std::size_t c = 0; c < cfg.p; ++c) mean_neg[c] += src.features[r][c];
    }
  }
  REQUIRE(n_pos > 0);
  REQUIRE(n_neg > 0);
  double gap_sq = 0.0;
  for (std::size_t c = 0; c < cfg.p; ++c) {
    const double g = mean_pos[c] / static_cast<double>(n_pos) -
                     mean_neg[c] / static_cast<double>(n_neg);
    gap_sq += g * g;
  }
  // class means are 5.0 apart along the unit direction u
  CHECK(std::sqrt(gap_sq) > 4.0);
  CHECK(std::sqrt(gap_sq) < 6.0);
}

#pragma once

#include <cstdint>
#include <utility>

#include "arft/dataset.hpp"

namespace arft {

// Synthetic covariate-shift generator configuration. Source rows come from
// two class-conditional Gaussians with a shared random SPD covariance (so
// metric correlations exist); target rows come from the same generative
// process pushed through a random affine map scaled by shift_strength.
struct SynthConfig {
  std::size_t n_source = 2000;
  std::size_t n_target = 800;
  std::size_t p = 20;
  double positive_rate = 0.05;
  double shift_strength = 0.5;
  std::uint64_t seed = 0;
};

// Deterministic per seed: identical configs produce byte-identical datasets.
// Both returned datasets carry labels; callers that need an unlabeled target
// strip them (the experiment driver writes them to a separate truth file).
std::pair<Dataset, Dataset> synth_generate(const SynthConfig& cfg);

}  // namespace arft

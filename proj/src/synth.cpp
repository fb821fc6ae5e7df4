#include "arft/synth.hpp"

#include <cmath>
#include <string>

namespace arft {

namespace {

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
// (row-major p x p). Sizes here are tiny, so the plain O(p^3) loop is fine.
std::vector<double> cholesky(const std::vector<double>& m, std::size_t p) {
  std::vector<double> L(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= L[i * p + k] * L[j * p + k];
      if (i == j) {
        if (s <= 0.0)
          throw ContractError("cholesky: matrix not positive definite at pivot " +
                              std::to_string(i));
        L[i * p + i] = std::sqrt(s);
      } else {
        L[i * p + j] = s / L[j * p + j];
      }
    }
  }
  return L;
}

}  // namespace

std::pair<Dataset, Dataset> synth_generate(const SynthConfig& cfg) {
  if (cfg.positive_rate <= 0.0 || cfg.positive_rate >= 0.5)
    throw ConfigError("synth_generate: positive_rate must be in (0, 0.5), got " +
                      std::to_string(cfg.positive_rate));
  if (cfg.p < 2) throw ConfigError("synth_generate: need p >= 2 features");
  if (cfg.n_source == 0 || cfg.n_target == 0)
    throw ConfigError("synth_generate: dataset sizes must be positive");
  if (cfg.shift_strength < 0.0)
    throw ConfigError("synth_generate: shift_strength must be >= 0");

  const std::size_t p = cfg.p;
  Rng rng(cfg.seed);

  // Shared covariance: Sigma = A A^T / p + 0.5 I is SPD with off-diagonal
  // structure, so features are correlated like real metric tables.
  std::vector<double> A(p * p);
  for (auto& v : A) v = rng.normal();
  std::vector<double> sigma(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += A[i * p + k] * A[j * p + k];
      sigma[i * p + j] = s / static_cast<double>(p) + (i == j ? 0.5 : 0.0);
    }
  const std::vector<double> L = cholesky(sigma, p);

  // Class means sit at +/- (delta/2) u along a random unit direction. The
  // gap is sized against the O(1) directional noise of Sigma so the task is
  // learnable but not separable by any single feature.
  constexpr double kClassSeparation = 5.0;
  std::vector<double> u(p);
  double norm = 0.0;
  for (auto& v : u) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : u) v /= norm;

  // Target-domain affine shift: x -> x + s (M x + t).
  std::vector<double> M(p * p);
  for (auto& v : M) v = rng.normal() / std::sqrt(static_cast<double>(p));
  std::vector<double> tvec(p);
  for (auto& v : tvec) v = rng.normal();

  auto draw_rows = [&](std::size_t n, bool shifted, Dataset& d) {
    std::vector<double> z(p), x(p);
    for (std::size_t r = 0; r < n; ++r) {
      const int y = rng.bernoulli(cfg.positive_rate) ? 1 : 0;
      for (auto& v : z) v = rng.normal();
      const double side = y == 1 ? kClassSeparation / 2.0 : -kClassSeparation / 2.0;
      for (std::size_t i = 0; i < p; ++i) {
        double s = side * u[i];
        for (std::size_t k = 0; k <= i; ++k) s += L[i * p + k] * z[k];
        x[i] = s;
      }
      if (shifted && cfg.shift_strength > 0.0) {
        std::vector<double> shift(p);
        for (std::size_t i = 0; i < p; ++i) {
          double s = tvec[i];
          for (std::size_t k = 0; k < p; ++k) s += M[i * p + k] * x[k];
          shift[i] = s;
        }
        for (std::size_t i = 0; i < p; ++i) x[i] += cfg.shift_strength * shift[i];
      }
      d.features.push_back(x);
      d.labels->push_back(y);
    }
  };

  Dataset source, target;
  source.project_id = "synth-source";
  target.project_id = "synth-target";
  for (std::size_t j = 0; j < p; ++j) {
    source.metric_names.push_back("m" + std::to_string(j + 1));
    target.metric_names.push_back("m" + std::to_string(j + 1));
  }
  source.labels.emplace();
  target.labels.emplace();
  draw_rows(cfg.n_source, /*shifted=*/false, source);
  draw_rows(cfg.n_target, /*shifted=*/true, target);

  source.validate();
  target.validate();
  return {std::move(source), std::move(target)};
}

}  // namespace arft

#include "arft/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

namespace arft {

void FocalConfig::validate() const {
  if (gamma < 0.0) throw ConfigError("focal: gamma must be >= 0, got " + std::to_string(gamma));
  if (alpha <= 0.0) throw ConfigError("focal: alpha must be > 0, got " + std::to_string(alpha));
}

void MMDConfig::validate() const {
  if (sigma_policy == SigmaPolicy::kFixed && fixed_sigma <= 0.0)
    throw ConfigError("mmd: fixed sigma must be > 0, got " + std::to_string(fixed_sigma));
}

void LossSchedule::validate() const {
  if (lambda_max < 0.0)
    throw ConfigError("schedule: lambda_max must be >= 0, got " + std::to_string(lambda_max));
}

Var true_class_probs(Tape& t, Var logits, const std::vector<int>& labels) {
  const Tensor& lg = t.value(logits);
  if (lg.ndim() != 2 || lg.shape[1] != 2)
    throw ShapeError("true_class_probs: logits must be [N,2], got " + shape_str(lg.shape));
  if (lg.shape[0] != labels.size())
    throw ShapeError("true_class_probs: " + std::to_string(lg.shape[0]) + " logit rows vs " +
                     std::to_string(labels.size()) + " labels");

  Tensor onehot = Tensor::zeros(lg.shape);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1)
      throw ContractError("true_class_probs: label " + std::to_string(y) + " is not 0 or 1");
    onehot.at2(i, static_cast<std::size_t>(y)) = 1.0;
  }
  Var picked = sum_last(mul(softmax(logits, -1), t.constant(std::move(onehot))), false);
  return picked;  // [N]
}

Var focal_loss(Tape& t, Var probs_true_class, const FocalConfig& cfg) {
  cfg.validate();
  const Tensor& p = t.value(probs_true_class);
  if (p.numel() == 0) throw ContractError("focal_loss: empty batch");

  Var pc = clamp_min(probs_true_class, 1e-12);
  Var log_p = log(pc);
  Var one_minus = add_scalar(mul_scalar(pc, -1.0), 1.0);
  Var weighted = mul(pow_scalar(one_minus, cfg.gamma), log_p);
  return mul_scalar(mean_all(weighted), -cfg.alpha);
}

double median_sigma(const Tensor& xs, const Tensor& xt) {
  if (xs.ndim() != 2 || xt.ndim() != 2 || xs.shape[1] != xt.shape[1])
    throw ShapeError("median_sigma: expected [n,d] matrices with equal d, got " +
                     shape_str(xs.shape) + " and " + shape_str(xt.shape));
  const std::size_t d = xs.shape[1];
  const std::size_t n = xs.shape[0] + xt.shape[0];
  if (n < 2) throw ContractError("median_sigma: need at least 2 pooled points");

  auto row = [&](std::size_t i) {
    return i < xs.shape[0] ? xs.data.data() + i * d : xt.data.data() + (i - xs.shape[0]) * d;
  };
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* b = row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
      }
      dists.push_back(std::sqrt(s));
    }
  }

  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double median =
      m % 2 == 1 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  return median > 0.0 ? median : 1e-6;
}

namespace {

// Full RBF Gram block between a [n,da] and b [m,da] via the expansion
// ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b, so MMD stays differentiable without
// per-pair graph nodes.
Var rbf_block_mean(Tape& t, Var a, Var b, double inv_two_sigma_sq) {
  const std::size_t m = t.value(b).shape[0];
  Var a_sq = sum_last(mul(a, a), true);                      // [n,1]
  Var b_sq = reshape(sum_last(mul(b, b), true), {1, m});     // [1,m]
  Var cross = matmul(a, transpose_last2(b));                 // [n,m]
  Var d2 = sub(add(a_sq, b_sq), mul_scalar(cross, 2.0));
  return mean_all(exp(mul_scalar(d2, -inv_two_sigma_sq)));
}

}  // namespace

Var mmd_rbf(Tape& t, Var xs, Var xt, double sigma) {
  const Tensor& s = t.value(xs);
  const Tensor& g = t.value(xt);
  if (s.ndim() != 2 || g.ndim() != 2)
    throw ShapeError("mmd_rbf: expected [n,d] matrices, got " + shape_str(s.shape) + " and " +
                     shape_str(g.shape));
  if (s.shape[1] != g.shape[1])
    throw ShapeError("mmd_rbf: feature dimensions disagree: " + shape_str(s.shape) + " vs " +
                     shape_str(g.shape));
  if (s.shape[0] < 1 || g.shape[0] < 1) throw ContractError("mmd_rbf: empty sample set");
  if (sigma <= 0.0) throw ConfigError("mmd_rbf: sigma must be > 0, got " + std::to_string(sigma));

  // The statistic is symmetric, but summing the cross block in [n_s,n_t]
  // versus [n_t,n_s] order rounds differently. Canonicalizing the argument
  // order makes mmd(xs,xt) and mmd(xt,xs) bit-identical.
  const bool swap_args = g.shape[0] != s.shape[0] ? g.shape[0] < s.shape[0] : g.data < s.data;
  if (swap_args) std::swap(xs, xt);

  const double inv = 1.0 / (2.0 * sigma * sigma);
  Var k_ss = rbf_block_mean(t, xs, xs, inv);
  Var k_tt = rbf_block_mean(t, xt, xt, inv);
  Var k_st = rbf_block_mean(t, xs, xt, inv);
  return sub(add(k_ss, k_tt), mul_scalar(k_st, 2.0));
}

double lambda_schedule(double progress, const LossSchedule& sched) {
  sched.validate();
  if (progress < 0.0 || progress > 1.0) {
    std::fprintf(stderr, "warning: lambda_schedule progress %g outside [0,1], clamping\n",
                 progress);
    progress = std::clamp(progress, 0.0, 1.0);
  }
  return sched.lambda_max * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

CompositeParts composite_loss(Tape& t, Var probs_true_class, Var source_repr, Var target_repr,
                              double progress, const FocalConfig& focal_cfg,
                              const MMDConfig& mmd_cfg, const LossSchedule& sched) {
  mmd_cfg.validate();
  CompositeParts parts;
  parts.lambda_used = lambda_schedule(progress, sched);
  parts.sigma_used = mmd_cfg.sigma_policy == SigmaPolicy::kMedian
                         ? median_sigma(t.value(source_repr), t.value(target_repr))
                         : mmd_cfg.fixed_sigma;
  parts.focal_part = focal_loss(t, probs_true_class, focal_cfg);
  parts.mmd_part = mmd_rbf(t, source_repr, target_repr, parts.sigma_used);
  parts.total = add(parts.focal_part, mul_scalar(parts.mmd_part, parts.lambda_used));
  return parts;
}

}  // namespace arft

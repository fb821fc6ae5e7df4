#pragma once

#include <vector>

#include "arft/tape.hpp"

namespace arft {

struct FocalConfig {
  double gamma = 2.0;  // modulating factor
  double alpha = 1.0;  // class weighting factor
  void validate() const;
};

enum class SigmaPolicy { kMedian, kFixed };
enum class MmdRepr { kCls, kMeanTokens, kAllTokens };

struct MMDConfig {
  SigmaPolicy sigma_policy = SigmaPolicy::kMedian;
  double fixed_sigma = 1.0;  // used only with SigmaPolicy::kFixed
  MmdRepr repr = MmdRepr::kCls;
  void validate() const;
};

struct LossSchedule {
  double lambda_max = 1.0;
  void validate() const;
};

// Picks each sample's predicted probability for its true class:
// softmax(logits) gathered at labels. logits [N,2], labels in {0,1} -> [N].
Var true_class_probs(Tape& t, Var logits, const std::vector<int>& labels);

// Mean over the batch of -alpha * (1 - p_t)^gamma * log(p_t), with p_t
// clamped at 1e-12 below. gamma = 0 reduces exactly to mean cross-entropy.
Var focal_loss(Tape& t, Var probs_true_class, const FocalConfig& cfg);

// Median of all pairwise Euclidean distances over the pooled rows of xs and
// xt (self-pairs excluded). A zero median falls back to 1e-6. Not part of the
// differentiated graph: sigma is treated as a constant of the step.
double median_sigma(const Tensor& xs, const Tensor& xt);

// Squared-MMD biased V-statistic with RBF kernel exp(-||a-b||^2 / (2 sigma^2)):
// mean(K_ss) + mean(K_tt) - 2 mean(K_st). Differentiable w.r.t. both inputs.
Var mmd_rbf(Tape& t, Var xs, Var xt, double sigma);

// lambda(progress) = lambda_max * (2 / (1 + exp(-10 progress)) - 1).
// Out-of-range progress is clamped into [0,1] with a warning on stderr.
double lambda_schedule(double progress, const LossSchedule& sched);

struct CompositeParts {
  Var total;
  Var focal_part;
  Var mmd_part;
  double lambda_used = 0.0;
  double sigma_used = 0.0;
};

// total = focal_loss + lambda(progress) * mmd_rbf, with sigma resolved from
// the policy against the current representations. All parts are returned for
// per-step logging.
CompositeParts composite_loss(Tape& t, Var probs_true_class, Var source_repr, Var target_repr,
                              double progress, const FocalConfig& focal_cfg,
                              const MMDConfig& mmd_cfg, const LossSchedule& sched);

}  // namespace arft

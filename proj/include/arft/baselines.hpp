#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arft/common.hpp"
#include "arft/losses.hpp"
#include "arft/rng.hpp"
#include "arft/tensor.hpp"
#include "arft/train.hpp"

namespace arft {

// Thrown when a requested metric has no defined value (e.g. PD with no
// actual positives). Explicit by design: a silent 0 would corrupt Bal
// comparisons.
struct UndefinedMetricError : std::runtime_error {
  explicit UndefinedMetricError(const std::string& msg)
      : std::runtime_error("undefined metric: " + msg) {}
};

struct ConfusionMatrix {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;
  std::size_t total() const { return tp + fn + fp + tn; }
};

// Positive class = ARB-prone = 1.
ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth);

struct Metrics {
  double pd = 0.0;  // recall on ARB-prone
  double pf = 0.0;  // false alarm rate
  double bal = 0.0; // 1 - sqrt(pf^2 + (1-pd)^2) / sqrt(2)
};

// Requires at least one actual positive and one actual negative.
Metrics pd_pf_bal(const ConfusionMatrix& cm);

struct EvalReport {
  ConfusionMatrix cm;
  Metrics metrics;
  std::string experiment_id;       // e.g. "L=>M"
  std::string config_fingerprint;  // resolved-config summary string
  std::uint64_t seed = 0;
};

struct FeatureScore {
  std::string method;
  std::vector<double> scores;            // one per metric column
  std::vector<std::size_t> selected;     // filled by select_top_k
};

using Matrix = std::vector<std::vector<double>>;

// Entropy-based scorers discretize each feature with equal-frequency binning
// into at most `bins` bins (ties share a bin) and use natural-log entropies.
FeatureScore info_gain(const Matrix& features, const std::vector<int>& labels,
                       std::size_t bins = 10);
FeatureScore gain_ratio(const Matrix& features, const std::vector<int>& labels,
                        std::size_t bins = 10);
FeatureScore symmetric_uncertainty(const Matrix& features, const std::vector<int>& labels,
                                   std::size_t bins = 10);

// Standard ReliefF with range-scaled feature differences, probing every
// sample in index order; distance ties break by original index. A class
// smaller than k_neighbors+1 reduces k with a warning. rng is reserved for
// probe subsampling and is unused when every sample is probed.
FeatureScore relieff(const Matrix& features, const std::vector<int>& labels,
                     std::size_t k_neighbors, Rng& rng);

// Indices of the k highest scores; ties break toward the lower index.
std::vector<std::size_t> select_top_k(const FeatureScore& score, std::size_t k);

struct LinearClassifierResult {
  Tensor weight;  // [p, 2]
  Tensor bias;    // [2]
  std::vector<double> step_losses;
  std::vector<int> predictions;  // on the test set
};

// Single affine map to 2 logits trained with focal loss under the same SGD
// regime as fit (momentum, weight decay, lr decay; no MMD term).
LinearClassifierResult linear_focal_classifier(const Matrix& train_features,
                                               const std::vector<int>& train_labels,
                                               const Matrix& test_features,
                                               const TrainConfig& train_cfg,
                                               const FocalConfig& focal_cfg);

}  // namespace arft

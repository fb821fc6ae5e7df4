#include "arft/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "arft/model.hpp"

namespace arft {

ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw ContractError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " truth labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((pred[i] != 0 && pred[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw ContractError("confusion: labels must be 0 or 1 (row " + std::to_string(i) + ")");
    if (truth[i] == 1)
      ++(pred[i] == 1 ? cm.tp : cm.fn);
    else
      ++(pred[i] == 1 ? cm.fp : cm.tn);
  }
  return cm;
}

Metrics pd_pf_bal(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0)
    throw UndefinedMetricError("PD needs at least one actual positive");
  if (cm.fp + cm.tn == 0)
    throw UndefinedMetricError("PF needs at least one actual negative");
  Metrics m;
  m.pd = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  m.pf = static_cast<double>(cm.fp) / static_cast<double>(cm.fp + cm.tn);
  m.bal = 1.0 - std::sqrt(m.pf * m.pf + (1.0 - m.pd) * (1.0 - m.pd)) / std::sqrt(2.0);
  return m;
}

namespace {

void check_labeled_matrix(const Matrix& x, const std::vector<int>& y) {
  if (x.empty()) throw ContractError("feature scoring: empty feature matrix");
  if (x.size() != y.size())
    throw ContractError("feature scoring: " + std::to_string(x.size()) + " rows vs " +
                        std::to_string(y.size()) + " labels");
  for (const auto& row : x)
    if (row.size() != x[0].size())
      throw ShapeError("feature scoring: ragged feature matrix");
}

// Equal-frequency bin ids. Rows are sorted by value; position i of the sorted
// order falls into bin floor(i*bins/N), except that a run of equal values is
// assigned the bin of its first position so ties never straddle a boundary.
// Depends only on the ordering, hence invariant under strictly increasing
// transforms.
std::vector<std::size_t> equal_frequency_bins(const std::vector<double>& col, std::size_t bins) {
  const std::size_t n = col.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });

  std::vector<std::size_t> bin(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && col[order[j + 1]] == col[order[i]]) ++j;
    const std::size_t b = i * bins / n;
    for (std::size_t k = i; k <= j; ++k) bin[order[k]] = b;
    i = j + 1;
  }
  return bin;
}

double entropy_from_counts(const std::vector<std::size_t>& counts, std::size_t total) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

struct EntropyParts {
  double h_y = 0.0;       // H(Y)
  double h_x = 0.0;       // H(X_binned)
  double info_gain = 0.0; // H(Y) - H(Y|X)
};

EntropyParts entropy_parts(const std::vector<double>& col, const std::vector<int>& y,
                           std::size_t bins) {
  const std::size_t n = col.size();
  const std::vector<std::size_t> bin = equal_frequency_bins(col, bins);

  std::vector<std::size_t> y_counts(2, 0);
  for (int v : y) ++y_counts[static_cast<std::size_t>(v)];

  std::vector<std::size_t> bin_counts(bins, 0);
  std::vector<std::vector<std::size_t>> joint(bins, std::vector<std::size_t>(2, 0));
  for (std::size_t i = 0; i < n; ++i) {
    ++bin_counts[bin[i]];
    ++joint[bin[i]][static_cast<std::size_t>(y[i])];
  }

  EntropyParts parts;
  parts.h_y = entropy_from_counts(y_counts, n);
  parts.h_x = entropy_from_counts(bin_counts, n);
  double h_y_given_x = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (bin_counts[b] == 0) continue;
    h_y_given_x += static_cast<double>(bin_counts[b]) / static_cast<double>(n) *
                   entropy_from_counts(joint[b], bin_counts[b]);
  }
  parts.info_gain = parts.h_y - h_y_given_x;
  return parts;
}

template <typename ScoreFn>
FeatureScore score_columns(const char* method, const Matrix& x, const std::vector<int>& y,
                           std::size_t bins, ScoreFn fn) {
  check_labeled_matrix(x, y);
  if (bins < 2) throw ConfigError("feature scoring: need at least 2 bins");
  if (x.size() < bins)
    throw ContractError(std::string("feature scoring: need at least ") + std::to_string(bins) +
                        " rows for " + std::to_string(bins) + "-bin discretization, got " +
                        std::to_string(x.size()));
  for (int v : y)
    if (v != 0 && v != 1) throw ContractError("feature scoring: labels must be 0 or 1");

  const std::size_t p = x[0].size();
  FeatureScore out;
  out.method = method;
  out.scores.resize(p);
  std::vector<double> col(x.size());
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) col[i] = x[i][j];
    out.scores[j] = fn(entropy_parts(col, y, bins));
  }
  return out;
}

}  // namespace

FeatureScore info_gain(const Matrix& features, const std::vector<int>& labels, std::size_t bins) {
  return score_columns("info_gain", features, labels, bins,
                       [](const EntropyParts& e) { return e.info_gain; });
}

FeatureScore gain_ratio(const Matrix& features, const std::vector<int>& labels, std::size_t bins) {
  return score_columns("gain_ratio", features, labels, bins, [](const EntropyParts& e) {
    return e.h_x > 0.0 ? e.info_gain / e.h_x : 0.0;
  });
}

FeatureScore symmetric_uncertainty(const Matrix& features, const std::vector<int>& labels,
                                   std::size_t bins) {
  return score_columns("symmetric_uncertainty", features, labels, bins,
                       [](const EntropyParts& e) {
                         const double denom = e.h_x + e.h_y;
                         return denom > 0.0 ? 2.0 * e.info_gain / denom : 0.0;
                       });
}

FeatureScore relieff(const Matrix& features, const std::vector<int>& labels,
                     std::size_t k_neighbors, Rng& rng) {
  (void)rng;  // reserved for probe subsampling; every sample is probed here
  check_labeled_matrix(features, labels);
  if (k_neighbors < 1) throw ConfigError("relieff: k_neighbors must be >= 1");

  const std::size_t n = features.size();
  const std::size_t p = features[0].size();

  std::vector<std::size_t> class_count(2, 0);
  for (int v : labels) {
    if (v != 0 && v != 1) throw ContractError("relieff: labels must be 0 or 1");
    ++class_count[static_cast<std::size_t>(v)];
  }
  const std::size_t min_class = std::min(class_count[0], class_count[1]);
  if (min_class < 2)
    throw ContractError("relieff: every class needs at least 2 samples");
  std::size_t k = k_neighbors;
  if (min_class - 1 < k) {
    k = min_class - 1;
    std::fprintf(stderr, "warning: relieff k_neighbors reduced to %zu (smallest class has %zu samples)\n",
                 k, min_class);
  }

  // Per-feature ranges for scaled differences; zero range contributes 0.
  std::vector<double> range(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double lo = features[0][j], hi = features[0][j];
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, features[i][j]);
      hi = std::max(hi, features[i][j]);
    }
    range[j] = hi - lo;
  }
  auto diff = [&](std::size_t j, std::size_t a, std::size_t b) {
    return range[j] > 0.0 ? std::abs(features[a][j] - features[b][j]) / range[j] : 0.0;
  };

  const double prior1 = static_cast<double>(class_count[1]) / static_cast<double>(n);
  const double priors[2] = {1.0 - prior1, prior1};

  std::vector<double> w(p, 0.0);
  std::vector<std::pair<double, std::size_t>> by_class[2];  // (distance, index)
  for (std::size_t probe = 0; probe < n; ++probe) {
    by_class[0].clear();
    by_class[1].clear();
    for (std::size_t other = 0; other < n; ++other) {
      if (other == probe) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < p; ++j) dist += diff(j, probe, other);
      by_class[static_cast<std::size_t>(labels[other])].emplace_back(dist, other);
    }
    for (auto& v : by_class) {
      std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size())),
                        v.end());  // pair ordering = (distance, original index)
    }

    const std::size_t own = static_cast<std::size_t>(labels[probe]);
    const double denom = static_cast<double>(n) * static_cast<double>(k);
    for (std::size_t c = 0; c < 2; ++c) {
      const double weight =
          c == own ? -1.0 : priors[c] / (1.0 - priors[own]);  // hits subtract, misses add
      for (std::size_t t = 0; t < k; ++t) {
        const std::size_t neigh = by_class[c][t].second;
        for (std::size_t j = 0; j < p; ++j) w[j] += weight * diff(j, probe, neigh) / denom;
      }
    }
  }

  FeatureScore out;
  out.method = "relieff";
  out.scores = std::move(w);
  return out;
}

std::vector<std::size_t> select_top_k(const FeatureScore& score, std::size_t k) {
  const std::size_t p = score.scores.size();
  if (k < 1 || k > p)
    throw ConfigError("select_top_k: k=" + std::to_string(k) + " outside [1," +
                      std::to_string(p) + "]");
  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return score.scores[a] > score.scores[b];  // stable: ties keep lower index first
  });
  idx.resize(k);
  return idx;
}

LinearClassifierResult linear_focal_classifier(const Matrix& train_features,
                                               const std::vector<int>& train_labels,
                                               const Matrix& test_features,
                                               const TrainConfig& train_cfg,
                                               const FocalConfig& focal_cfg) {
  check_labeled_matrix(train_features, train_labels);
  train_cfg.validate();
  focal_cfg.validate();
  const std::size_t n = train_features.size();
  const std::size_t p = train_features[0].size();
  for (const auto& row : test_features)
    if (row.size() != p) throw ShapeError("linear_focal_classifier: test feature width mismatch");

  Rng rng(train_cfg.seed);
  Tensor weight = Tensor::zeros({p, 2});
  Tensor bias = Tensor::zeros({2});
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(p));
    for (auto& v : weight.data) v = bound * (2.0 * rng.uniform() - 1.0);
  }
  Tensor v_w = Tensor::zeros({p, 2});
  Tensor v_b = Tensor::zeros({2});

  auto gather = [&](const Matrix& m, const std::vector<std::size_t>& rows) {
    Tensor x = Tensor::zeros({rows.size(), p});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < p; ++j) x.data[i * p + j] = m[rows[i]][j];
    return x;
  };

  LinearClassifierResult res;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t steps_per_epoch = (n + train_cfg.batch_source - 1) / train_cfg.batch_source;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, train_cfg);
    rng.shuffle(order);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * train_cfg.batch_source;
      const std::size_t hi = std::min(lo + train_cfg.batch_source, n);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                   order.begin() + static_cast<std::ptrdiff_t>(hi));
      std::vector<int> yb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = train_labels[idx[i]];

      Tape t;
      Var w = t.param(weight);
      Var bb = t.param(bias);
      Var logits = add(matmul(t.constant(gather(train_features, idx)), w), bb);
      Var loss = focal_loss(t, true_class_probs(t, logits, yb), focal_cfg);
      const double loss_v = t.value(loss).data[0];
      if (!std::isfinite(loss_v))
        throw ContractError("linear_focal_classifier: non-finite loss at step " +
                            std::to_string(step));
      t.backward(loss);

      const Tensor& gw = t.grad(w);
      const Tensor& gb = t.grad(bb);
      for (std::size_t j = 0; j < weight.numel(); ++j) {
        v_w.data[j] = train_cfg.momentum * v_w.data[j] +
                      (gw.data[j] + train_cfg.weight_decay * weight.data[j]);
        weight.data[j] -= lr * v_w.data[j];
      }
      for (std::size_t j = 0; j < bias.numel(); ++j) {
        v_b.data[j] = train_cfg.momentum * v_b.data[j] +
                      (gb.data[j] + train_cfg.weight_decay * bias.data[j]);
        bias.data[j] -= lr * v_b.data[j];
      }
      res.step_losses.push_back(loss_v);
      ++step;
    }
  }

  res.weight = weight;
  res.bias = bias;
  if (!test_features.empty()) {
    std::vector<std::size_t> all(test_features.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Tape t;
    Var logits =
        add(matmul(t.constant(gather(test_features, all)), t.constant(weight)), t.constant(bias));
    res.predictions = predict(t.value(logits));
  }
  return res;
}

}  // namespace arft

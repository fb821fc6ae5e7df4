#pragma once

#include <optional>
#include <string>
#include <vector>

#include "arft/common.hpp"
#include "arft/rng.hpp"

namespace arft {

// Tabular metric matrix for one project (or a concatenation of projects).
// Labels are optional: source datasets carry them, target datasets usually
// do not (0 = ARB-free, 1 = ARB-prone).
struct Dataset {
  std::string project_id;
  std::vector<std::string> metric_names;
  std::vector<std::vector<double>> features;  // N rows of p values each
  std::optional<std::vector<int>> labels;

  std::size_t n_rows() const { return features.size(); }
  std::size_t n_features() const { return metric_names.size(); }
  bool has_labels() const { return labels.has_value(); }

  // Enforces the structural invariants; throws on violation.
  void validate() const;
};

struct NormalizationStats {
  std::vector<double> mean;  // per-feature global mean
  std::vector<double> std;   // per-feature global population std
  double eps = 1e-8;
};

// Reads a CSV with a header row. If label_column is given, that column is
// split off as labels (values must parse to 0 or 1); remaining columns become
// metrics in header order. project_id is the file stem.
Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column);

// Writes the dataset back to CSV. Floats use %.17g so a round-trip through
// text reproduces the exact binary64 values. When with_labels is set the
// label column is appended as "label".
void write_csv(const Dataset& d, const std::string& path, bool with_labels);

// Normalizes both datasets with statistics pooled over all rows of both
// (population std, divisor N_s + N_t). Returns the transformed datasets and
// the stats used. Cell transform: (x - mean) / (std + eps).
struct GlobalNormalizeResult {
  Dataset source;
  Dataset target;
  NormalizationStats stats;
};
GlobalNormalizeResult global_normalize(const Dataset& source, const Dataset& target, double eps);

// Duplicates minority-class rows uniformly at random (with replacement) until
// the class counts match, then shuffles the row order. All original rows are
// retained.
Dataset random_oversample(const Dataset& d, Rng& rng);

// Row-wise concatenation of labeled datasets with identical schemas.
// project_id becomes the '+'-joined ids.
Dataset concat_projects(const std::vector<Dataset>& datasets);

}  // namespace arft

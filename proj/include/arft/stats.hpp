#pragma once

#include <string>
#include <vector>

#include "arft/common.hpp"
#include "arft/dataset.hpp"

namespace arft {

// Thrown when a correlation has no defined value (too few points or a
// zero-variance rank vector).
struct UndefinedCorrelationError : std::runtime_error {
  explicit UndefinedCorrelationError(const std::string& msg)
      : std::runtime_error("undefined correlation: " + msg) {}
};

// Average (midrank) ranks, 1-based; ties share the mean of their positions.
std::vector<double> midranks(const std::vector<double>& x);

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation. Needed for the Student-t tail; kept public for testability.
double ibeta_reg(double a, double b, double x);

// Two-sided p-value of a t statistic with nu degrees of freedom:
// p = I_{nu/(nu+t^2)}(nu/2, 1/2).
double student_t_two_sided_p(double t, double nu);

struct SpearmanResult {
  double rho;
  double p_value;
};

// Spearman rank correlation with midrank ties. The p-value uses the
// t-approximation t = rho * sqrt((n-2)/(1-rho^2)) with n-2 degrees of
// freedom; rho = +/-1 gives p = 0 exactly.
SpearmanResult spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

struct PairRecord {
  std::size_t i = 0, j = 0;      // column indices, i < j
  std::string metric_i, metric_j;
  double rho = 0.0, p_value = 1.0;
  bool significant = false;
  bool defined = true;  // false when a column is constant
};

struct CorrelationReport {
  std::size_t total_pairs = 0;
  std::size_t correlated_pairs = 0;  // significant pairs
  std::size_t undefined_pairs = 0;
  double rho_abs_min = 0.3;
  double alpha = 0.05;
  std::vector<PairRecord> pairs;
};

// Evaluates Spearman correlation for every unordered metric pair of d.
// A pair is significant iff |rho| > rho_abs_min and p < alpha. Pairs with a
// constant column are flagged undefined and never significant.
CorrelationReport correlation_report(const Dataset& d, double rho_abs_min = 0.3,
                                     double alpha = 0.05);

}  // namespace arft

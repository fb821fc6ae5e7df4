#include "arft/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace arft {

std::vector<double> midranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    // positions i..j (0-based) share the average 1-based rank
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz). Converges in a
// handful of iterations for the a, b values the t-distribution produces.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double pearson_on_ranks(const std::vector<double>& rx, const std::vector<double>& ry,
                        bool& defined) {
  const std::size_t n = rx.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    defined = false;
    return 0.0;
  }
  defined = true;
  double rho = sxy / std::sqrt(sxx * syy);
  // rounding can push |rho| just past 1
  return std::clamp(rho, -1.0, 1.0);
}

}  // namespace

double ibeta_reg(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ContractError("ibeta_reg: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double nu) {
  if (nu <= 0.0) throw ContractError("student_t_two_sided_p: degrees of freedom must be positive");
  if (!std::isfinite(t)) return 0.0;
  return ibeta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
}

SpearmanResult spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ContractError("spearman_rho: length mismatch " + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()));
  const std::size_t n = x.size();
  if (n < 3)
    throw UndefinedCorrelationError("need at least 3 observations, got " + std::to_string(n));

  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  bool defined = false;
  const double rho = pearson_on_ranks(rx, ry, defined);
  if (!defined) throw UndefinedCorrelationError("zero rank variance (constant input)");

  double p;
  if (std::abs(rho) >= 1.0) {
    p = 0.0;
  } else {
    const double df = static_cast<double>(n) - 2.0;
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    p = student_t_two_sided_p(t, df);
  }
  return SpearmanResult{rho, p};
}

CorrelationReport correlation_report(const Dataset& d, double rho_abs_min, double alpha) {
  const std::size_t n = d.n_rows();
  const std::size_t p = d.n_features();
  if (n < 3)
    throw ContractError("correlation_report: need at least 3 rows, got " + std::to_string(n));

  // Rank each column once; every pair is then a Pearson pass over ranks.
  std::vector<std::vector<double>> ranks(p);
  std::vector<char> constant(p, 0);
  {
    std::vector<double> col(n);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t r = 0; r < n; ++r) col[r] = d.features[r][j];
      constant[j] = std::all_of(col.begin(), col.end(), [&](double v) { return v == col[0]; });
      ranks[j] = midranks(col);
    }
  }

  CorrelationReport rep;
  rep.rho_abs_min = rho_abs_min;
  rep.alpha = alpha;
  rep.total_pairs = p * (p - 1) / 2;
  rep.pairs.reserve(rep.total_pairs);

  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) {
      PairRecord rec;
      rec.i = i;
      rec.j = j;
      rec.metric_i = d.metric_names[i];
      rec.metric_j = d.metric_names[j];
      if (constant[i] || constant[j]) {
        rec.defined = false;
        ++rep.undefined_pairs;
      } else {
        bool defined = false;
        rec.rho = pearson_on_ranks(ranks[i], ranks[j], defined);
        if (!defined) {
          rec.defined = false;
          ++rep.undefined_pairs;
        } else if (std::abs(rec.rho) >= 1.0) {
          rec.p_value = 0.0;
        } else {
          const double df = static_cast<double>(n) - 2.0;
          const double t = rec.rho * std::sqrt(df / (1.0 - rec.rho * rec.rho));
          rec.p_value = student_t_two_sided_p(t, df);
        }
        rec.significant =
            rec.defined && std::abs(rec.rho) > rho_abs_min && rec.p_value < alpha;
        if (rec.significant) ++rep.correlated_pairs;
      }
      rep.pairs.push_back(std::move(rec));
    }
  }
  return rep;
}

}  // namespace arft

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "arft/common.hpp"
#include "arft/rng.hpp"
#include "arft/stats.hpp"

using namespace arft;

namespace {

// Independent rank oracle: sort positions, walk equal runs, assign the mean
// 1-based position to every member of a run.
std::vector<double> oracle_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("midranks handles distinct values, ties, and degenerate inputs") {
  CHECK(midranks({10, 20, 20, 30}) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
  CHECK(midranks({3, 2, 1}) == std::vector<double>{3.0, 2.0, 1.0});
  CHECK(midranks({5, 5, 5}) == std::vector<double>{2.0, 2.0, 2.0});
  CHECK(midranks({7}) == std::vector<double>{1.0});
}

TEST_CASE("ibeta_reg matches closed forms") {
  // I_x(1,1) = x
  for (const double x : {0.1, 0.25, 0.5, 0.75, 0.9})
    CHECK(ibeta_reg(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
  // I_x(a,1) = x^a
  CHECK(ibeta_reg(3.0, 1.0, 0.4) == doctest::Approx(std::pow(0.4, 3.0)).epsilon(1e-12));
  // I_x(1,b) = 1 - (1-x)^b
  CHECK(ibeta_reg(1.0, 4.0, 0.3) ==
        doctest::Approx(1.0 - std::pow(0.7, 4.0)).epsilon(1e-12));
  // I_x(1/2,1/2) = (2/pi) asin(sqrt(x))
  const double pi = 3.14159265358979323846;
  for (const double x : {0.2, 0.5, 0.8})
    CHECK(ibeta_reg(0.5, 0.5, x) ==
          doctest::Approx(2.0 / pi * std::asin(std::sqrt(x))).epsilon(1e-10));
  // boundaries
  CHECK(ibeta_reg(2.0, 3.0, 0.0) == 0.0);
  CHECK(ibeta_reg(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("ibeta_reg respects the reflection symmetry") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double a = 0.5 + rng.uniform() * 5.0;
    const double b = 0.5 + rng.uniform() * 5.0;
    const double x = 0.01 + rng.uniform() * 0.98;
    CHECK(ibeta_reg(a, b, x) == doctest::Approx(1.0 - ibeta_reg(b, a, 1.0 - x)).epsilon(1e-10));
  }
}

TEST_CASE("ibeta_reg rejects nonpositive shape parameters") {
  CHECK_THROWS_AS(ibeta_reg(0.0, 1.0, 0.5), ContractError);
  CHECK_THROWS_AS(ibeta_reg(1.0, -1.0, 0.5), ContractError);
}

TEST_CASE("student_t_two_sided_p matches Cauchy and nu=2 closed forms") {
  // nu=1 (Cauchy): p = 1 - 2*atan(t)/pi
  const double pi = 3.14159265358979323846;
  for (const double t : {0.5, 1.0, 2.0, 5.0})
    CHECK(student_t_two_sided_p(t, 1.0) ==
          doctest::Approx(1.0 - 2.0 * std::atan(t) / pi).epsilon(1e-10));
  // nu=2: p = 1 - t/sqrt(2+t^2)
  for (const double t : {0.5, 1.0, 3.0})
    CHECK(student_t_two_sided_p(t, 2.0) ==
          doctest::Approx(1.0 - t / std::sqrt(2.0 + t * t)).epsilon(1e-10));
  CHECK(student_t_two_sided_p(0.0, 10.0) == doctest::Approx(1.0).epsilon(1e-12));
  // large-nu normal limit: t=1.96 -> ~0.05
  CHECK(student_t_two_sided_p(1.959963985, 100000.0) == doctest::Approx(0.05).epsilon(1e-3));
}

TEST_CASE("spearman_rho endpoints: monotone and antitone sequences") {
  const auto up = spearman_rho({1, 2, 3}, {10, 20, 30});
  CHECK(up.rho == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(up.p_value == 0.0);
  const auto down = spearman_rho({1, 2, 3}, {3, 2, 1});
  CHECK(down.rho == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(down.p_value == 0.0);
}

TEST_CASE("spearman_rho tie handling matches the analytic value") {
  // ranks x = [1, 2.5, 2.5, 4], y = [1,2,3,4]: rho = sqrt(0.9)
  const auto r = spearman_rho({1, 2, 2, 3}, {1, 2, 3, 4});
  CHECK(r.rho == doctest::Approx(std::sqrt(0.9)).epsilon(1e-12));
}

TEST_CASE("spearman_rho matches a brute-force rank-then-Pearson oracle") {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.uniform_int(45);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid so ties actually occur
      x[i] = std::floor(rng.uniform() * 8.0);
      y[i] = std::floor(rng.uniform() * 8.0) + 0.25 * x[i];
    }
    const auto rx = oracle_ranks(x);
    const auto ry = oracle_ranks(y);
    double vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      vx += (rx[i] - rx[0]) * (rx[i] - rx[0]);
      vy += (ry[i] - ry[0]) * (ry[i] - ry[0]);
    }
    if (vx == 0.0 || vy == 0.0) {
      CHECK_THROWS_AS(spearman_rho(x, y), UndefinedCorrelationError);
      continue;
    }
    const double expected = std::clamp(oracle_pearson(rx, ry), -1.0, 1.0);
    const auto got = spearman_rho(x, y);
    CHECK(got.rho == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got.p_value >= 0.0);
    CHECK(got.p_value <= 1.0);
  }
}

TEST_CASE("spearman_rho is symmetric and invariant under increasing transforms") {
  Rng rng(8);
  std::vector<double> x(30), y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal() + 0.5 * x[i];
  }
  const auto xy = spearman_rho(x, y);
  const auto yx = spearman_rho(y, x);
  CHECK(xy.rho == yx.rho);

  std::vector<double> ex(30), cubed(30);
  for (std::size_t i = 0; i < 30; ++i) {
    ex[i] = std::exp(x[i]);            // strictly increasing
    cubed[i] = y[i] * y[i] * y[i];     // strictly increasing
  }
  const auto t1 = spearman_rho(ex, y);
  const auto t2 = spearman_rho(x, cubed);
  CHECK(std::abs(t1.rho - xy.rho) <= 1e-12);
  CHECK(std::abs(t2.rho - xy.rho) <= 1e-12);
}

TEST_CASE("spearman_rho rejects degenerate input") {
  CHECK_THROWS_AS(spearman_rho({1, 2}, {1, 2}), UndefinedCorrelationError);
  CHECK_THROWS_AS(spearman_rho({1, 1, 1}, {1, 2, 3}), UndefinedCorrelationError);
  CHECK_THROWS_AS(spearman_rho({1, 2, 3}, {1, 2}), ContractError);
}

TEST_CASE("correlation_report counts all unordered pairs for p=52") {
  Dataset d;
  d.project_id = "p52";
  Rng rng(5);
  for (int c = 0; c < 52; ++c) d.metric_names.push_back("m" + std::to_string(c + 1));
  for (int r = 0; r < 10; ++r) {
    std::vector<double> row(52);
    for (auto& v : row) v = rng.normal();
    d.features.push_back(row);
  }
  const auto rep = correlation_report(d, 0.3, 0.05);
  CHECK(rep.total_pairs == 1326);  // C(52,2)
  CHECK(rep.pairs.size() == 1326);
  CHECK(rep.correlated_pairs <= rep.total_pairs);
}

TEST_CASE("correlation_report flags a perfectly correlated pair as significant") {
  Dataset d;
  d.metric_names = {"a", "b", "noise"};
  Rng rng(6);
  for (int r = 0; r < 100; ++r) {
    const double v = rng.normal();
    d.features.push_back({v, 2.0 * v + 1.0, rng.normal()});
  }
  const auto rep = correlation_report(d, 0.3, 0.05);
  REQUIRE(rep.total_pairs == 3);
  const auto& ab = rep.pairs[0];
  CHECK(ab.metric_i == "a");
  CHECK(ab.metric_j == "b");
  CHECK(ab.rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ab.significant);
  CHECK(rep.correlated_pairs >= 1);
}

TEST_CASE("correlation_report marks constant-column pairs undefined, never significant") {
  Dataset d;
  d.metric_names = {"x", "const", "y"};
  Rng rng(7);
  for (int r = 0; r < 50; ++r) d.features.push_back({rng.normal(), 3.0, rng.normal()});
  const auto rep = correlation_report(d, 0.3, 0.05);
  CHECK(rep.total_pairs == 3);
  CHECK(rep.undefined_pairs == 2);
  for (const auto& pr : rep.pairs) {
    if (pr.metric_i == "const" || pr.metric_j == "const") {
      CHECK_FALSE(pr.defined);
      CHECK_FALSE(pr.significant);
    } else {
      CHECK(pr.defined);
    }
  }
}

TEST_CASE("correlation_report needs at least three rows") {
  Dataset d;
  d.metric_names = {"a", "b"};
  d.features = {{1.0, 2.0}, {3.0, 4.0}};
  CHECK_THROWS_AS(correlation_report(d, 0.3, 0.05), ContractError);
}

TEST_CASE("correlation_report honors the significance thresholds") {
  Dataset d;
  d.metric_names = {"a", "b"};
  Rng rng(9);
  for (int r = 0; r < 60; ++r) {
    const double v = rng.normal();
    d.features.push_back({v, v + 0.3 * rng.normal()});
  }
  const auto strict = correlation_report(d, 0.999, 0.05);  // rho threshold unreachable
  CHECK(strict.correlated_pairs == 0);
  const auto loose = correlation_report(d, 0.3, 0.05);
  CHECK(loose.correlated_pairs == 1);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "arft/rng.hpp"
#include "arft/tape.hpp"
#include "arft/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

inline arft::Tensor random_tensor(arft::Rng& rng, arft::Shape shape, double lo = -1.0,
                                  double hi = 1.0) {
  arft::Tensor t = arft::Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central-difference gradient check. `build` must deterministically construct
// a scalar loss from the given leaf Vars (same graph every call); it is
// re-invoked on a fresh tape for every perturbed evaluation.
template <typename BuildFn>
GradCheck check_gradients(const std::vector<arft::Tensor>& params, BuildFn build,
                          double h = 1e-5) {
  std::vector<arft::Tensor> analytic;
  {
    arft::Tape t;
    std::vector<arft::Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(t.param(p));
    arft::Var loss = build(t, vars);
    t.backward(loss);
    for (const auto& v : vars) analytic.push_back(t.grad(v));
  }
  auto eval = [&](const std::vector<arft::Tensor>& ps) {
    arft::Tape t;
    std::vector<arft::Var> vars;
    vars.reserve(ps.size());
    for (const auto& p : ps) vars.push_back(t.param(p));
    return t.value(build(t, vars)).data[0];
  };

  GradCheck res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].numel(); ++j) {
      std::vector<arft::Tensor> plus = params;
      std::vector<arft::Tensor> minus = params;
      plus[i].data[j] += h;
      minus[i].data[j] -= h;
      const double numeric = (eval(plus) - eval(minus)) / (2.0 * h);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(numeric, analytic[i].data[j]));
      ++res.checked;
    }
  }
  return res;
}

inline bool all_close(const std::vector<double>& a, const std::vector<double>& b,
                      double tol = 1e-9) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

}  // namespace testutil

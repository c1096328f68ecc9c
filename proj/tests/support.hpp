#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "xsrank/numkernel.hpp"

namespace xsrank::testing {

/// Central differences of f at every entry of every tensor in `at`.
/// order 2: (f(x+h) - f(x-h)) / 2h. order 4: the five-point stencil, whose
/// O(h^4) truncation allows a larger h and so less rounding noise.
inline std::vector<nk::Tensor> numeric_gradient(const std::function<double(const std::vector<nk::Tensor>&)>& f,
                                                std::vector<nk::Tensor> at, double h = 1e-6, int order = 2) {
  std::vector<nk::Tensor> out;
  for (std::size_t k = 0; k < at.size(); ++k) {
    nk::Tensor g = nk::Tensor::zeros(at[k].shape());
    for (std::size_t i = 0; i < at[k].size(); ++i) {
      const double x0 = at[k][i];
      auto at_offset = [&](double dx) {
        at[k][i] = x0 + dx;
        const double v = f(at);
        at[k][i] = x0;
        return v;
      };
      if (order == 4)
        g[i] = (8.0 * (at_offset(h) - at_offset(-h)) - (at_offset(2 * h) - at_offset(-2 * h))) / (12.0 * h);
      else
        g[i] = (at_offset(h) - at_offset(-h)) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Largest |a - n| / max(|a|, |n|, floor) over entries. Central differences
/// carry ~1e-10 absolute rounding noise at h = 1e-5, so entries far below
/// `floor` are effectively compared in absolute terms.
inline double max_relative_error(const std::vector<nk::Tensor>& analytic, const std::vector<nk::Tensor>& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k)
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      const double a = analytic[k][i], n = numeric[k][i];
      const double scale = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / scale);
    }
  return worst;
}

inline nk::Tensor random_matrix(nk::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = scale * rng.normal();
  return nk::Tensor::matrix(r, c, std::move(v));
}

inline nk::Tensor random_vector(nk::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return nk::Tensor::vector(std::move(v));
}

}  // namespace xsrank::testing

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "lsg/error.hpp"
#include "lsg/matrix.hpp"

namespace lsg {

/// Central-difference gradient check. Returns the largest relative error
/// |a - n| / max(|a|, |n|, 1e-8) over all entries of `x`.
inline double finite_difference_check(const std::function<double(const Matrix&)>& f,
                                      const Matrix& x, const Matrix& analytic,
                                      double h = 1e-5) {
  if (!(h > 0.0)) throw ValueError("finite_difference_check: step must be positive");
  detail::require_same_shape(x, analytic, "finite_difference_check");
  Matrix probe = x;
  double worst = 0.0;
  auto pd = probe.data();
  auto ad = analytic.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double fp = f(probe);
    pd[i] = orig - h;
    const double fm = f(probe);
    pd[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw ValueError("finite_difference_check: non-finite evaluation at entry " +
                       std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(ad[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(ad[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace lsg

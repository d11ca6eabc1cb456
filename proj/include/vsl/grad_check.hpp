#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vsl/errors.hpp"

namespace vsl {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Central-difference check of an analytic gradient. For each coordinate i,
// the numeric derivative (f(x + h e_i) - f(x - h e_i)) / 2h is compared to
// analytic_grad[i]; the relative error is
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// skip, when given, excludes a coordinate from the check (kink exclusion).
// Throws NumericalError when f evaluates to a non-finite value.
GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& point,
                           const std::vector<double>& analytic_grad, double h = 1e-5,
                           const std::function<bool(std::size_t)>& skip = {});

}  // namespace vsl

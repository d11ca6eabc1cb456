#include "vsl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vsl {

GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& point,
                           const std::vector<double>& analytic_grad, double h,
                           const std::function<bool(std::size_t)>& skip) {
  if (point.size() != analytic_grad.size()) {
    throw ShapeError("grad_check: gradient length does not match point length");
  }
  GradCheckReport report;
  std::vector<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (skip && skip(i)) continue;
    probe[i] = point[i] + h;
    const double up = f(probe);
    probe[i] = point[i] - h;
    const double down = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("grad_check: non-finite objective at coordinate " +
                           std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coordinates_checked;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = i;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace vsl

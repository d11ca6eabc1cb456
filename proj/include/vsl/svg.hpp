#pragma once

#include <string>
#include <vector>

namespace vsl {

// Minimal recall-curve plot: one polyline per series, k on a log-scaled x
// axis, recall in [0,1] on y.
class SvgLinePlot {
 public:
  SvgLinePlot(std::string title, std::string x_label, std::string y_label);

  void add_series(const std::string& name, const std::vector<double>& xs,
                  const std::vector<double>& ys);

  std::string render() const;
  void write(const std::string& path) const;

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
};

}  // namespace vsl

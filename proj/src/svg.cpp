#include "vsl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vsl/errors.hpp"

namespace vsl {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 30, kTop = 46, kBottom = 56;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

}  // namespace

SvgLinePlot::SvgLinePlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgLinePlot::add_series(const std::string& name, const std::vector<double>& xs,
                             const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw ValidationError("svg: series must be nonempty with equal x/y lengths");
  }
  for (double x : xs) {
    if (x <= 0) throw ValidationError("svg: log-scale x values must be positive");
  }
  series_.push_back({name, xs, ys});
}

std::string SvgLinePlot::render() const {
  double x_min = 1e300, x_max = -1e300;
  for (const Series& s : series_) {
    for (double x : s.xs) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (series_.empty()) {
    x_min = 1;
    x_max = 10;
  }
  if (x_min == x_max) x_max = x_min * 10;
  const double lx_min = std::log10(x_min), lx_max = std::log10(x_max);

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) {
    return kLeft + (std::log10(x) - lx_min) / (lx_max - lx_min) * plot_w;
  };
  auto py = [&](double y) { return kTop + (1.0 - std::min(1.0, std::max(0.0, y))) * plot_h; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title_ << "</text>\n";

  // y grid lines at 0, 0.2 ... 1
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    out << "<line x1=\"" << kLeft << "\" y1=\"" << fmt(py(y)) << "\" x2=\"" << kWidth - kRight
        << "\" y2=\"" << fmt(py(y)) << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(y) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(y)
        << "</text>\n";
  }
  // x ticks at powers of ten and 2x/5x in range
  for (int e = static_cast<int>(std::floor(lx_min)); e <= static_cast<int>(std::ceil(lx_max));
       ++e) {
    for (double mult : {1.0, 2.0, 5.0}) {
      const double x = mult * std::pow(10.0, e);
      if (x < x_min * 0.999 || x > x_max * 1.001) continue;
      out << "<line x1=\"" << fmt(px(x)) << "\" y1=\"" << kTop << "\" x2=\"" << fmt(px(x))
          << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"#eeeeee\"/>\n"
          << "<text x=\"" << fmt(px(x)) << "\" y=\"" << kHeight - kBottom + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(x)
          << "</text>\n";
    }
  }
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333333\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label_
      << "</text>\n"
      << "<text x=\"18\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 18 " << kHeight / 2 << ")\">" << y_label_ << "</text>\n";

  for (std::size_t si = 0; si < series_.size(); ++si) {
    const Series& s = series_[si];
    const char* color = kColors[si % (sizeof(kColors) / sizeof(kColors[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      out << fmt(px(s.xs[i])) << "," << fmt(py(s.ys[i])) << " ";
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      out << "<circle cx=\"" << fmt(px(s.xs[i])) << "\" cy=\"" << fmt(py(s.ys[i]))
          << "\" r=\"2.6\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 16 + 16 * static_cast<double>(si);
    out << "<line x1=\"" << kLeft + 10 << "\" y1=\"" << fmt(ly - 4) << "\" x2=\""
        << kLeft + 34 << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << kLeft + 40 << "\" y=\"" << fmt(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void SvgLinePlot::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << render();
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace vsl

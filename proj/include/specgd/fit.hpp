#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "error.hpp"

namespace specgd {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_ = 0.0;  // standard error of the slope
};

/// Ordinary least squares of log(value) on log(n).
inline SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw ConfigError("fit_slope: need at least 3 points");
  const double k = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  std::vector<double> x, y;
  for (const auto& [n, v] : points) {
    if (!(n > 0.0 && v > 0.0)) throw ConfigError("fit_slope: points must be positive");
    x.push_back(std::log(n));
    y.push_back(std::log(v));
    mx += x.back();
    my += y.back();
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_slope: abscissae must not all coincide");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  f.stderr_ = std::sqrt(rss / (k - 2.0) / sxx);
  return f;
}

}  // namespace specgd

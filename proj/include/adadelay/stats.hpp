#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adadelay/rng.hpp"

namespace adadelay {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Unbiased sample standard deviation; 0 for a single observation.
inline double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double standard_error(const std::vector<double>& v) {
  return sample_stddev(v) / std::sqrt(static_cast<double>(v.size()));
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("least_squares needs >= 2 paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("least_squares: degenerate abscissae");
  LinearFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

// One-sided sign test: probability of >= wins successes in n fair coin flips.
inline double sign_test_p_value(int wins, int n) {
  if (wins < 0 || n < 1 || wins > n) throw std::invalid_argument("sign_test: bad counts");
  // sum of C(n,k)/2^n for k = wins..n, computed in log space
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    double log_c = 0.0;
    for (int i = 0; i < k; ++i) {
      log_c += std::log(static_cast<double>(n - i)) - std::log(static_cast<double>(i + 1));
    }
    p += std::exp(log_c - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(p, 1.0);
}

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace adadelay

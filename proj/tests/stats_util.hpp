#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace testutil {

template <class Cdf>
double ks_distance(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double c = cdf(xs[i]);
    d = std::max({d, std::abs(c - i / n), std::abs((i + 1) / n - c)});
  }
  return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

/// Pearson chi-square of samples against a Gaussian N(0, sd^2) on k
/// equiprobable bins; returns (statistic, 1% critical value).
inline std::pair<double, double> gaussian_chi_square(const std::vector<double>& xs, double sd,
                                                     int k = 20) {
  boost::math::normal_distribution<double> nd(0.0, sd);
  std::vector<double> counts(k, 0.0);
  for (double x : xs) {
    int b = static_cast<int>(boost::math::cdf(nd, x) * k);
    counts[std::clamp(b, 0, k - 1)] += 1;
  }
  const double expected = static_cast<double>(xs.size()) / k;
  double stat = 0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared_distribution<double> chi(k - 1);
  return {stat, boost::math::quantile(boost::math::complement(chi, 0.01))};
}

}  // namespace testutil

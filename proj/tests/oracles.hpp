#pragma once

#include "curbsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing {

/// Two-sample KS distance by scanning both empirical CDFs at every sample point.
inline double brute_ks(const std::vector<double>& a, const std::vector<double>& b)
{
  std::vector<double> xs(a);
  xs.insert(xs.end(), b.begin(), b.end());
  double d = 0.0;
  for (double x : xs) {
    const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; })) /
                      static_cast<double>(a.size());
    const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; })) /
                      static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

/// Probability that a random positive outscores a random negative, ties counted half.
inline double pairwise_auc(const std::vector<curbsense::metrics::Scored>& rs)
{
  double wins = 0.0, pairs = 0.0;
  for (const auto& p : rs)
    for (const auto& n : rs)
      if (p.positive && !n.positive) {
        pairs += 1.0;
        wins += p.score > n.score ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
      }
  return wins / pairs;
}

} // namespace testing

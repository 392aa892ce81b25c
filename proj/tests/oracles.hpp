#pragma once

// Test-only oracles, kept independent of the library's own verification
// paths: direct enumeration / integration of code averages, a trapezoidal ROC
// integrator to cross-check the rank-based AUC, and small statistics helpers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "uwmark/reweight.hpp"

namespace oracle {

/// Random full-support simplex point (normalized exponentials).
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    v = -std::log(u);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// Random simplex point with roughly a third of the entries forced to zero.
inline std::vector<double> random_simplex_with_zeros(std::mt19937_64& rng, std::size_t n) {
  auto p = random_simplex(rng, n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng() % 3 == 0 && n > 1) p[i] = 0.0;
    any = any || p[i] > 0.0;
  }
  if (!any) p[0] = 1.0;
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= sum;
  return p;
}

/// E_u[R_u(P)] for the delta reweight by direct integration: the map is
/// piecewise constant between running-sum breakpoints, so evaluate the
/// reweight at each piece's midpoint and weight by the piece length.
inline std::vector<double> integrate_delta_mean(const uwm::TokenDistribution& dist) {
  std::vector<double> breaks = {0.0};
  double acc = 0.0;
  for (std::size_t t = 0; t < dist.size(); ++t) {
    acc += dist.prob(static_cast<uwm::TokenId>(t));
    breaks.push_back(std::min(acc, 1.0));
  }
  std::vector<double> mean(dist.size(), 0.0);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = breaks[i], hi = breaks[i + 1];
    if (hi <= lo) continue;
    const auto out = uwm::delta_reweight(dist, uwm::UnitRealCode{0.5 * (lo + hi)});
    for (std::size_t t = 0; t < mean.size(); ++t)
      mean[t] += (hi - lo) * out.prob(static_cast<uwm::TokenId>(t));
  }
  return mean;
}

/// E_E[R_E(P)] for the gamma reweight by enumerating every shuffled order.
inline std::vector<double> enumerate_gamma_mean(const uwm::TokenDistribution& dist) {
  const auto n = static_cast<std::uint32_t>(dist.size());
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> mean(n, 0.0);
  std::uint64_t count = 0;
  do {
    const auto out = uwm::gamma_reweight(dist, uwm::PermutationCode::from_shuffled(order));
    for (std::size_t t = 0; t < n; ++t) mean[t] += out.prob(static_cast<uwm::TokenId>(t));
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : mean) v /= static_cast<double>(count);
  return mean;
}

/// E_E[R_E(P)] for a red-list reweight by recursive partition enumeration.
inline std::vector<double> enumerate_red_mean(const uwm::Reweighter& rw,
                                              const uwm::TokenDistribution& dist) {
  const auto n = static_cast<std::uint32_t>(dist.size());
  const std::uint32_t greens = rw.green_count(n);
  std::vector<double> mean(n, 0.0);
  std::uint64_t count = 0;
  std::vector<std::uint8_t> mask(n, 0);
  const auto recurse = [&](auto&& self, std::uint32_t next, std::uint32_t placed) -> void {
    if (placed == greens) {
      const auto out = rw.apply(dist, uwm::RedGreenCode{mask});
      for (std::size_t t = 0; t < n; ++t) mean[t] += out.prob(static_cast<uwm::TokenId>(t));
      ++count;
      return;
    }
    if (next >= n || n - next < greens - placed) return;
    mask[next] = 1;
    self(self, next + 1, placed + 1);
    mask[next] = 0;
    self(self, next + 1, placed);
  };
  recurse(recurse, 0, 0);
  for (auto& v : mean) v /= static_cast<double>(count);
  return mean;
}

/// AUC by trapezoidal integration of the empirical ROC curve.
inline double trapezoid_auc(std::vector<double> w, std::vector<double> n) {
  std::vector<double> thresholds = w;
  thresholds.insert(thresholds.end(), n.begin(), n.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  double area = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
  for (double thr : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (double v : w) tp += v >= thr ? 1.0 : 0.0;
    for (double v : n) fp += v >= thr ? 1.0 : 0.0;
    const double tpr = tp / static_cast<double>(w.size());
    const double fpr = fp / static_cast<double>(n.size());
    area += (fpr - prev_fpr) * 0.5 * (tpr + prev_tpr);
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1.0 - prev_fpr) * 0.5 * (1.0 + prev_tpr);
  return area;
}

/// Two-sided Kolmogorov-Smirnov statistic against Uniform[0,1].
inline double ks_uniform_statistic(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double hi = (static_cast<double>(i) + 1.0) / n - values[i];
    const double lo = values[i] - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  return d;
}

/// Pearson correlation.
inline double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle

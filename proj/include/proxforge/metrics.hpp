/* Copyright 2026 The ProxForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

/// \file metrics.hpp
/// Rank correlations and the joint correlation metric.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "proxforge/error.hpp"

namespace proxforge {

namespace detail {

inline void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw LengthMismatch("series lengths " + std::to_string(xs.size()) + " and " + std::to_string(ys.size()));
  if (xs.size() < 2) throw DegenerateInput("correlation needs at least two samples");
}

inline int sgn(double x) noexcept { return (x > 0) - (x < 0); }

}  // namespace detail

/// Kendall tau-a: sum over pairs of sgn(dx) sgn(dy), divided by C(n,2).
/// Tied pairs contribute zero. NaN for constant input.
inline double kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys);
  const std::size_t n = xs.size();
  long long s = 0;
  bool x_const = true, y_const = true;
  for (std::size_t i = 0; i < n; ++i) {
    x_const = x_const && xs[i] == xs[0];
    y_const = y_const && ys[i] == ys[0];
    for (std::size_t j = i + 1; j < n; ++j) s += detail::sgn(xs[i] - xs[j]) * detail::sgn(ys[i] - ys[j]);
  }
  if (x_const || y_const) return std::numeric_limits<double>::quiet_NaN();
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return static_cast<double>(s) / pairs;
}

/// Centered covariance ratio, two-pass. NaN when either series has zero variance.
inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

/// 1-based ranks; ties share the average of the positions they occupy.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation of the average-rank vectors.
inline double spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson_r(rx, ry);
}

/// (1/M) * sum_i alpha_i * tau_i. With all alphas 1 this is the plain mean.
inline double jcm(std::span<const double> taus, std::span<const double> alphas) {
  if (taus.size() != alphas.size())
    throw LengthMismatch(std::to_string(taus.size()) + " correlations for " + std::to_string(alphas.size()) +
                         " dataset weights");
  if (taus.empty()) throw DegenerateInput("jcm needs at least one dataset");
  double s = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (alphas[i] < 0.0) throw ConfigError("dataset weights must be non-negative");
    s += alphas[i] * taus[i];
  }
  return s / static_cast<double>(taus.size());
}

inline double jcm(std::span<const double> taus) {
  const std::vector<double> ones(taus.size(), 1.0);
  return jcm(taus, ones);
}

struct CorrelationReport {
  std::string dataset_id;
  std::size_t n = 0;
  double kendall = 0.0;
  double spearman = 0.0;
  double pearson = 0.0;
};

inline CorrelationReport correlate(std::string dataset_id, std::span<const double> scores,
                                   std::span<const double> truth) {
  return {std::move(dataset_id), scores.size(), kendall_tau(scores, truth), spearman_rho(scores, truth),
          pearson_r(scores, truth)};
}

inline constexpr const char* kCorrelationCsvHeader = "dataset,n,kendall,spearman,pearson";

/// One CSV row; coefficients multiplied by `unit` (100 for percent) and
/// printed with six decimals.
inline std::string correlation_csv_row(const CorrelationReport& r, double unit = 1.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f", r.dataset_id.c_str(), r.n, r.kendall * unit,
                r.spearman * unit, r.pearson * unit);
  return buf;
}

}  // namespace proxforge

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "carq/errors.hpp"

namespace carq {

// Check function: u * (tau - 1{u <= 0}). Non-negative, zero iff u == 0.
inline double check_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("check_loss: tau must be in (0,1)");
  return u * (tau - (u <= 0.0 ? 1.0 : 0.0));
}

namespace detail {

// Quantile of values visited in ascending order through `order`, with
// per-unit weights. Returns the smallest value whose cumulative weight
// reaches tau * total. This is the smallest minimizer of the weighted
// check loss (the objective is piecewise linear and convex, so a data
// point always attains the minimum).
inline double quantile_by_order(std::span<const double> values,
                                std::span<const std::size_t> order,
                                std::span<const double> weights, double tau) {
  double total = 0.0;
  for (std::size_t idx : order) total += weights[idx];
  if (!(total > 0.0)) throw std::invalid_argument("weighted_quantile: total weight must be positive");
  const double threshold = tau * total;
  double cum = 0.0;
  for (std::size_t idx : order) {
    cum += weights[idx];
    if (cum >= threshold) return values[idx];
  }
  return values[order.back()];  // guards accumulated rounding
}

}  // namespace detail

// Smallest minimizer q of sum_i w_i * check_loss(v_i - q, tau);
// equivalently the smallest sample value whose cumulative weight
// fraction is >= tau.
inline double weighted_quantile(std::span<const double> values,
                                std::span<const double> weights, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("weighted_quantile: tau must be in (0,1)");
  if (values.empty() || values.size() != weights.size())
    throw std::invalid_argument("weighted_quantile: need equal nonzero lengths");
  for (double w : weights)
    if (w < 0.0) throw std::invalid_argument("weighted_quantile: negative weight");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  return detail::quantile_by_order(values, order, weights, tau);
}

// Unweighted empirical quantile under the same convention.
inline double empirical_quantile(std::span<const double> values, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("empirical_quantile: tau must be in (0,1)");
  if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
  // k-th order statistic with k = smallest integer such that k >= tau * n.
  const double threshold = tau * static_cast<double>(values.size());
  std::size_t k = static_cast<std::size_t>(threshold);
  if (static_cast<double>(k) < threshold) ++k;
  if (k < 1) k = 1;
  if (k > values.size()) k = values.size();
  std::vector<double> work(values.begin(), values.end());
  std::nth_element(work.begin(), work.begin() + (k - 1), work.end());
  return work[k - 1];
}

}  // namespace carq

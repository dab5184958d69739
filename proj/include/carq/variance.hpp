#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "carq/errors.hpp"
#include "carq/estimate.hpp"
#include "carq/normal.hpp"
#include "carq/quantile.hpp"
#include "carq/sample.hpp"

namespace carq {

// Kernel density plug-in for one arm, evaluated at that arm's quantile fit.
struct DensityPlugin {
  int arm = 0;
  double bandwidth = 0.0;
  double f_hat_at_q = 0.0;
};

// Decomposition of the asymptotic variance estimate for the simple QTE
// estimator into outcome, assignment and strata terms.
// se = sqrt(total / n).
struct VarianceComponents {
  double zeta_y_sq = 0.0;
  double zeta_a_sq = 0.0;
  double zeta_s_sq = 0.0;
  double total = 0.0;
  double se = 0.0;
  std::int64_t n = 0;
  DensityPlugin density1;
  DensityPlugin density0;
};

// Rule-of-thumb bandwidth 1.06 * sd * n^(-1/5), sample sd with the n-1
// denominator.
inline double silverman_bandwidth(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw data_error("silverman_bandwidth: need at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw data_error("silverman_bandwidth: zero dispersion");
  return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

// Gaussian kernel density estimate at x.
inline double kde_gaussian(std::span<const double> values, double x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("kde_gaussian: bandwidth must be positive");
  if (values.empty()) throw std::invalid_argument("kde_gaussian: empty input");
  double total = 0.0;
  for (double v : values) total += normal_pdf((x - v) / h);
  return total / (static_cast<double>(values.size()) * h);
}

// Per-stratum means of the quantile score tau - 1{y <= q_arm} within one
// arm, where q_arm is that arm's empirical tau-quantile. Keys are stratum
// labels; every stratum must contain the arm.
inline std::map<int, double> stratum_score_means(const Sample& sample, double tau, int arm) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("stratum_score_means: tau must be in (0,1)");
  if (arm != 0 && arm != 1) throw std::invalid_argument("stratum_score_means: arm must be 0 or 1");
  sample.validate();
  std::vector<double> arm_values;
  for (std::size_t i = 0; i < sample.size(); ++i)
    if (sample.a[i] == arm) arm_values.push_back(sample.y[i]);
  if (arm_values.empty()) throw data_error("stratum_score_means: arm is empty");
  const double q = empirical_quantile(arm_values, tau);

  std::map<int, double> sums;
  std::map<int, std::int64_t> counts;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    counts.try_emplace(sample.s[i], 0);
    sums.try_emplace(sample.s[i], 0.0);
    if (sample.a[i] == arm) {
      sums[sample.s[i]] += tau - (sample.y[i] <= q ? 1.0 : 0.0);
      ++counts[sample.s[i]];
    }
  }
  std::map<int, double> out;
  for (auto& [label, count] : counts) {
    if (count == 0)
      throw data_error("stratum_score_means: stratum " + std::to_string(label) +
                       " has no units in arm " + std::to_string(arm));
    out[label] = sums[label] / static_cast<double>(count);
  }
  return out;
}

namespace detail {

// Shared engine for the analytic variance. assignment_var(s) is the weight
// on the assignment term: pi(1-pi) for the scheme-agnostic version, the
// scheme's imbalance variance for the adjusted one.
inline VarianceComponents analytic_variance(const Sample& sample, double tau, double pi,
                                            const std::map<int, double>& assignment_var,
                                            double bandwidth_scale) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("analytic variance: tau must be in (0,1)");
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("analytic variance: pi must be in (0,1)");
  if (!(bandwidth_scale > 0.0)) throw std::invalid_argument("analytic variance: bandwidth scale must be positive");
  sample.validate();

  std::vector<double> treated, control;
  detail::split_arms(sample, treated, control);
  detail::require_both_arms(treated, control, "analytic variance");

  const double q1 = empirical_quantile(treated, tau);
  const double q0 = empirical_quantile(control, tau);
  const double h1 = bandwidth_scale * silverman_bandwidth(treated);
  const double h0 = bandwidth_scale * silverman_bandwidth(control);
  const double f1 = kde_gaussian(treated, q1, h1);
  const double f0 = kde_gaussian(control, q0, h0);
  if (!(f1 > 0.0)) throw numeric_error("analytic variance: density estimate at treated quantile is zero");
  if (!(f0 > 0.0)) throw numeric_error("analytic variance: density estimate at control quantile is zero");

  const auto m1 = stratum_score_means(sample, tau, 1);
  const auto m0 = stratum_score_means(sample, tau, 0);
  StrataStats stats = strata_stats(sample, pi);

  double mean_m1_sq = 0.0, mean_m0_sq = 0.0, assign_term = 0.0, strata_term = 0.0;
  for (const auto& st : stats.strata) {
    auto it = assignment_var.find(st.label);
    if (it == assignment_var.end())
      throw config_error("analytic variance: no assignment variance for stratum " +
                         std::to_string(st.label));
    const double w = it->second;
    if (!(w >= 0.0 && w <= pi * (1.0 - pi) + 1e-12))
      throw config_error("analytic variance: assignment variance outside [0, pi(1-pi)] in stratum " +
                         std::to_string(st.label));
    const double s1 = m1.at(st.label), s0 = m0.at(st.label);
    mean_m1_sq += st.p_hat * s1 * s1;
    mean_m0_sq += st.p_hat * s0 * s0;
    const double pair_sum = s1 / (pi * f1) + s0 / ((1.0 - pi) * f0);
    assign_term += st.p_hat * w * pair_sum * pair_sum;
    const double pair_diff = s1 / f1 - s0 / f0;
    strata_term += st.p_hat * pair_diff * pair_diff;
  }

  VarianceComponents out;
  out.n = static_cast<std::int64_t>(sample.size());
  out.zeta_y_sq = (tau * (1.0 - tau) - mean_m1_sq) / (pi * f1 * f1) +
                  (tau * (1.0 - tau) - mean_m0_sq) / ((1.0 - pi) * f0 * f0);
  out.zeta_a_sq = assign_term;
  out.zeta_s_sq = strata_term;
  out.total = out.zeta_y_sq + out.zeta_a_sq + out.zeta_s_sq;
  out.se = std::sqrt(out.total / static_cast<double>(out.n));
  out.density1 = DensityPlugin{1, h1, f1};
  out.density0 = DensityPlugin{0, h0, f0};
  return out;
}

inline std::map<int, double> constant_per_stratum(const Sample& sample, double value) {
  std::map<int, double> out;
  for (int label : sample.s) out.emplace(label, value);
  return out;
}

}  // namespace detail

// Scheme-agnostic analytic standard error for the simple QTE estimator:
// assignment term weighted by pi(1-pi).
inline VarianceComponents se_naive(const Sample& sample, double tau, double pi,
                                   double bandwidth_scale = 1.0) {
  return detail::analytic_variance(
      sample, tau, pi, detail::constant_per_stratum(sample, pi * (1.0 - pi)), bandwidth_scale);
}

// Same display with the assignment term weighted by the randomization
// scheme's per-stratum imbalance variance instead of pi(1-pi).
inline VarianceComponents se_adjusted(const Sample& sample, double tau, double pi,
                                      const std::map<int, double>& assignment_var,
                                      double bandwidth_scale = 1.0) {
  return detail::analytic_variance(sample, tau, pi, assignment_var, bandwidth_scale);
}

inline VarianceComponents se_adjusted(const Sample& sample, double tau, double pi,
                                      double assignment_var, double bandwidth_scale = 1.0) {
  return detail::analytic_variance(
      sample, tau, pi, detail::constant_per_stratum(sample, assignment_var), bandwidth_scale);
}

}  // namespace carq

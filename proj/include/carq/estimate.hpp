#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carq/errors.hpp"
#include "carq/quantile.hpp"
#include "carq/sample.hpp"

namespace carq {

enum class QteMethod { Sqr, Ipw, Sfe };
enum class AteMethod { SimpleDiff, Sfe, Ipw };

inline const char* qte_method_name(QteMethod m) {
  switch (m) {
    case QteMethod::Sqr: return "sqr";
    case QteMethod::Ipw: return "ipw";
    case QteMethod::Sfe: return "sfe";
  }
  return "?";
}

inline std::optional<QteMethod> qte_method_from_name(const std::string& name) {
  if (name == "sqr") return QteMethod::Sqr;
  if (name == "ipw") return QteMethod::Ipw;
  if (name == "sfe") return QteMethod::Sfe;
  return std::nullopt;
}

// Point estimate of the tau-th quantile treatment effect. For Sqr and Ipw,
// q1/q0 are the per-arm quantile fits and value == q1 - q0. For Sfe they
// are the fitted levels at regressor values 1 and 0 (q0 is the intercept).
struct QteEstimate {
  double tau = 0.5;
  double value = 0.0;
  double q1 = 0.0;
  double q0 = 0.0;
  QteMethod method = QteMethod::Sqr;
};

struct QrLineFit {
  double intercept = 0.0;
  double slope = 0.0;
};

namespace detail {

inline double weighted_objective(std::span<const double> y, std::span<const double> x,
                                 std::span<const double> w, double intercept,
                                 double slope, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double u = y[i] - intercept - slope * x[i];
    total += w[i] * (u * (tau - (u <= 0.0 ? 1.0 : 0.0)));
  }
  return total;
}

// Profile value of the line fit at a fixed slope: the intercept is the
// weighted tau-quantile of the partial residuals, which solves the inner
// minimization exactly.
inline std::pair<double, double> profile_at_slope(std::span<const double> y,
                                                  std::span<const double> x,
                                                  std::span<const double> w, double slope,
                                                  double tau, std::vector<double>& resid) {
  resid.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - slope * x[i];
  double intercept = weighted_quantile(resid, w, tau);
  return {weighted_objective(y, x, w, intercept, slope, tau), intercept};
}

}  // namespace detail

// Exact minimizer of sum_i w_i * check_loss(y_i - b0 - b1 * x_i, tau) over
// (b0, b1). The objective is piecewise linear and convex, and some optimal
// slope lies in the candidate set {(y_i - y_j)/(x_i - x_j) : x_i != x_j}
// plus 0; the profiled objective restricted to the sorted candidates is a
// convex sequence, so a bracketing search plus a final window scan finds
// the global minimum. Ties resolve to the smallest slope.
inline QrLineFit qr_line_fit(std::span<const double> y, std::span<const double> x,
                             std::span<const double> w, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("qr_line_fit: tau must be in (0,1)");
  const std::size_t n = y.size();
  if (n == 0 || x.size() != n || w.size() != n)
    throw std::invalid_argument("qr_line_fit: need equal nonzero lengths");
  bool x_varies = false;
  for (std::size_t i = 1; i < n && !x_varies; ++i) x_varies = x[i] != x[0];
  if (!x_varies) throw data_error("qr_line_fit: regressor is constant");

  std::vector<double> candidates;
  candidates.reserve(n * (n - 1) / 2 + 1);
  candidates.push_back(0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (x[i] != x[j]) candidates.push_back((y[i] - y[j]) / (x[i] - x[j]));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<double> resid;
  std::map<std::size_t, std::pair<double, double>> cache;
  auto eval = [&](std::size_t k) -> const std::pair<double, double>& {
    auto it = cache.find(k);
    if (it == cache.end())
      it = cache.emplace(k, detail::profile_at_slope(y, x, w, candidates[k], tau, resid)).first;
    return it->second;
  };

  std::size_t lo = 0, hi = candidates.size() - 1;
  while (hi - lo > 64) {
    std::size_t m1 = lo + (hi - lo) / 3;
    std::size_t m2 = hi - (hi - lo) / 3;
    double g1 = eval(m1).first, g2 = eval(m2).first;
    if (g1 < g2) hi = m2;
    else if (g1 > g2) lo = m1;
    else { lo = m1; hi = m2; }
  }
  std::size_t best = lo;
  double best_val = eval(lo).first;
  for (std::size_t k = lo + 1; k <= hi; ++k) {
    double v = eval(k).first;
    if (v < best_val) { best_val = v; best = k; }
  }
  while (best > 0) {
    double v = eval(best - 1).first;
    if (v > best_val) break;
    best_val = std::min(best_val, v);
    --best;
  }
  return QrLineFit{eval(best).second, candidates[best]};
}

namespace detail {

inline void split_arms(const Sample& sample, std::vector<double>& treated,
                       std::vector<double>& control) {
  treated.clear();
  control.clear();
  for (std::size_t i = 0; i < sample.size(); ++i)
    (sample.a[i] ? treated : control).push_back(sample.y[i]);
}

inline void require_both_arms(const std::vector<double>& treated,
                              const std::vector<double>& control, const char* who) {
  if (treated.empty()) throw data_error(std::string(who) + ": treated arm is empty");
  if (control.empty()) throw data_error(std::string(who) + ": control arm is empty");
}

// IPW arm quantiles given precomputed strata stats. Single-arm strata
// contribute only to the arm they populate, so the weights are always
// finite for units that exist; the caller decides whether such strata
// are an error.
inline std::pair<double, double> ipw_arm_quantiles(std::span<const double> y,
                                                   std::span<const std::uint8_t> a,
                                                   std::span<const int> s,
                                                   const StrataStats& stats, double tau) {
  std::vector<double> y1, w1, y0, w0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto& st = stats.at_label(s[i]);
    if (a[i]) {
      y1.push_back(y[i]);
      w1.push_back(1.0 / st.pi_hat);
    } else {
      y0.push_back(y[i]);
      w0.push_back(1.0 / (1.0 - st.pi_hat));
    }
  }
  if (y1.empty()) throw data_error("ipw: treated arm is empty");
  if (y0.empty()) throw data_error("ipw: control arm is empty");
  return {weighted_quantile(y1, w1, tau), weighted_quantile(y0, w0, tau)};
}

}  // namespace detail

// Difference of the per-arm tau-th empirical quantiles; identical to the
// slope of the two-parameter check-loss regression on a treatment dummy.
inline QteEstimate qte_sqr(const Sample& sample, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("qte_sqr: tau must be in (0,1)");
  sample.validate();
  std::vector<double> treated, control;
  detail::split_arms(sample, treated, control);
  detail::require_both_arms(treated, control, "qte_sqr");
  QteEstimate est;
  est.tau = tau;
  est.method = QteMethod::Sqr;
  est.q1 = empirical_quantile(treated, tau);
  est.q0 = empirical_quantile(control, tau);
  est.value = est.q1 - est.q0;
  return est;
}

// Per-arm weighted quantiles with inverse propensity weights 1/pi_hat(s)
// (treated) and 1/(1 - pi_hat(s)) (controls).
inline QteEstimate qte_ipw(const Sample& sample, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("qte_ipw: tau must be in (0,1)");
  sample.validate();
  StrataStats stats = strata_stats(sample, 0.5);
  if (stats.has_degenerate_propensity())
    throw data_error("qte_ipw: stratum " + std::to_string(stats.first_degenerate_label()) +
                     " has an empty arm (degenerate propensity)");
  auto [q1, q0] = detail::ipw_arm_quantiles(sample.y, sample.a, sample.s, stats, tau);
  QteEstimate est;
  est.tau = tau;
  est.method = QteMethod::Ipw;
  est.q1 = q1;
  est.q0 = q0;
  est.value = q1 - q0;
  return est;
}

// Check-loss regression of y on the within-stratum demeaned treatment
// a - pi_hat(s), solved exactly by qr_line_fit.
inline QteEstimate qte_sfe(const Sample& sample, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("qte_sfe: tau must be in (0,1)");
  sample.validate();
  StrataStats stats = strata_stats(sample, 0.5);
  if (stats.has_degenerate_propensity())
    throw data_error("qte_sfe: stratum " + std::to_string(stats.first_degenerate_label()) +
                     " has an empty arm (degenerate propensity)");
  std::vector<double> x(sample.size()), w(sample.size(), 1.0);
  for (std::size_t i = 0; i < sample.size(); ++i)
    x[i] = static_cast<double>(sample.a[i]) - stats.at_label(sample.s[i]).pi_hat;
  QrLineFit fit = qr_line_fit(sample.y, x, w, tau);
  QteEstimate est;
  est.tau = tau;
  est.method = QteMethod::Sfe;
  est.q0 = fit.intercept;
  est.q1 = fit.intercept + fit.slope;
  est.value = fit.slope;
  return est;
}

inline QteEstimate qte(const Sample& sample, double tau, QteMethod method) {
  switch (method) {
    case QteMethod::Sqr: return qte_sqr(sample, tau);
    case QteMethod::Ipw: return qte_ipw(sample, tau);
    case QteMethod::Sfe: return qte_sfe(sample, tau);
  }
  throw std::invalid_argument("qte: unknown method");
}

// Average treatment effect estimators sharing the same strata bookkeeping:
//   SimpleDiff: difference of arm means.
//   Ipw: stratum-share weighted difference of within-stratum arm means
//        (the fully saturated regression estimator).
//   Sfe: coefficient on the treatment dummy controlling for stratum
//        indicators, computed by within-stratum demeaning.
inline double ate(const Sample& sample, AteMethod method) {
  sample.validate();
  if (method == AteMethod::SimpleDiff) {
    double sum1 = 0.0, sum0 = 0.0;
    std::int64_t n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (sample.a[i]) { sum1 += sample.y[i]; ++n1; }
      else { sum0 += sample.y[i]; ++n0; }
    }
    if (n1 == 0) throw data_error("ate: treated arm is empty");
    if (n0 == 0) throw data_error("ate: control arm is empty");
    return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
  }

  StrataStats stats = strata_stats(sample, 0.5);
  if (stats.has_degenerate_propensity())
    throw data_error("ate: stratum " + std::to_string(stats.first_degenerate_label()) +
                     " has an empty arm");
  const std::size_t k = stats.strata.size();
  std::vector<double> sum1(k, 0.0), sum0(k, 0.0);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto slot = static_cast<std::size_t>(stats.slot_of_label[static_cast<std::size_t>(sample.s[i])]);
    (sample.a[i] ? sum1 : sum0)[slot] += sample.y[i];
  }

  if (method == AteMethod::Ipw) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto& st = stats.strata[j];
      double mean1 = sum1[j] / static_cast<double>(st.n1);
      double mean0 = sum0[j] / static_cast<double>(st.n - st.n1);
      total += st.p_hat * (mean1 - mean0);
    }
    return total;
  }

  // Sfe: slope = sum (a - pi_hat(s)) * (y - ybar(s)) / sum (a - pi_hat(s))^2.
  std::vector<double> ybar(k, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    ybar[j] = (sum1[j] + sum0[j]) / static_cast<double>(stats.strata[j].n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto slot = static_cast<std::size_t>(stats.slot_of_label[static_cast<std::size_t>(sample.s[i])]);
    double atil = static_cast<double>(sample.a[i]) - stats.strata[slot].pi_hat;
    num += atil * (sample.y[i] - ybar[slot]);
    den += atil * atil;
  }
  if (!(den > 0.0)) throw data_error("ate: demeaned treatment is degenerate");
  return num / den;
}

// Difference of two QTE estimates at tau1 and tau2 with the same method.
inline double qte_contrast(const Sample& sample, double tau1, double tau2, QteMethod method) {
  return qte(sample, tau1, method).value - qte(sample, tau2, method).value;
}

// sup over strata of |n1(s) - pi*n(s)| / n(s): the subsample feasibility
// statistic for inverse-propensity weighting.
inline double imbalance_diagnostic(const Sample& sample, double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("imbalance_diagnostic: pi must be in (0,1)");
  return strata_stats(sample, pi).sup_abs_relative_imbalance();
}

}  // namespace carq

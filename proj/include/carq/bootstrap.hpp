#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "carq/assign.hpp"
#include "carq/errors.hpp"
#include "carq/estimate.hpp"
#include "carq/normal.hpp"
#include "carq/parallel.hpp"
#include "carq/quantile.hpp"
#include "carq/rng.hpp"
#include "carq/sample.hpp"

namespace carq {

enum class BootstrapMethod { Weighted, CovariateAdaptive };

// A batch of bootstrap estimates of one quantity (single tau or a
// contrast of two).
struct BootstrapDraws {
  int b = 0;
  std::vector<double> values;
  BootstrapMethod method = BootstrapMethod::Weighted;
  QteMethod estimator = QteMethod::Sqr;
  double tau = 0.5;
  std::optional<std::pair<double, double>> contrast;
  int degenerate_retries = 0;
};

struct WaldResult {
  double estimate = 0.0;
  double se = 0.0;
  double null_value = 0.0;
  double t = 0.0;
  double level = 0.05;
  bool reject = false;
};

inline WaldResult wald(double estimate, double se, double null_value, double level = 0.05) {
  if (!(se > 0.0)) throw std::invalid_argument("wald: se must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("wald: level must be in (0,1)");
  WaldResult out;
  out.estimate = estimate;
  out.se = se;
  out.null_value = null_value;
  out.level = level;
  out.t = (estimate - null_value) / se;
  out.reject = std::abs(out.t) > normal_quantile(1.0 - level / 2.0);
  return out;
}

// Interquantile-range standard error: the (alpha_lo, alpha_hi) empirical
// quantile gap of the draws divided by the matching normal quantile gap.
inline double se_from_draws(std::span<const double> draws, double alpha_lo = 0.025,
                            double alpha_hi = 0.975) {
  if (draws.size() < 2) throw std::invalid_argument("se_from_draws: need at least 2 draws");
  if (!(alpha_lo > 0.0 && alpha_lo < alpha_hi && alpha_hi < 1.0))
    throw std::invalid_argument("se_from_draws: need 0 < alpha_lo < alpha_hi < 1");
  const double q_hi = empirical_quantile(draws, alpha_hi);
  const double q_lo = empirical_quantile(draws, alpha_lo);
  return (q_hi - q_lo) / (normal_quantile(alpha_hi) - normal_quantile(alpha_lo));
}

inline double se_from_draws(const BootstrapDraws& draws, double alpha_lo = 0.025,
                            double alpha_hi = 0.975) {
  return se_from_draws(std::span<const double>(draws.values), alpha_lo, alpha_hi);
}

namespace detail {

constexpr std::uint64_t kDrawTag = 0xd4a3;
constexpr std::uint64_t kRetryTag = 0x4e74;

// Precomputed layout of the original sample shared by all weighted draws.
struct WeightedEngine {
  const Sample* sample = nullptr;
  StrataStats stats;
  std::vector<std::size_t> order_treated;  // unit indices sorted by y
  std::vector<std::size_t> order_control;

  explicit WeightedEngine(const Sample& s) : sample(&s), stats(strata_stats(s, 0.5)) {
    for (std::size_t i = 0; i < s.size(); ++i)
      (s.a[i] ? order_treated : order_control).push_back(i);
    auto by_y = [&](std::size_t i, std::size_t j) { return s.y[i] < s.y[j]; };
    std::sort(order_treated.begin(), order_treated.end(), by_y);
    std::sort(order_control.begin(), order_control.end(), by_y);
    if (order_treated.empty()) throw data_error("weighted bootstrap: treated arm is empty");
    if (order_control.empty()) throw data_error("weighted bootstrap: control arm is empty");
  }
};

// Per-stratum weight shares pi_w(s) = sum(xi, treated in s) / sum(xi in s).
// Strata whose weights vanish entirely fall back to the sample propensity;
// their units carry zero weight so the value never enters any objective.
inline void weighted_propensity(const WeightedEngine& eng, std::span<const double> xi,
                                std::vector<double>& pi_w) {
  const auto& s = *eng.sample;
  const std::size_t k = eng.stats.strata.size();
  std::vector<double> sum_all(k, 0.0), sum_treated(k, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto slot = static_cast<std::size_t>(eng.stats.slot_of_label[static_cast<std::size_t>(s.s[i])]);
    sum_all[slot] += xi[i];
    if (s.a[i]) sum_treated[slot] += xi[i];
  }
  pi_w.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    pi_w[j] = sum_all[j] > 0.0 ? sum_treated[j] / sum_all[j] : eng.stats.strata[j].pi_hat;
}

// One weighted-bootstrap estimate given the weight vector.
inline double weighted_estimate(const WeightedEngine& eng, std::span<const double> xi,
                                QteMethod method, double tau, std::vector<double>& scratch) {
  const auto& s = *eng.sample;
  switch (method) {
    case QteMethod::Sqr: {
      double q1 = quantile_by_order(s.y, eng.order_treated, xi, tau);
      double q0 = quantile_by_order(s.y, eng.order_control, xi, tau);
      return q1 - q0;
    }
    case QteMethod::Ipw: {
      std::vector<double> pi_w;
      weighted_propensity(eng, xi, pi_w);
      scratch.resize(s.size());
      for (std::size_t idx : eng.order_treated) {
        auto slot = static_cast<std::size_t>(eng.stats.slot_of_label[static_cast<std::size_t>(s.s[idx])]);
        double p = pi_w[slot];
        scratch[idx] = p > 0.0 ? xi[idx] / p : 0.0;
      }
      double q1 = quantile_by_order(s.y, eng.order_treated, scratch, tau);
      for (std::size_t idx : eng.order_control) {
        auto slot = static_cast<std::size_t>(eng.stats.slot_of_label[static_cast<std::size_t>(s.s[idx])]);
        double p = pi_w[slot];
        scratch[idx] = p < 1.0 ? xi[idx] / (1.0 - p) : 0.0;
      }
      double q0 = quantile_by_order(s.y, eng.order_control, scratch, tau);
      return q1 - q0;
    }
    case QteMethod::Sfe: {
      std::vector<double> pi_w;
      weighted_propensity(eng, xi, pi_w);
      std::vector<double> x(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        auto slot = static_cast<std::size_t>(eng.stats.slot_of_label[static_cast<std::size_t>(s.s[i])]);
        x[i] = static_cast<double>(s.a[i]) - pi_w[slot];
      }
      return qr_line_fit(s.y, x, xi, tau).slope;
    }
  }
  throw std::invalid_argument("weighted_estimate: unknown method");
}

// Precomputed layout for covariate-adaptive draws: per-cell outcome pools
// and the empirical stratum distribution.
struct CaEngine {
  const Sample* sample = nullptr;
  SchemeSpec scheme;
  StrataStats stats;
  // cells[arm][slot] = outcomes of units with that arm and stratum.
  std::vector<std::vector<double>> cells[2];

  CaEngine(const Sample& s, const SchemeSpec& sch)
      : sample(&s), scheme(sch), stats(strata_stats(s, sch.pi)) {
    validate(scheme);
    cells[0].resize(stats.strata.size());
    cells[1].resize(stats.strata.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto slot = static_cast<std::size_t>(stats.slot_of_label[static_cast<std::size_t>(s.s[i])]);
      cells[s.a[i]][slot].push_back(s.y[i]);
    }
  }
};

// One covariate-adaptive bootstrap sample: resampled strata, fresh
// assignments from the scheme, outcomes resampled within each
// (stratum, arm) cell. Never inspects the original treatment vector.
inline Sample ca_resample(const CaEngine& eng, Rng& rng) {
  const auto& s = *eng.sample;
  const std::size_t n = s.size();
  Sample out;
  out.s.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.s[i] = s.s[static_cast<std::size_t>(rng.below(n))];
  out.a = assign(eng.scheme, out.s, rng);
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto slot = static_cast<std::size_t>(eng.stats.slot_of_label[static_cast<std::size_t>(out.s[i])]);
    const auto& pool = eng.cells[out.a[i]][slot];
    if (pool.empty())
      throw numeric_error("ca bootstrap: original cell (stratum " + std::to_string(out.s[i]) +
                          ", arm " + std::to_string(int(out.a[i])) + ") is empty");
    out.y[i] = pool[static_cast<std::size_t>(rng.below(pool.size()))];
  }
  return out;
}

// Estimate on a covariate-adaptive bootstrap sample. Ipw is evaluated
// permissively: bootstrap strata that drew a single arm contribute only
// to that arm (their opposite-arm weight never materializes).
inline double ca_estimate(const Sample& boot, QteMethod method, double tau) {
  switch (method) {
    case QteMethod::Sqr: {
      std::vector<double> treated, control;
      split_arms(boot, treated, control);
      require_both_arms(treated, control, "ca bootstrap sqr");
      return empirical_quantile(treated, tau) - empirical_quantile(control, tau);
    }
    case QteMethod::Ipw: {
      StrataStats stats = strata_stats(boot, 0.5);
      auto [q1, q0] = ipw_arm_quantiles(boot.y, boot.a, boot.s, stats, tau);
      return q1 - q0;
    }
    case QteMethod::Sfe: {
      StrataStats stats = strata_stats(boot, 0.5);
      std::vector<double> x(boot.size()), w(boot.size(), 1.0);
      for (std::size_t i = 0; i < boot.size(); ++i)
        x[i] = static_cast<double>(boot.a[i]) - stats.at_label(boot.s[i]).pi_hat;
      return qr_line_fit(boot.y, x, w, tau).slope;
    }
  }
  throw std::invalid_argument("ca_estimate: unknown method");
}

// Draw-major tensor of bootstrap estimates:
// value(b, m, t) = values[(b * n_methods + m) * n_taus + t].
struct DrawTensor {
  std::vector<double> values;
  int b = 0;
  int n_methods = 0;
  int n_taus = 0;
  int degenerate_retries = 0;

  double at(int draw, int method, int tau_index) const {
    return values[(static_cast<std::size_t>(draw) * static_cast<std::size_t>(n_methods) +
                   static_cast<std::size_t>(method)) * static_cast<std::size_t>(n_taus) +
                  static_cast<std::size_t>(tau_index)];
  }
  std::vector<double> column(int method, int tau_index) const {
    std::vector<double> out(static_cast<std::size_t>(b));
    for (int d = 0; d < b; ++d) out[static_cast<std::size_t>(d)] = at(d, method, tau_index);
    return out;
  }
  std::vector<double> contrast_column(int method, int tau_index1, int tau_index2) const {
    std::vector<double> out(static_cast<std::size_t>(b));
    for (int d = 0; d < b; ++d)
      out[static_cast<std::size_t>(d)] = at(d, method, tau_index1) - at(d, method, tau_index2);
    return out;
  }
};

inline void check_draw_args(std::span<const QteMethod> methods, std::span<const double> taus, int b) {
  if (b < 2) throw std::invalid_argument("bootstrap: b must be >= 2");
  if (methods.empty() || taus.empty()) throw std::invalid_argument("bootstrap: empty request");
  for (double tau : taus)
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("bootstrap: tau must be in (0,1)");
}

// Evaluates every requested (method, tau) on each weighted-bootstrap draw.
// Draw d uses weights from derive_seed(seed, {kDrawTag, d+1}); a draw whose
// evaluation degenerates is redrawn once from the retry tag, then fails.
// Draws are independent, so the loop runs in parallel with results laid out
// by draw index.
inline DrawTensor weighted_draw_tensor(const Sample& sample, std::span<const QteMethod> methods,
                                       std::span<const double> taus, int b, std::uint64_t seed) {
  check_draw_args(methods, taus, b);
  WeightedEngine eng(sample);
  const bool needs_propensity =
      std::find_if(methods.begin(), methods.end(),
                   [](QteMethod m) { return m != QteMethod::Sqr; }) != methods.end();
  if (needs_propensity && eng.stats.has_degenerate_propensity())
    throw data_error("weighted bootstrap: stratum " +
                     std::to_string(eng.stats.first_degenerate_label()) +
                     " has an empty arm (degenerate propensity)");
  const std::size_t n = sample.size();
  DrawTensor out;
  out.b = b;
  out.n_methods = static_cast<int>(methods.size());
  out.n_taus = static_cast<int>(taus.size());
  out.values.resize(static_cast<std::size_t>(b) * methods.size() * taus.size());
  std::atomic<int> retries{0};

  parallel_for(static_cast<std::size_t>(b), [&](std::size_t d) {
    std::vector<double> xi(n), scratch;
    Rng rng(derive_seed(seed, {kDrawTag, d + 1}));
    for (std::size_t i = 0; i < n; ++i) xi[i] = rng.exponential();
    std::vector<double> xi_retry;  // generated on first failure only
    auto slot_base = (d * methods.size()) * taus.size();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t t = 0; t < taus.size(); ++t) {
        double value;
        try {
          value = weighted_estimate(eng, xi, methods[m], taus[t], scratch);
        } catch (const std::exception&) {
          if (xi_retry.empty()) {
            Rng retry_rng(derive_seed(seed, {kDrawTag, d + 1, kRetryTag}));
            xi_retry.resize(n);
            for (std::size_t i = 0; i < n; ++i) xi_retry[i] = retry_rng.exponential();
            retries.fetch_add(1);
          }
          try {
            value = weighted_estimate(eng, xi_retry, methods[m], taus[t], scratch);
          } catch (const std::exception& inner) {
            throw numeric_error("weighted bootstrap: draw " + std::to_string(d) +
                                " degenerate after retry: " + inner.what());
          }
        }
        out.values[slot_base + m * taus.size() + t] = value;
      }
    }
  });
  out.degenerate_retries = retries.load();
  return out;
}

// Covariate-adaptive counterpart: draw d regenerates strata, assignments
// and outcomes from derive_seed(seed, {kDrawTag, d+1}); one retry from the
// retry tag on a degenerate sample, then the draw fails.
inline DrawTensor ca_draw_tensor(const Sample& sample, const SchemeSpec& scheme,
                                 std::span<const QteMethod> methods,
                                 std::span<const double> taus, int b, std::uint64_t seed) {
  check_draw_args(methods, taus, b);
  CaEngine eng(sample, scheme);
  DrawTensor out;
  out.b = b;
  out.n_methods = static_cast<int>(methods.size());
  out.n_taus = static_cast<int>(taus.size());
  out.values.resize(static_cast<std::size_t>(b) * methods.size() * taus.size());
  std::atomic<int> retries{0};

  parallel_for(static_cast<std::size_t>(b), [&](std::size_t d) {
    Sample primary, fallback;
    bool have_primary = false, have_fallback = false, retried = false;
    std::string primary_failure;
    auto ensure_fallback = [&]() -> const Sample& {
      if (!have_fallback) {
        Rng rng(derive_seed(seed, {kDrawTag, d + 1, kRetryTag}));
        try {
          fallback = ca_resample(eng, rng);
        } catch (const std::exception& e) {
          throw numeric_error("ca bootstrap: draw " + std::to_string(d) +
                              " degenerate after retry: " + e.what());
        }
        have_fallback = true;
        if (!retried) { retries.fetch_add(1); retried = true; }
      }
      return fallback;
    };
    {
      Rng rng(derive_seed(seed, {kDrawTag, d + 1}));
      try {
        primary = ca_resample(eng, rng);
        have_primary = true;
      } catch (const std::exception& e) {
        primary_failure = e.what();
      }
    }
    auto slot_base = (d * methods.size()) * taus.size();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t t = 0; t < taus.size(); ++t) {
        double value;
        if (have_primary) {
          try {
            value = ca_estimate(primary, methods[m], taus[t]);
          } catch (const std::exception&) {
            value = ca_estimate(ensure_fallback(), methods[m], taus[t]);
          }
        } else {
          try {
            value = ca_estimate(ensure_fallback(), methods[m], taus[t]);
          } catch (const numeric_error&) {
            throw;
          } catch (const std::exception& e) {
            throw numeric_error("ca bootstrap: draw " + std::to_string(d) +
                                " degenerate after retry (" + primary_failure + "): " + e.what());
          }
        }
        out.values[slot_base + m * taus.size() + t] = value;
      }
    }
  });
  out.degenerate_retries = retries.load();
  return out;
}

inline BootstrapDraws tensor_to_draws(DrawTensor&& tensor, BootstrapMethod bm, QteMethod est,
                                      double tau) {
  BootstrapDraws out;
  out.b = tensor.b;
  out.method = bm;
  out.estimator = est;
  out.tau = tau;
  out.degenerate_retries = tensor.degenerate_retries;
  out.values = tensor.column(0, 0);
  return out;
}

}  // namespace detail

// B weighted-bootstrap estimates: each draw multiplies every unit's
// objective contribution by an i.i.d. standard-exponential weight and
// re-solves the chosen estimator (propensities recomputed under the
// weights for Ipw and Sfe).
inline BootstrapDraws weighted_draws(const Sample& sample, double tau, QteMethod estimator,
                                     int b, std::uint64_t seed) {
  const QteMethod methods[] = {estimator};
  const double taus[] = {tau};
  return detail::tensor_to_draws(detail::weighted_draw_tensor(sample, methods, taus, b, seed),
                                 BootstrapMethod::Weighted, estimator, tau);
}

// B covariate-adaptive bootstrap estimates: each draw resamples stratum
// labels, reruns the assignment rule on them, resamples outcomes within
// each (stratum, arm) cell, and re-solves the chosen estimator.
inline BootstrapDraws ca_draws(const Sample& sample, double tau, QteMethod estimator,
                               const SchemeSpec& scheme, int b, std::uint64_t seed) {
  const QteMethod methods[] = {estimator};
  const double taus[] = {tau};
  return detail::tensor_to_draws(detail::ca_draw_tensor(sample, scheme, methods, taus, b, seed),
                                 BootstrapMethod::CovariateAdaptive, estimator, tau);
}

// Contrast draws: the same resamples evaluated at both quantile indexes,
// differenced per draw.
inline BootstrapDraws weighted_contrast_draws(const Sample& sample, double tau1, double tau2,
                                              QteMethod estimator, int b, std::uint64_t seed) {
  const QteMethod methods[] = {estimator};
  const double taus[] = {tau1, tau2};
  auto tensor = detail::weighted_draw_tensor(sample, methods, taus, b, seed);
  BootstrapDraws out;
  out.b = tensor.b;
  out.method = BootstrapMethod::Weighted;
  out.estimator = estimator;
  out.tau = tau1;
  out.contrast = std::make_pair(tau1, tau2);
  out.degenerate_retries = tensor.degenerate_retries;
  out.values = tensor.contrast_column(0, 0, 1);
  return out;
}

inline BootstrapDraws ca_contrast_draws(const Sample& sample, double tau1, double tau2,
                                        QteMethod estimator, const SchemeSpec& scheme, int b,
                                        std::uint64_t seed) {
  const QteMethod methods[] = {estimator};
  const double taus[] = {tau1, tau2};
  auto tensor = detail::ca_draw_tensor(sample, scheme, methods, taus, b, seed);
  BootstrapDraws out;
  out.b = tensor.b;
  out.method = BootstrapMethod::CovariateAdaptive;
  out.estimator = estimator;
  out.tau = tau1;
  out.contrast = std::make_pair(tau1, tau2);
  out.degenerate_retries = tensor.degenerate_retries;
  out.values = tensor.contrast_column(0, 0, 1);
  return out;
}

}  // namespace carq

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "carq/assign.hpp"
#include "carq/errors.hpp"
#include "carq/normal.hpp"
#include "carq/parallel.hpp"
#include "carq/quantile.hpp"
#include "carq/rng.hpp"
#include "carq/sample.hpp"

namespace carq {

// Parametric simulation designs 1-4. mu shifts the treated potential
// outcome; gamma scales the covariate effect; sigma scales the treated
// noise.
struct DgpSpec {
  int id = 1;
  double mu = 0.0;
  double gamma = 4.0;
  double sigma = 2.0;
};

inline void validate(const DgpSpec& spec) {
  if (spec.id < 1 || spec.id > 4) throw config_error("dgp: id must be in 1..4");
  if (!(spec.sigma > 0.0)) throw config_error("dgp: sigma must be positive");
}

// Potential outcomes, covariate and stratum labels for n units.
struct PotentialDraws {
  std::vector<double> z;
  std::vector<double> y1;
  std::vector<double> y0;
  std::vector<int> strata;
};

// Stratum cutoffs used by each design.
inline StrataRule dgp_strata_rule(int id) {
  const double sqrt20 = std::sqrt(20.0);
  switch (id) {
    case 1:
    case 2: return StrataRule{{-0.25 * sqrt20, 0.0, 0.25 * sqrt20, 0.5 * sqrt20}};
    case 3: return StrataRule{{-1.0, 0.0, 1.0, 2.0}};
    case 4:
      return StrataRule{{2.0 * normal_quantile(0.25), 2.0 * normal_quantile(0.5),
                         2.0 * normal_quantile(0.75), std::numeric_limits<double>::infinity()}};
    default: throw config_error("dgp: id must be in 1..4");
  }
}

// Draws covariates, noise and both potential outcomes. Per-unit draw order
// is fixed (z, then the two noise terms), so a seed pins the whole vector.
inline PotentialDraws generate_potential(const DgpSpec& spec, std::int64_t n, Rng& rng) {
  validate(spec);
  if (n < 1) throw std::invalid_argument("generate_potential: n must be >= 1");
  PotentialDraws out;
  out.z.resize(static_cast<std::size_t>(n));
  out.y1.resize(static_cast<std::size_t>(n));
  out.y0.resize(static_cast<std::size_t>(n));

  const double beta_sd = std::sqrt(1.0 / 20.0);  // sd of Beta(2,2)
  for (std::int64_t i = 0; i < n; ++i) {
    auto u = static_cast<std::size_t>(i);
    double z, e1, e2;
    switch (spec.id) {
      case 1:
      case 2:
        z = (rng.beta22() - 0.5) / beta_sd;  // standardized Beta(2,2)
        e1 = rng.normal();
        e2 = rng.normal();
        break;
      case 3:
        z = -2.0 + 4.0 * rng.uniform();
        e1 = rng.student_t3() / 3.0;
        e2 = rng.student_t3() / 3.0;
        break;
      case 4:
      default:
        z = 2.0 * rng.normal();
        e1 = rng.normal();
        e2 = rng.normal();
        break;
    }
    out.z[u] = z;
    switch (spec.id) {
      case 1:
        out.y1[u] = spec.mu + spec.gamma * z + spec.sigma * e1;
        out.y0[u] = spec.gamma * z + e2;
        break;
      case 2:
        out.y1[u] = spec.mu + spec.gamma * z + spec.sigma * e1;
        out.y0[u] = -spec.gamma * std::log(z + 3.0) * (z <= 0.5 ? 1.0 : 0.0) + e2;
        break;
      case 3: {
        double m0 = std::abs(z) >= 1.0 ? spec.gamma * z * z
                                       : spec.gamma / 4.0 * (2.0 - z * z);
        double scale = 1.0 + z * z;
        out.y1[u] = spec.mu - m0 + spec.sigma * scale * e1;
        out.y0[u] = m0 + scale * e2;
        break;
      }
      case 4:
      default: {
        double m1 = spec.gamma * z * z / 4.0;
        double scale = 1.0 + 0.5 * std::exp(-z * z / 2.0);
        out.y1[u] = spec.mu + m1 + spec.sigma * scale * e1;
        out.y0[u] = -m1 + scale * e2;
        break;
      }
    }
  }
  out.strata = make_strata(out.z, dgp_strata_rule(spec.id));
  return out;
}

// Observed sample induced by a treatment vector:
// y_i = a_i * y1_i + (1 - a_i) * y0_i.
inline Sample realize(const PotentialDraws& pot, std::span<const std::uint8_t> a) {
  if (a.size() != pot.y1.size()) throw std::invalid_argument("realize: length mismatch");
  Sample out;
  out.y.resize(a.size());
  out.a.assign(a.begin(), a.end());
  out.s = pot.strata;
  for (std::size_t i = 0; i < a.size(); ++i) out.y[i] = a[i] ? pot.y1[i] : pot.y0[i];
  return out;
}

enum class Estimand { Qte, Ate, Contrast };

inline const char* estimand_name(Estimand e) {
  switch (e) {
    case Estimand::Qte: return "qte";
    case Estimand::Ate: return "ate";
    case Estimand::Contrast: return "contrast";
  }
  return "?";
}

struct TrueValueResult {
  double value = 0.0;
  double mc_se = 0.0;
  std::int64_t oracle_n = 0;
  int oracle_reps = 0;
};

// Monte Carlo oracle for the population estimand: each replication draws
// oracle_n potential-outcome pairs and evaluates the estimand on them;
// the result averages the replications and reports their standard error.
// Replications run in parallel on seeds derive_seed(seed, rep+1).
inline TrueValueResult true_value(const DgpSpec& spec, Estimand estimand, double tau,
                                  double tau2, std::int64_t oracle_n, int oracle_reps,
                                  std::uint64_t seed) {
  validate(spec);
  if (oracle_n < 1 || oracle_reps < 1)
    throw std::invalid_argument("true_value: oracle size and reps must be positive");
  if (estimand != Estimand::Ate) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("true_value: tau must be in (0,1)");
    if (estimand == Estimand::Contrast && !(tau2 > 0.0 && tau2 < 1.0))
      throw std::invalid_argument("true_value: tau2 must be in (0,1)");
  }

  std::vector<double> rep_values(static_cast<std::size_t>(oracle_reps));
  parallel_for(static_cast<std::size_t>(oracle_reps), [&](std::size_t rep) {
    Rng rng(derive_seed(seed, rep + 1));
    PotentialDraws pot = generate_potential(spec, oracle_n, rng);
    double value;
    switch (estimand) {
      case Estimand::Qte:
        value = empirical_quantile(pot.y1, tau) - empirical_quantile(pot.y0, tau);
        break;
      case Estimand::Ate: {
        double s1 = 0.0, s0 = 0.0;
        for (double v : pot.y1) s1 += v;
        for (double v : pot.y0) s0 += v;
        value = (s1 - s0) / static_cast<double>(oracle_n);
        break;
      }
      case Estimand::Contrast:
      default:
        value = (empirical_quantile(pot.y1, tau) - empirical_quantile(pot.y0, tau)) -
                (empirical_quantile(pot.y1, tau2) - empirical_quantile(pot.y0, tau2));
        break;
    }
    rep_values[rep] = value;
  });

  double mean = 0.0;
  for (double v : rep_values) mean += v;
  mean /= static_cast<double>(oracle_reps);
  double ss = 0.0;
  for (double v : rep_values) ss += (v - mean) * (v - mean);
  double sd = oracle_reps > 1 ? std::sqrt(ss / static_cast<double>(oracle_reps - 1)) : 0.0;

  TrueValueResult out;
  out.value = mean;
  out.mc_se = sd / std::sqrt(static_cast<double>(oracle_reps));
  out.oracle_n = oracle_n;
  out.oracle_reps = oracle_reps;
  return out;
}

}  // namespace carq

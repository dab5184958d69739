#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carq/errors.hpp"
#include "carq/rng.hpp"
#include "carq/sample.hpp"

namespace carq {

enum class SchemeKind { Srs, Wei, Bcd, Sbr };

inline const char* scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Srs: return "srs";
    case SchemeKind::Wei: return "wei";
    case SchemeKind::Bcd: return "bcd";
    case SchemeKind::Sbr: return "sbr";
  }
  return "?";
}

inline std::optional<SchemeKind> scheme_from_name(const std::string& name) {
  if (name == "srs") return SchemeKind::Srs;
  if (name == "wei") return SchemeKind::Wei;
  if (name == "bcd") return SchemeKind::Bcd;
  if (name == "sbr") return SchemeKind::Sbr;
  return std::nullopt;
}

// Allocation bias function for the adaptive coin: non-increasing with
// phi(-x) = 1 - phi(x). Only the linear default ships; a custom phi must
// carry its derivative at 0 for the imbalance variance to be computable.
struct WeiPhi {
  std::function<double(double)> f = [](double x) { return (1.0 - x) / 2.0; };
  std::optional<double> deriv_at_zero = -0.5;
};

// Tagged assignment rule with its parameters.
//   Srs: i.i.d. Bernoulli(pi).
//   Wei: adaptive coin, P(A_k=1) = phi(imbalance fraction of k's stratum).
//   Bcd: biased coin, probability 1/2, lambda, or 1-lambda by imbalance sign.
//   Sbr: per stratum exactly floor(pi * n(s)) treated at random positions.
struct SchemeSpec {
  SchemeKind kind = SchemeKind::Srs;
  double pi = 0.5;
  double lambda = 0.75;  // Bcd only
  WeiPhi phi;            // Wei only
};

inline void validate(const SchemeSpec& scheme) {
  // The sequential rules need a real coin; the independent ones also admit
  // the degenerate all-treated boundary pi = 1.
  if (!(scheme.pi > 0.0 && scheme.pi <= 1.0)) throw config_error("scheme: pi must be in (0,1]");
  if (scheme.kind == SchemeKind::Wei || scheme.kind == SchemeKind::Bcd) {
    if (scheme.pi != 0.5)
      throw config_error(std::string(scheme_name(scheme.kind)) + " requires pi = 1/2");
  }
  if (scheme.kind == SchemeKind::Bcd) {
    if (!(scheme.lambda > 0.5 && scheme.lambda <= 1.0))
      throw config_error("bcd: lambda must be in (1/2, 1]");
  }
}

inline SchemeSpec srs(double pi = 0.5) { return SchemeSpec{SchemeKind::Srs, pi, 0.75, {}}; }
inline SchemeSpec wei() { return SchemeSpec{SchemeKind::Wei, 0.5, 0.75, {}}; }
inline SchemeSpec bcd(double lambda = 0.75) { return SchemeSpec{SchemeKind::Bcd, 0.5, lambda, {}}; }
inline SchemeSpec sbr(double pi = 0.5) { return SchemeSpec{SchemeKind::Sbr, pi, 0.75, {}}; }

// Stratum construction from a scalar covariate: label = #{cutoffs >= z},
// i.e. sum_j 1{z <= g_j} for strictly increasing cutoffs g.
struct StrataRule {
  std::vector<double> cutoffs;
};

inline std::vector<int> make_strata(std::span<const double> z, const StrataRule& rule) {
  for (std::size_t j = 1; j < rule.cutoffs.size(); ++j)
    if (!(rule.cutoffs[j - 1] < rule.cutoffs[j]))
      throw config_error("make_strata: cutoffs must be strictly increasing");
  std::vector<int> labels(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    int count = 0;
    for (double g : rule.cutoffs) count += (z[i] <= g) ? 1 : 0;
    labels[i] = count;
  }
  return labels;
}

// Draws one treatment vector for the given strata under the scheme.
// Sequential rules (Wei, Bcd) process units in input order.
inline std::vector<std::uint8_t> assign(const SchemeSpec& scheme,
                                        std::span<const int> strata, Rng& rng) {
  validate(scheme);
  if (strata.empty()) throw config_error("assign: empty strata");
  int max_label = 0;
  for (int label : strata) {
    if (label < 0) throw config_error("assign: negative stratum label");
    max_label = std::max(max_label, label);
  }
  const std::size_t n = strata.size();
  std::vector<std::uint8_t> a(n, 0);

  switch (scheme.kind) {
    case SchemeKind::Srs: {
      for (std::size_t i = 0; i < n; ++i) a[i] = rng.bernoulli(scheme.pi) ? 1 : 0;
      break;
    }
    case SchemeKind::Wei: {
      // Running per-stratum counts; imbalance measured around 1/2.
      std::vector<double> d(static_cast<std::size_t>(max_label) + 1, 0.0);
      std::vector<std::int64_t> count(static_cast<std::size_t>(max_label) + 1, 0);
      for (std::size_t i = 0; i < n; ++i) {
        auto u = static_cast<std::size_t>(strata[i]);
        double frac = count[u] == 0 ? 0.0 : d[u] / static_cast<double>(count[u]);
        double p = scheme.phi.f(frac);
        p = std::clamp(p, 0.0, 1.0);
        a[i] = rng.bernoulli(p) ? 1 : 0;
        d[u] += static_cast<double>(a[i]) - 0.5;
        ++count[u];
      }
      break;
    }
    case SchemeKind::Bcd: {
      std::vector<double> d(static_cast<std::size_t>(max_label) + 1, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        auto u = static_cast<std::size_t>(strata[i]);
        double p = 0.5;
        if (d[u] < 0.0) p = scheme.lambda;
        else if (d[u] > 0.0) p = 1.0 - scheme.lambda;
        a[i] = rng.bernoulli(p) ? 1 : 0;
        d[u] += static_cast<double>(a[i]) - 0.5;
      }
      break;
    }
    case SchemeKind::Sbr: {
      // Gather unit positions per stratum (ascending label), shuffle each,
      // treat the first floor(pi * n(s)).
      std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_label) + 1);
      for (std::size_t i = 0; i < n; ++i)
        members[static_cast<std::size_t>(strata[i])].push_back(i);
      for (auto& group : members) {
        if (group.empty()) continue;
        for (std::size_t k = group.size() - 1; k > 0; --k) {
          std::size_t j = static_cast<std::size_t>(rng.below(k + 1));
          std::swap(group[k], group[j]);
        }
        auto treat = static_cast<std::size_t>(
            std::floor(scheme.pi * static_cast<double>(group.size())));
        for (std::size_t k = 0; k < treat; ++k) a[group[k]] = 1;
      }
      break;
    }
  }
  return a;
}

// Limiting variance factor of the scaled stratum imbalance D_n(s)/sqrt(n)
// (per stratum, constant across strata for all four rules):
//   Srs: pi(1-pi); Wei: (1/4) / (1 - 4 phi'(0)); Bcd, Sbr: 0.
inline double scheme_imbalance_variance(const SchemeSpec& scheme) {
  validate(scheme);
  switch (scheme.kind) {
    case SchemeKind::Srs: return scheme.pi * (1.0 - scheme.pi);
    case SchemeKind::Wei: {
      if (!scheme.phi.deriv_at_zero)
        throw config_error("wei: phi derivative at 0 required for the imbalance variance");
      return 0.25 / (1.0 - 4.0 * (*scheme.phi.deriv_at_zero));
    }
    case SchemeKind::Bcd:
    case SchemeKind::Sbr: return 0.0;
  }
  return 0.0;
}

}  // namespace carq

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "carq/errors.hpp"

namespace carq {

// One experiment's observed data: outcome, binary treatment, stratum label.
struct Sample {
  std::vector<double> y;
  std::vector<std::uint8_t> a;
  std::vector<int> s;

  std::size_t size() const { return y.size(); }

  void validate() const {
    if (y.empty()) throw data_error("sample: empty");
    if (a.size() != y.size() || s.size() != y.size())
      throw data_error("sample: y/a/s lengths differ");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] > 1) throw data_error("sample: treatment indicator not in {0,1} at row " + std::to_string(i));
      if (s[i] < 0) throw data_error("sample: negative stratum label at row " + std::to_string(i));
    }
  }
};

// Per-stratum counts and imbalance for a target proportion pi.
struct StrataStats {
  struct Stratum {
    int label = 0;
    std::int64_t n = 0;
    std::int64_t n1 = 0;
    double pi_hat = 0.0;  // n1 / n
    double p_hat = 0.0;   // n / n_total
    double d_n = 0.0;     // n1 - pi * n
  };

  double pi = 0.0;
  std::int64_t n_total = 0;
  std::int64_t n1_total = 0;
  std::vector<Stratum> strata;     // present strata, ascending label
  std::vector<int> slot_of_label;  // label -> index into strata, -1 if absent

  const Stratum& at_label(int label) const {
    if (label < 0 || label >= static_cast<int>(slot_of_label.size()) || slot_of_label[label] < 0)
      throw data_error("strata_stats: unknown stratum label " + std::to_string(label));
    return strata[static_cast<std::size_t>(slot_of_label[label])];
  }

  // sup over strata of |d_n / n|.
  double sup_abs_relative_imbalance() const {
    double sup = 0.0;
    for (const auto& st : strata) {
      double v = std::abs(st.d_n) / static_cast<double>(st.n);
      if (v > sup) sup = v;
    }
    return sup;
  }

  bool has_degenerate_propensity() const {
    for (const auto& st : strata)
      if (st.n1 == 0 || st.n1 == st.n) return true;
    return false;
  }

  int first_degenerate_label() const {
    for (const auto& st : strata)
      if (st.n1 == 0 || st.n1 == st.n) return st.label;
    return -1;
  }
};

inline StrataStats strata_stats(const Sample& sample, double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("strata_stats: pi must be in (0,1)");
  sample.validate();
  int max_label = 0;
  for (int label : sample.s) max_label = std::max(max_label, label);

  std::vector<std::int64_t> n(static_cast<std::size_t>(max_label) + 1, 0);
  std::vector<std::int64_t> n1(static_cast<std::size_t>(max_label) + 1, 0);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    ++n[static_cast<std::size_t>(sample.s[i])];
    n1[static_cast<std::size_t>(sample.s[i])] += sample.a[i];
  }

  StrataStats out;
  out.pi = pi;
  out.n_total = static_cast<std::int64_t>(sample.size());
  out.slot_of_label.assign(static_cast<std::size_t>(max_label) + 1, -1);
  for (int label = 0; label <= max_label; ++label) {
    auto u = static_cast<std::size_t>(label);
    if (n[u] == 0) continue;
    StrataStats::Stratum st;
    st.label = label;
    st.n = n[u];
    st.n1 = n1[u];
    st.pi_hat = static_cast<double>(st.n1) / static_cast<double>(st.n);
    st.p_hat = static_cast<double>(st.n) / static_cast<double>(out.n_total);
    st.d_n = static_cast<double>(st.n1) - pi * static_cast<double>(st.n);
    out.n1_total += st.n1;
    out.slot_of_label[u] = static_cast<int>(out.strata.size());
    out.strata.push_back(st);
  }
  return out;
}

}  // namespace carq

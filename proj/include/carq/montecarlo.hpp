#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carq/assign.hpp"
#include "carq/bootstrap.hpp"
#include "carq/csv.hpp"
#include "carq/dgp.hpp"
#include "carq/errors.hpp"
#include "carq/estimate.hpp"
#include "carq/parallel.hpp"
#include "carq/rng.hpp"
#include "carq/variance.hpp"

namespace carq {

// Estimator/standard-error pairs reported in the rejection tables.
enum class SeMethod { SNaive, SAdj, SW, SfeW, IpwW, SCA, SfeCA, IpwCA };

inline const char* se_method_name(SeMethod m) {
  switch (m) {
    case SeMethod::SNaive: return "s/naive";
    case SeMethod::SAdj: return "s/adj";
    case SeMethod::SW: return "s/W";
    case SeMethod::SfeW: return "sfe/W";
    case SeMethod::IpwW: return "ipw/W";
    case SeMethod::SCA: return "s/CA";
    case SeMethod::SfeCA: return "sfe/CA";
    case SeMethod::IpwCA: return "ipw/CA";
  }
  return "?";
}

inline std::optional<SeMethod> se_method_from_name(const std::string& name) {
  static const std::map<std::string, SeMethod> lookup = {
      {"s/naive", SeMethod::SNaive}, {"s/adj", SeMethod::SAdj},   {"s/W", SeMethod::SW},
      {"sfe/W", SeMethod::SfeW},     {"ipw/W", SeMethod::IpwW},   {"s/CA", SeMethod::SCA},
      {"sfe/CA", SeMethod::SfeCA},   {"ipw/CA", SeMethod::IpwCA}};
  auto it = lookup.find(name);
  if (it == lookup.end()) return std::nullopt;
  return it->second;
}

inline QteMethod se_method_estimator(SeMethod m) {
  switch (m) {
    case SeMethod::SNaive:
    case SeMethod::SAdj:
    case SeMethod::SW:
    case SeMethod::SCA: return QteMethod::Sqr;
    case SeMethod::SfeW:
    case SeMethod::SfeCA: return QteMethod::Sfe;
    case SeMethod::IpwW:
    case SeMethod::IpwCA: return QteMethod::Ipw;
  }
  return QteMethod::Sqr;
}

inline bool se_method_uses_weighted_boot(SeMethod m) {
  return m == SeMethod::SW || m == SeMethod::SfeW || m == SeMethod::IpwW;
}

inline bool se_method_uses_ca_boot(SeMethod m) {
  return m == SeMethod::SCA || m == SeMethod::SfeCA || m == SeMethod::IpwCA;
}

struct McEstimand {
  Estimand kind = Estimand::Qte;
  double tau = 0.5;
  double tau2 = 0.75;  // Contrast only

  std::string label() const {
    if (kind == Estimand::Contrast) return format_double(tau) + "-" + format_double(tau2);
    if (kind == Estimand::Ate) return "";
    return format_double(tau);
  }
};

// One cell of the rejection-rate experiment grid.
struct McConfig {
  DgpSpec dgp;  // dgp.mu is ignored; the data shift comes from mu_alt under H1
  SchemeSpec scheme;
  std::int64_t n = 200;
  McEstimand estimand;
  std::vector<SeMethod> methods;
  int reps = 1000;
  int boot_b = 1000;
  double level = 0.05;
  bool alternative = false;  // false: H0 (mu = 0); true: H1 (mu = mu_alt)
  double mu_alt = 1.0;
  double alpha_lo = 0.025;
  double alpha_hi = 0.975;
  double bandwidth_scale = 1.0;
  std::uint64_t seed = 1;
  // Estimand value at mu = 0 (from the oracle or a fixture). The tested
  // null is this value for quantile cells; for contrast cells under the
  // alternative the hypothesized value is shifted by mu_alt instead,
  // since the data contrast is invariant to the treated-arm shift.
  double true_value0 = 0.0;
};

struct CellResult {
  double reject_rate = 0.0;
  double mc_se = 0.0;
  int reps = 0;
};

inline double mc_stderr(double p_hat, std::int64_t r) {
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw std::invalid_argument("mc_stderr: p_hat not in [0,1]");
  if (r < 1) throw std::invalid_argument("mc_stderr: r must be >= 1");
  return std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(r));
}

namespace detail {

constexpr std::uint64_t kDataTag = 0x1;
constexpr std::uint64_t kWeightedTag = 0x2;
constexpr std::uint64_t kCaTag = 0x3;

inline std::string cell_key(const McConfig& c) {
  std::string key;
  key += "dgp=" + format_int(c.dgp.id);
  key += ";scheme=" + std::string(scheme_name(c.scheme.kind));
  key += ";pi=" + format_double(c.scheme.pi);
  if (c.scheme.kind == SchemeKind::Bcd) key += ";lambda=" + format_double(c.scheme.lambda);
  key += ";n=" + format_int(c.n);
  key += ";estimand=" + std::string(estimand_name(c.estimand.kind));
  key += ";tau=" + c.estimand.label();
  key += c.alternative ? ";hyp=H1;mu=" + format_double(c.mu_alt) : ";hyp=H0";
  return key;
}

inline void validate_config(const McConfig& c) {
  validate(c.dgp);
  validate(c.scheme);
  if (c.n < 2) throw config_error("mc: n must be >= 2");
  if (c.reps < 1) throw config_error("mc: reps must be >= 1");
  if (!(c.level > 0.0 && c.level < 1.0)) throw config_error("mc: level must be in (0,1)");
  if (c.methods.empty()) throw config_error("mc: no methods requested");
  if (c.estimand.kind == Estimand::Ate)
    throw config_error("mc: rejection cells cover quantile estimands only");
  bool any_boot = false;
  for (SeMethod m : c.methods) {
    any_boot = any_boot || se_method_uses_weighted_boot(m) || se_method_uses_ca_boot(m);
    if (c.estimand.kind == Estimand::Contrast &&
        (m == SeMethod::SNaive || m == SeMethod::SAdj))
      throw config_error("mc: analytic standard errors are not provided for contrasts; "
                         "use bootstrap methods");
  }
  if (any_boot && c.boot_b < 2) throw config_error("mc: boot_b must be >= 2");
  if (!(c.alpha_lo > 0.0 && c.alpha_lo < c.alpha_hi && c.alpha_hi < 1.0))
    throw config_error("mc: need 0 < alpha_lo < alpha_hi < 1");
}

}  // namespace detail

// Seed for one cell: the master seed combined with a hash of the cell's
// key string (dgp, scheme, n, estimand, hypothesis). Distinct cells get
// independent streams even when the grid shares one master seed.
inline std::uint64_t cell_seed(const McConfig& config) {
  std::string key = detail::cell_key(config);
  return derive_seed(config.seed, fnv1a64(key.data(), key.size()));
}

// Runs every replication of one cell and returns the rejection proportion
// per requested method. Within a replication all weighted-bootstrap
// methods read one weight stream and all covariate-adaptive methods one
// resample stream, so method subsets never change each other's results.
inline std::map<SeMethod, CellResult> run_methods(const McConfig& config) {
  detail::validate_config(config);
  const std::uint64_t cseed = cell_seed(config);
  const bool contrast = config.estimand.kind == Estimand::Contrast;
  const double mu = config.alternative ? config.mu_alt : 0.0;
  const double null_value =
      config.true_value0 + ((contrast && config.alternative) ? config.mu_alt : 0.0);

  bool need_weighted = false, need_ca = false, need_adj = false;
  std::vector<QteMethod> boot_estimators_w, boot_estimators_ca;
  auto add_unique = [](std::vector<QteMethod>& v, QteMethod m) {
    if (std::find(v.begin(), v.end(), m) == v.end()) v.push_back(m);
  };
  for (SeMethod m : config.methods) {
    if (m == SeMethod::SAdj) need_adj = true;
    if (se_method_uses_weighted_boot(m)) {
      need_weighted = true;
      add_unique(boot_estimators_w, se_method_estimator(m));
    }
    if (se_method_uses_ca_boot(m)) {
      need_ca = true;
      add_unique(boot_estimators_ca, se_method_estimator(m));
    }
  }
  const double gamma = need_adj ? scheme_imbalance_variance(config.scheme) : 0.0;

  std::vector<double> taus;
  taus.push_back(config.estimand.tau);
  if (contrast) taus.push_back(config.estimand.tau2);

  DgpSpec dgp = config.dgp;
  dgp.mu = mu;

  const auto n_methods = config.methods.size();
  std::vector<std::uint8_t> rejects(static_cast<std::size_t>(config.reps) * n_methods, 0);

  parallel_for(static_cast<std::size_t>(config.reps), [&](std::size_t rep) {
    try {
      const std::uint64_t rep_seed = derive_seed(cseed, rep + 1);
      Rng data_rng(derive_seed(rep_seed, detail::kDataTag));
      PotentialDraws pot = generate_potential(dgp, config.n, data_rng);
      std::vector<std::uint8_t> a = assign(config.scheme, pot.strata, data_rng);
      Sample sample = realize(pot, a);

      // Point estimates per estimator actually used.
      std::map<QteMethod, double> points;
      for (SeMethod m : config.methods) {
        QteMethod est = se_method_estimator(m);
        if (points.count(est)) continue;
        points[est] = contrast
                          ? qte_contrast(sample, config.estimand.tau, config.estimand.tau2, est)
                          : qte(sample, config.estimand.tau, est).value;
      }

      std::optional<detail::DrawTensor> wt, ct;
      if (need_weighted)
        wt = detail::weighted_draw_tensor(sample, boot_estimators_w, taus, config.boot_b,
                                          derive_seed(rep_seed, detail::kWeightedTag));
      if (need_ca)
        ct = detail::ca_draw_tensor(sample, config.scheme, boot_estimators_ca, taus,
                                    config.boot_b, derive_seed(rep_seed, detail::kCaTag));

      auto tensor_se = [&](const detail::DrawTensor& tensor,
                           std::span<const QteMethod> estimators, QteMethod est) {
        int m_index = 0;
        for (std::size_t k = 0; k < estimators.size(); ++k)
          if (estimators[k] == est) m_index = static_cast<int>(k);
        std::vector<double> column = contrast ? tensor.contrast_column(m_index, 0, 1)
                                              : tensor.column(m_index, 0);
        return se_from_draws(column, config.alpha_lo, config.alpha_hi);
      };

      for (std::size_t k = 0; k < n_methods; ++k) {
        SeMethod m = config.methods[k];
        QteMethod est = se_method_estimator(m);
        double se = 0.0;
        switch (m) {
          case SeMethod::SNaive:
            se = se_naive(sample, config.estimand.tau, config.scheme.pi,
                          config.bandwidth_scale).se;
            break;
          case SeMethod::SAdj:
            se = se_adjusted(sample, config.estimand.tau, config.scheme.pi, gamma,
                             config.bandwidth_scale).se;
            break;
          default:
            se = se_method_uses_weighted_boot(m) ? tensor_se(*wt, boot_estimators_w, est)
                                                 : tensor_se(*ct, boot_estimators_ca, est);
            break;
        }
        WaldResult res = wald(points[est], se, null_value, config.level);
        rejects[rep * n_methods + k] = res.reject ? 1 : 0;
      }
    } catch (const std::exception& e) {
      throw numeric_error("cell " + detail::cell_key(config) + ", replication " +
                          std::to_string(rep) + ": " + e.what());
    }
  });

  std::map<SeMethod, CellResult> out;
  for (std::size_t k = 0; k < n_methods; ++k) {
    std::int64_t hits = 0;
    for (int rep = 0; rep < config.reps; ++rep)
      hits += rejects[static_cast<std::size_t>(rep) * n_methods + k];
    CellResult cell;
    cell.reps = config.reps;
    cell.reject_rate = static_cast<double>(hits) / static_cast<double>(config.reps);
    cell.mc_se = mc_stderr(cell.reject_rate, config.reps);
    out[config.methods[k]] = cell;
  }
  return out;
}

inline CellResult run_cell(const McConfig& config, SeMethod method) {
  McConfig single = config;
  single.methods = {method};
  return run_methods(single).at(method);
}

struct McRow {
  McConfig config;
  SeMethod method = SeMethod::SNaive;
  CellResult result;
  std::string error;  // nonempty if the cell aborted
};

struct McTable {
  std::vector<McRow> rows;
};

// Runs the grid cell by cell. A failing cell contributes rows carrying its
// diagnostic; the rest of the table still completes. Progress and timing
// go to stderr.
inline McTable run_table(std::span<const McConfig> configs) {
  McTable table;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const McConfig& config = configs[c];
    auto started = std::chrono::steady_clock::now();
    std::map<SeMethod, CellResult> results;
    std::string error;
    try {
      results = run_methods(config);
    } catch (const std::exception& e) {
      error = e.what();
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cerr << "[carq] cell " << (c + 1) << "/" << configs.size() << " "
              << detail::cell_key(config) << " (" << format_double(elapsed) << "s)";
    if (!error.empty()) std::cerr << " FAILED: " << error;
    std::cerr << "\n";
    for (SeMethod m : config.methods) {
      McRow row;
      row.config = config;
      row.method = m;
      row.error = error;
      if (error.empty()) row.result = results.at(m);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// CSV layout: dgp,scheme,n,tau,hypothesis,method,reject_rate,mc_se,reps,boot_b,seed.
// Rates are proportions unless percent is set. Failed cells emit nan.
inline void write_csv(const McTable& table, std::ostream& out, bool percent = false) {
  out << "dgp,scheme,n,tau,hypothesis,method,reject_rate,mc_se,reps,boot_b,seed\n";
  for (const McRow& row : table.rows) {
    const McConfig& c = row.config;
    const double scale = percent ? 100.0 : 1.0;
    out << format_int(c.dgp.id) << ',' << scheme_name(c.scheme.kind) << ','
        << format_int(c.n) << ',' << c.estimand.label() << ','
        << (c.alternative ? "H1" : "H0") << ',' << se_method_name(row.method) << ',';
    if (row.error.empty())
      out << format_double(row.result.reject_rate * scale) << ','
          << format_double(row.result.mc_se * scale);
    else
      out << "nan,nan";
    out << ',' << format_int(c.reps) << ',' << format_int(c.boot_b) << ','
        << format_int(static_cast<std::int64_t>(c.seed)) << '\n';
  }
}

}  // namespace carq

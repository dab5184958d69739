// carq: estimation, inference and simulation for stratified randomized
// experiments. Subcommands: estimate, assign, simulate, true-values.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "carq/carq.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw carq::data_error("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw carq::data_error("cannot open output file: " + path);
  return out;
}

int require_int_field(double v, const std::string& what, std::size_t row) {
  double r = std::round(v);
  if (std::abs(v - r) > 0.0 || r < 0.0)
    throw carq::data_error(what + " must be a non-negative integer (row " +
                           std::to_string(row) + ")");
  return static_cast<int>(r);
}

// "col OP value" predicate over extra CSV columns, OP one of == != <= >= < >.
struct RowFilter {
  std::string column;
  std::string op;
  double value = 0.0;

  static RowFilter parse(const std::string& text) {
    static const char* ops[] = {"==", "!=", "<=", ">=", "<", ">"};
    for (const char* op : ops) {
      auto pos = text.find(op);
      if (pos == std::string::npos) continue;
      RowFilter f;
      f.column = text.substr(0, pos);
      while (!f.column.empty() && f.column.back() == ' ') f.column.pop_back();
      f.op = op;
      std::string rhs = text.substr(pos + std::strlen(op));
      f.value = carq::parse_double_field(rhs, 0);
      if (f.column.empty()) break;
      return f;
    }
    throw carq::config_error("cannot parse --subsample-filter '" + text +
                             "' (expected: column OP number)");
  }

  bool keep(double v) const {
    if (op == "==") return v == value;
    if (op == "!=") return v != value;
    if (op == "<=") return v <= value;
    if (op == ">=") return v >= value;
    if (op == "<") return v < value;
    return v > value;
  }
};

carq::SchemeSpec build_scheme(const std::string& name, double pi, double lambda) {
  auto kind = carq::scheme_from_name(name);
  if (!kind) throw carq::config_error("unknown scheme '" + name + "' (srs, wei, bcd, sbr)");
  carq::SchemeSpec scheme;
  scheme.kind = *kind;
  scheme.pi = (scheme.kind == carq::SchemeKind::Wei || scheme.kind == carq::SchemeKind::Bcd)
                  ? 0.5
                  : pi;
  scheme.lambda = lambda;
  carq::validate(scheme);
  return scheme;
}

carq::Sample sample_from_csv(const carq::CsvTable& table,
                             const std::optional<RowFilter>& filter) {
  int yc = table.column_index("y");
  int ac = table.column_index("a");
  int sc = table.column_index("s");
  if (yc < 0 || ac < 0 || sc < 0)
    throw carq::data_error("data csv must have columns y,a,s");
  int fc = -1;
  if (filter) {
    fc = table.column_index(filter->column);
    if (fc < 0) throw carq::data_error("filter column '" + filter->column + "' not in csv");
  }
  carq::Sample s;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (filter && !filter->keep(row[static_cast<std::size_t>(fc)])) continue;
    double av = row[static_cast<std::size_t>(ac)];
    if (av != 0.0 && av != 1.0)
      throw carq::data_error("treatment column must be 0/1 (row " + std::to_string(r + 2) + ")");
    s.y.push_back(row[static_cast<std::size_t>(yc)]);
    s.a.push_back(static_cast<std::uint8_t>(av));
    s.s.push_back(require_int_field(row[static_cast<std::size_t>(sc)], "stratum label", r + 2));
  }
  if (s.y.empty()) throw carq::data_error("no rows after filtering");
  return s;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
  std::string data_path;
  std::vector<double> taus{0.5};
  std::vector<std::string> methods{"sqr", "ipw"};
  std::vector<std::string> se_kinds{"weighted-boot"};
  std::string scheme_name;
  double pi = 0.5;
  double lambda = 0.75;
  int boot_b = 1000;
  std::uint64_t seed = 1;
  double level = 0.05;
  double null_value = 0.0;
  double alpha_lo = 0.025, alpha_hi = 0.975;
  double bandwidth_scale = 1.0;
  std::string filter_text;
  std::string band_path;
  std::string out_path;
};

int run_estimate(const EstimateOptions& opt) {
  static const std::set<std::string> known_se = {"naive", "adj", "weighted-boot", "ca-boot"};
  for (const auto& kind : opt.se_kinds)
    if (!known_se.count(kind))
      throw carq::config_error("unknown --se '" + kind +
                               "' (naive, adj, weighted-boot, ca-boot)");
  bool wants_adj = false, wants_ca = false, wants_weighted = false, wants_naive = false;
  for (const auto& kind : opt.se_kinds) {
    wants_naive = wants_naive || kind == "naive";
    wants_adj = wants_adj || kind == "adj";
    wants_ca = wants_ca || kind == "ca-boot";
    wants_weighted = wants_weighted || kind == "weighted-boot";
  }
  if ((wants_adj || wants_ca) && opt.scheme_name.empty())
    throw carq::config_error("--scheme is required for se kinds 'adj' and 'ca-boot' "
                             "(the resampler must rerun the original assignment rule)");
  std::vector<carq::QteMethod> methods;
  for (const auto& name : opt.methods) {
    auto m = carq::qte_method_from_name(name);
    if (!m) throw carq::config_error("unknown --method '" + name + "' (sqr, ipw, sfe)");
    methods.push_back(*m);
  }
  if (methods.empty() || opt.taus.empty()) throw carq::config_error("nothing to estimate");
  if (!opt.band_path.empty() && (methods.size() != 1 || opt.se_kinds.size() != 1))
    throw carq::config_error("--band needs exactly one --method and one --se");

  std::optional<RowFilter> filter;
  if (!opt.filter_text.empty()) filter = RowFilter::parse(opt.filter_text);

  auto in = open_input(opt.data_path);
  carq::Sample sample = sample_from_csv(carq::read_csv(in), filter);
  sample.validate();

  std::optional<carq::SchemeSpec> scheme;
  if (!opt.scheme_name.empty()) scheme = build_scheme(opt.scheme_name, opt.pi, opt.lambda);

  // Shared draw tensors: one weight stream and one resample stream across
  // all methods and taus.
  std::optional<carq::detail::DrawTensor> wt, ct;
  if (wants_weighted)
    wt = carq::detail::weighted_draw_tensor(sample, methods, opt.taus, opt.boot_b,
                                            carq::derive_seed(opt.seed, 0x57));
  if (wants_ca)
    ct = carq::detail::ca_draw_tensor(sample, *scheme, methods, opt.taus, opt.boot_b,
                                      carq::derive_seed(opt.seed, 0xCA));

  ordered_json report;
  report["schema_version"] = 1;
  report["n"] = sample.size();
  report["pi"] = opt.pi;
  report["level"] = opt.level;
  report["null_value"] = opt.null_value;
  report["seed"] = opt.seed;
  report["boot_b"] = opt.boot_b;
  report["boot_quantiles"] = {opt.alpha_lo, opt.alpha_hi};
  if (scheme) report["scheme"] = carq::scheme_name(scheme->kind);
  if (!opt.filter_text.empty()) report["subsample_filter"] = opt.filter_text;
  report["imbalance_diagnostic"] = carq::imbalance_diagnostic(sample, opt.pi);

  auto stats = carq::strata_stats(sample, opt.pi);
  ordered_json strata = ordered_json::array();
  for (const auto& st : stats.strata) {
    ordered_json s;
    s["label"] = st.label;
    s["n"] = st.n;
    s["n1"] = st.n1;
    s["pi_hat"] = st.pi_hat;
    s["d_n"] = st.d_n;
    strata.push_back(s);
  }
  report["strata"] = strata;

  ordered_json results = ordered_json::array();
  std::ostringstream band;
  band << "tau,estimate,se,lo,hi\n";
  const double z = carq::normal_quantile(1.0 - opt.level / 2.0);

  for (std::size_t t = 0; t < opt.taus.size(); ++t) {
    double tau = opt.taus[t];
    for (std::size_t m = 0; m < methods.size(); ++m) {
      carq::QteEstimate est = carq::qte(sample, tau, methods[m]);
      for (const auto& kind : opt.se_kinds) {
        double se = 0.0;
        if (kind == "naive") {
          se = carq::se_naive(sample, tau, opt.pi, opt.bandwidth_scale).se;
        } else if (kind == "adj") {
          se = carq::se_adjusted(sample, tau, opt.pi,
                                 carq::scheme_imbalance_variance(*scheme),
                                 opt.bandwidth_scale).se;
        } else if (kind == "weighted-boot") {
          se = carq::se_from_draws(wt->column(static_cast<int>(m), static_cast<int>(t)),
                                   opt.alpha_lo, opt.alpha_hi);
        } else {
          se = carq::se_from_draws(ct->column(static_cast<int>(m), static_cast<int>(t)),
                                   opt.alpha_lo, opt.alpha_hi);
        }
        carq::WaldResult test = carq::wald(est.value, se, opt.null_value, opt.level);
        ordered_json row;
        row["tau"] = tau;
        row["method"] = carq::qte_method_name(methods[m]);
        row["se_kind"] = kind;
        row["estimate"] = est.value;
        row["q1"] = est.q1;
        row["q0"] = est.q0;
        row["se"] = se;
        row["t"] = test.t;
        row["reject"] = test.reject;
        if (kind == "weighted-boot" || kind == "ca-boot") {
          const auto& tensor = kind == "weighted-boot" ? *wt : *ct;
          auto column = tensor.column(static_cast<int>(m), static_cast<int>(t));
          double mean = 0.0;
          for (double v : column) mean += v;
          mean /= static_cast<double>(column.size());
          double ss = 0.0;
          for (double v : column) ss += (v - mean) * (v - mean);
          ordered_json draws;
          draws["b"] = tensor.b;
          draws["mean"] = mean;
          draws["sd"] = std::sqrt(ss / static_cast<double>(column.size() - 1));
          draws["degenerate_retries"] = tensor.degenerate_retries;
          row["draws"] = draws;
        }
        results.push_back(row);
        if (!opt.band_path.empty())
          band << carq::format_double(tau) << ',' << carq::format_double(est.value) << ','
               << carq::format_double(se) << ',' << carq::format_double(est.value - z * se)
               << ',' << carq::format_double(est.value + z * se) << '\n';
      }
    }
  }
  report["results"] = results;

  std::string dump = report.dump(2);
  dump.push_back('\n');
  if (opt.out_path.empty() || opt.out_path == "-") {
    std::cout << dump;
  } else {
    auto out = open_output(opt.out_path);
    out << dump;
  }
  if (!opt.band_path.empty()) {
    auto out = open_output(opt.band_path);
    out << band.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// assign

struct AssignOptions {
  std::string strata_path;
  std::string scheme_name = "srs";
  double pi = 0.5;
  double lambda = 0.75;
  std::uint64_t seed = 1;
  std::string out_path;
};

int run_assign(const AssignOptions& opt) {
  auto in = open_input(opt.strata_path);
  carq::CsvTable table = carq::read_csv(in);
  int sc = table.column_index("s");
  if (sc < 0) throw carq::data_error("strata csv must have a column 's'");
  std::vector<int> strata;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    strata.push_back(require_int_field(table.rows[r][static_cast<std::size_t>(sc)],
                                       "stratum label", r + 2));
  if (strata.empty()) throw carq::data_error("strata csv has no rows");

  carq::SchemeSpec scheme = build_scheme(opt.scheme_name, opt.pi, opt.lambda);
  carq::Rng rng(opt.seed);
  auto a = carq::assign(scheme, strata, rng);

  std::ostringstream body;
  body << "s,a\n";
  for (std::size_t i = 0; i < strata.size(); ++i)
    body << strata[i] << ',' << int(a[i]) << '\n';
  if (opt.out_path.empty() || opt.out_path == "-") {
    std::cout << body.str();
  } else {
    auto out = open_output(opt.out_path);
    out << body.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// true-values

struct TrueValueOptions {
  std::vector<int> dgps{1};
  std::vector<double> taus{0.5};
  double tau2 = 0.75;
  double mu = 0.0;
  std::string estimand = "qte";
  std::int64_t oracle_n = 1000000;
  int oracle_reps = 100;
  std::uint64_t seed = 1;
  std::string out_path;
};

int run_true_values(const TrueValueOptions& opt) {
  carq::Estimand estimand;
  if (opt.estimand == "qte") estimand = carq::Estimand::Qte;
  else if (opt.estimand == "ate") estimand = carq::Estimand::Ate;
  else if (opt.estimand == "contrast") estimand = carq::Estimand::Contrast;
  else throw carq::config_error("unknown --estimand (qte, ate, contrast)");

  std::ostringstream body;
  body << "dgp,tau,mu,estimand,value,mc_se,oracle_n,oracle_reps,seed\n";
  for (int id : opt.dgps) {
    carq::DgpSpec spec;
    spec.id = id;
    spec.mu = opt.mu;
    std::vector<double> taus = estimand == carq::Estimand::Ate
                                   ? std::vector<double>{0.5}
                                   : opt.taus;
    for (double tau : taus) {
      std::uint64_t run_seed = carq::derive_seed(
          opt.seed, {static_cast<std::uint64_t>(id),
                     carq::fnv1a64(reinterpret_cast<const char*>(&tau), sizeof(tau))});
      auto res = carq::true_value(spec, estimand, tau, opt.tau2, opt.oracle_n,
                                  opt.oracle_reps, run_seed);
      std::string tau_label;
      if (estimand == carq::Estimand::Qte) tau_label = carq::format_double(tau);
      else if (estimand == carq::Estimand::Contrast)
        tau_label = carq::format_double(tau) + "-" + carq::format_double(opt.tau2);
      body << id << ',' << tau_label << ',' << carq::format_double(opt.mu) << ','
           << opt.estimand << ',' << carq::format_double(res.value) << ','
           << carq::format_double(res.mc_se) << ',' << res.oracle_n << ','
           << res.oracle_reps << ',' << opt.seed << '\n';
    }
  }
  if (opt.out_path.empty() || opt.out_path == "-") {
    std::cout << body.str();
  } else {
    auto out = open_output(opt.out_path);
    out << body.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string config_path;
  std::string out_path;
  bool percent = false;
};

void check_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw carq::config_error("unknown key '" + it.key() + "' in " + where);
}

int run_simulate(const SimulateOptions& opt) {
  auto in = open_input(opt.config_path);
  ordered_json config;
  try {
    config = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw carq::config_error(std::string("config parse error: ") + e.what());
  }
  check_keys(config,
             {"schema_version", "dgps", "schemes", "pi", "lambda", "n", "estimand", "taus",
              "contrast", "methods", "reps", "boot_b", "level", "hypothesis", "mu_alt",
              "boot_quantiles", "bandwidth_scale", "seed", "true_values", "oracle_n",
              "oracle_reps", "out"},
             "config");
  if (config.value("schema_version", 1) != 1)
    throw carq::config_error("unsupported schema_version");

  std::vector<int> dgps = config.value("dgps", std::vector<int>{1});
  std::vector<std::string> scheme_names =
      config.value("schemes", std::vector<std::string>{"srs"});
  double pi = config.value("pi", 0.5);
  double lambda = config.value("lambda", 0.75);
  std::int64_t n = config.value("n", 200);
  std::string estimand_name = config.value("estimand", "qte");
  std::vector<double> taus = config.value("taus", std::vector<double>{0.5});
  std::vector<double> contrast = config.value("contrast", std::vector<double>{0.25, 0.75});
  std::vector<std::string> method_names = config.value(
      "methods", std::vector<std::string>{"s/naive", "s/adj", "s/W", "ipw/W", "s/CA", "ipw/CA"});
  int reps = config.value("reps", 1000);
  int boot_b = config.value("boot_b", 1000);
  double level = config.value("level", 0.05);
  std::string hypothesis = config.value("hypothesis", "H0");
  double mu_alt = config.value("mu_alt", 1.0);
  std::vector<double> boot_q = config.value("boot_quantiles", std::vector<double>{0.025, 0.975});
  double bandwidth_scale = config.value("bandwidth_scale", 1.0);
  std::uint64_t seed = config.value("seed", std::uint64_t{1});
  std::int64_t oracle_n = config.value("oracle_n", std::int64_t{1000000});
  int oracle_reps = config.value("oracle_reps", 100);

  if (hypothesis != "H0" && hypothesis != "H1")
    throw carq::config_error("hypothesis must be H0 or H1");
  if (boot_q.size() != 2) throw carq::config_error("boot_quantiles must be [lo, hi]");
  if (estimand_name != "qte" && estimand_name != "contrast")
    throw carq::config_error("estimand must be qte or contrast");
  const bool is_contrast = estimand_name == "contrast";
  if (is_contrast && contrast.size() != 2)
    throw carq::config_error("contrast must be [tau1, tau2]");

  std::vector<carq::SeMethod> methods;
  for (const auto& name : method_names) {
    auto m = carq::se_method_from_name(name);
    if (!m) throw carq::config_error("unknown method '" + name + "'");
    methods.push_back(*m);
  }

  // True values at mu = 0: explicit entries win, the oracle fills the rest.
  std::map<std::string, double> provided;
  if (config.contains("true_values")) {
    for (const auto& entry : config["true_values"]) {
      check_keys(entry, {"dgp", "tau", "contrast", "value"}, "true_values entry");
      int dgp = entry.at("dgp").get<int>();
      std::string key;
      if (entry.contains("contrast")) {
        auto pair = entry["contrast"].get<std::vector<double>>();
        if (pair.size() != 2) throw carq::config_error("true_values contrast must be [tau1, tau2]");
        key = std::to_string(dgp) + ":" + carq::format_double(pair[0]) + "-" +
              carq::format_double(pair[1]);
      } else {
        key = std::to_string(dgp) + ":" + carq::format_double(entry.at("tau").get<double>());
      }
      provided[key] = entry.at("value").get<double>();
    }
  }
  std::map<std::string, double> truth_cache;
  auto truth_for = [&](int dgp, const carq::McEstimand& est) {
    std::string key = std::to_string(dgp) + ":" + est.label();
    if (provided.count(key)) return provided.at(key);
    if (!truth_cache.count(key)) {
      carq::DgpSpec spec;
      spec.id = dgp;
      std::uint64_t oracle_seed =
          carq::derive_seed(seed, carq::fnv1a64(key.data(), key.size()));
      std::cerr << "[carq] oracle for dgp " << dgp << " estimand " << est.label()
                << " (n=" << oracle_n << ", reps=" << oracle_reps << ")\n";
      truth_cache[key] = carq::true_value(spec, est.kind, est.tau, est.tau2, oracle_n,
                                          oracle_reps, oracle_seed).value;
    }
    return truth_cache.at(key);
  };

  std::vector<carq::McEstimand> estimands;
  if (is_contrast) estimands.push_back({carq::Estimand::Contrast, contrast[0], contrast[1]});
  else
    for (double tau : taus) estimands.push_back({carq::Estimand::Qte, tau, 0.75});

  std::vector<carq::McConfig> grid;
  for (int dgp : dgps)
    for (const auto& scheme_name_ : scheme_names)
      for (const auto& est : estimands) {
        carq::McConfig cell;
        cell.dgp.id = dgp;
        cell.scheme = build_scheme(scheme_name_, pi, lambda);
        cell.n = n;
        cell.estimand = est;
        cell.methods = methods;
        cell.reps = reps;
        cell.boot_b = boot_b;
        cell.level = level;
        cell.alternative = hypothesis == "H1";
        cell.mu_alt = mu_alt;
        cell.alpha_lo = boot_q[0];
        cell.alpha_hi = boot_q[1];
        cell.bandwidth_scale = bandwidth_scale;
        cell.seed = seed;
        cell.true_value0 = truth_for(dgp, est);
        grid.push_back(cell);
      }

  carq::McTable table = carq::run_table(grid);
  std::ostringstream body;
  carq::write_csv(table, body, opt.percent);

  std::string out_path = opt.out_path;
  if (out_path.empty()) out_path = config.value("out", std::string{});
  if (out_path.empty() || out_path == "-") {
    std::cout << body.str();
  } else {
    auto out = open_output(out_path);
    out << body.str();
  }
  for (const auto& row : table.rows)
    if (!row.error.empty()) return kExitNumeric;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile and average treatment effects under stratified randomization"};
  app.require_subcommand(1);

  EstimateOptions est;
  auto* cmd_est = app.add_subcommand("estimate", "Estimate treatment effects from a CSV");
  cmd_est->add_option("data", est.data_path, "CSV with columns y,a,s")->required();
  cmd_est->add_option("--tau", est.taus, "Quantile indexes");
  cmd_est->add_option("--method", est.methods, "Estimators: sqr ipw sfe");
  cmd_est->add_option("--se", est.se_kinds, "SE kinds: naive adj weighted-boot ca-boot");
  cmd_est->add_option("--scheme", est.scheme_name, "Assignment rule: srs wei bcd sbr");
  cmd_est->add_option("--pi", est.pi, "Target treated proportion");
  cmd_est->add_option("--lambda", est.lambda, "Biased-coin parameter");
  cmd_est->add_option("--boot-b", est.boot_b, "Bootstrap replications");
  cmd_est->add_option("--seed", est.seed, "Random seed");
  cmd_est->add_option("--level", est.level, "Test level");
  cmd_est->add_option("--null", est.null_value, "Hypothesized value");
  cmd_est->add_option("--boot-quantiles", [&est](const std::vector<std::string>& vals) {
    if (vals.size() != 2) return false;
    est.alpha_lo = std::stod(vals[0]);
    est.alpha_hi = std::stod(vals[1]);
    return true;
  }, "Bootstrap interquantile pair (default 0.025 0.975)")->expected(2);
  cmd_est->add_option("--bw-scale", est.bandwidth_scale, "Bandwidth multiplier");
  cmd_est->add_option("--subsample-filter", est.filter_text, "Row predicate: col OP number");
  cmd_est->add_option("--band", est.band_path, "Write per-tau band CSV here");
  cmd_est->add_option("--out", est.out_path, "Report JSON path (default stdout)");

  AssignOptions asg;
  auto* cmd_asg = app.add_subcommand("assign", "Draw treatments for a strata CSV");
  cmd_asg->add_option("strata", asg.strata_path, "CSV with column s")->required();
  cmd_asg->add_option("--scheme", asg.scheme_name, "Assignment rule: srs wei bcd sbr");
  cmd_asg->add_option("--pi", asg.pi, "Target treated proportion");
  cmd_asg->add_option("--lambda", asg.lambda, "Biased-coin parameter");
  cmd_asg->add_option("--seed", asg.seed, "Random seed");
  cmd_asg->add_option("--out", asg.out_path, "Output CSV path (default stdout)");

  TrueValueOptions tv;
  auto* cmd_tv = app.add_subcommand("true-values", "Monte Carlo oracle fixture CSV");
  cmd_tv->add_option("--dgp", tv.dgps, "Design ids (1-4)");
  cmd_tv->add_option("--tau", tv.taus, "Quantile indexes");
  cmd_tv->add_option("--tau2", tv.tau2, "Second index for contrasts");
  cmd_tv->add_option("--mu", tv.mu, "Treated-arm shift");
  cmd_tv->add_option("--estimand", tv.estimand, "qte, ate or contrast");
  cmd_tv->add_option("--oracle-n", tv.oracle_n, "Sample size per replication");
  cmd_tv->add_option("--oracle-reps", tv.oracle_reps, "Replications");
  cmd_tv->add_option("--seed", tv.seed, "Random seed");
  cmd_tv->add_option("--out", tv.out_path, "Output CSV path (default stdout)");

  SimulateOptions sim;
  auto* cmd_sim = app.add_subcommand("simulate", "Rejection-rate table from a JSON config");
  cmd_sim->add_option("config", sim.config_path, "JSON run configuration")->required();
  cmd_sim->add_option("--out", sim.out_path, "Output CSV path (overrides config)");
  cmd_sim->add_flag("--percent", sim.percent, "Report rates multiplied by 100");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_est->parsed()) return run_estimate(est);
    if (cmd_asg->parsed()) return run_assign(asg);
    if (cmd_tv->parsed()) return run_true_values(tv);
    if (cmd_sim->parsed()) return run_simulate(sim);
  } catch (const carq::config_error& e) {
    std::cerr << "carq: " << e.what() << "\n";
    return kExitUsage;
  } catch (const carq::data_error& e) {
    std::cerr << "carq: " << e.what() << "\n";
    if (std::string(e.what()).find("empty arm") != std::string::npos)
      std::cerr << "carq: hint: merge sparse strata in the input so every stratum "
                   "contains both arms\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "carq: " << e.what() << "\n";
    return kExitUsage;
  } catch (const carq::numeric_error& e) {
    std::cerr << "carq: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "carq: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}

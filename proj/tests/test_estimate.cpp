#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "carq/dgp.hpp"
#include "carq/estimate.hpp"
#include "carq/rng.hpp"
#include "oracles.hpp"

using Catch::Approx;

namespace {

carq::Sample two_arm(const std::vector<double>& treated, const std::vector<double>& control,
                     int label = 0) {
  carq::Sample s;
  for (double v : treated) { s.y.push_back(v); s.a.push_back(1); s.s.push_back(label); }
  for (double v : control) { s.y.push_back(v); s.a.push_back(0); s.s.push_back(label); }
  return s;
}

// Exhaustive scan over all candidate slopes; the reference for the
// bracketing search inside qr_line_fit.
carq::QrLineFit full_scan_line_fit(std::span<const double> y, std::span<const double> x,
                                   std::span<const double> w, double tau) {
  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = i + 1; j < y.size(); ++j)
      if (x[i] != x[j]) candidates.push_back((y[i] - y[j]) / (x[i] - x[j]));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_obj = std::numeric_limits<double>::infinity();
  carq::QrLineFit best;
  std::vector<double> resid(y.size());
  for (double slope : candidates) {
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - slope * x[i];
    double b0 = carq::weighted_quantile(resid, w, tau);
    double obj = oracles::line_objective(y, x, w, b0, slope, tau);
    if (obj < best_obj) {
      best_obj = obj;
      best = carq::QrLineFit{b0, slope};
    }
  }
  return best;
}

}  // namespace

TEST_CASE("qte_sqr is the difference of arm quantiles") {
  auto s = two_arm({1, 2, 3}, {0, 1, 2});
  auto est = carq::qte_sqr(s, 0.5);
  CHECK(est.value == 1.0);
  CHECK(est.q1 == 2.0);
  CHECK(est.q0 == 1.0);

  auto same = two_arm({4, 5, 6}, {4, 5, 6});
  CHECK(carq::qte_sqr(same, 0.5).value == 0.0);

  carq::Sample no_control = two_arm({1.0, 2.0}, {});
  CHECK_THROWS_AS(carq::qte_sqr(no_control, 0.5), carq::data_error);
}

TEST_CASE("qte_sqr solves the two-parameter check-loss regression") {
  // The minimizer set of the piecewise-linear objective can be flat, so
  // the estimate and the grid point may sit at different corners of it;
  // what must agree is the attained objective.
  carq::Rng rng(41);
  for (int k = 0; k < 60; ++k) {
    auto s = oracles::random_sample(rng, 1, 10);
    double tau = 0.15 + 0.7 * rng.uniform();
    auto est = carq::qte_sqr(s, tau);
    std::vector<double> x(s.size()), w(s.size(), 1.0);
    for (std::size_t i = 0; i < s.size(); ++i) x[i] = s.a[i];
    auto grid = oracles::grid_line_fit(s.y, x, w, tau);
    double est_obj = oracles::line_objective(s.y, x, w, est.q0, est.value, tau);
    CHECK(est_obj <= grid.objective + 1e-9);
    CHECK(grid.objective - est_obj <=
          4.0 * grid.resolution * static_cast<double>(s.size()));
  }
}

TEST_CASE("qte_sqr equals the arm-quantile difference on random instances") {
  carq::Rng rng(42);
  for (int k = 0; k < 1000; ++k) {
    auto s = oracles::random_sample(rng, 1 + static_cast<int>(rng.below(4)), 6 + rng.below(30));
    double tau = 0.1 + 0.8 * rng.uniform();
    std::vector<double> treated, control;
    for (std::size_t i = 0; i < s.size(); ++i)
      (s.a[i] ? treated : control).push_back(s.y[i]);
    double expected = carq::empirical_quantile(treated, tau) -
                      carq::empirical_quantile(control, tau);
    CHECK(carq::qte_sqr(s, tau).value == expected);
  }
}

TEST_CASE("qte_ipw reduces to qte_sqr when propensities are constant") {
  SECTION("single stratum") {
    carq::Rng rng(43);
    auto s = oracles::random_sample(rng, 1, 14);
    for (double tau : {0.25, 0.5, 0.75})
      CHECK(carq::qte_ipw(s, tau).value == carq::qte_sqr(s, tau).value);
  }
  SECTION("two strata with equal propensity") {
    carq::Sample s;
    carq::Rng rng(44);
    for (int st = 0; st < 2; ++st)
      for (int rep = 0; rep < 4; ++rep)
        for (int arm = 0; arm < 2; ++arm) {
          s.s.push_back(st);
          s.a.push_back(static_cast<std::uint8_t>(arm));
          s.y.push_back(rng.uniform());
        }
    for (double tau : {0.3, 0.5, 0.7})
      CHECK(carq::qte_ipw(s, tau).value == carq::qte_sqr(s, tau).value);
  }
}

TEST_CASE("qte_ipw matches the grid minimizer of the weighted check loss") {
  carq::Rng rng(45);
  for (int k = 0; k < 40; ++k) {
    // Two strata, unequal propensities, n = 12.
    carq::Sample s;
    auto push = [&](int label, int arm, double y) {
      s.s.push_back(label);
      s.a.push_back(static_cast<std::uint8_t>(arm));
      s.y.push_back(y);
    };
    for (int i = 0; i < 4; ++i) push(0, i < 3 ? 1 : 0, 5.0 * (rng.uniform() - 0.5));
    for (int i = 0; i < 8; ++i) push(1, i < 3 ? 1 : 0, 5.0 * (rng.uniform() - 0.5));
    double tau = 0.2 + 0.6 * rng.uniform();

    auto stats = carq::strata_stats(s, 0.5);
    std::vector<double> y1, w1, y0, w0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      double pi_hat = stats.at_label(s.s[i]).pi_hat;
      if (s.a[i]) { y1.push_back(s.y[i]); w1.push_back(1.0 / pi_hat); }
      else { y0.push_back(s.y[i]); w0.push_back(1.0 / (1.0 - pi_hat)); }
    }
    auto est = carq::qte_ipw(s, tau);
    double grid_q1 = oracles::grid_quantile(y1, w1, tau);
    double grid_q0 = oracles::grid_quantile(y0, w0, tau);
    CHECK(oracles::weighted_check_objective(y1, w1, est.q1, tau) <=
          oracles::weighted_check_objective(y1, w1, grid_q1, tau) + 1e-9);
    CHECK(oracles::weighted_check_objective(y0, w0, est.q0, tau) <=
          oracles::weighted_check_objective(y0, w0, grid_q0, tau) + 1e-9);
  }
}

TEST_CASE("qte_ipw names the degenerate stratum") {
  carq::Sample s = two_arm({1, 2}, {3, 4}, 0);
  s.y.push_back(9.0);
  s.a.push_back(1);
  s.s.push_back(3);  // stratum 3 has no controls
  try {
    carq::qte_ipw(s, 0.5);
    FAIL("expected data_error");
  } catch (const carq::data_error& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("qte_sfe equals qte_sqr on a single stratum") {
  carq::Rng rng(46);
  for (int k = 0; k < 30; ++k) {
    auto s = oracles::random_sample(rng, 1, 9);
    double tau = 0.2 + 0.6 * rng.uniform();
    CHECK(carq::qte_sfe(s, tau).value == Approx(carq::qte_sqr(s, tau).value).margin(1e-12));
  }
}

TEST_CASE("qte_sfe is zero for constant outcomes") {
  carq::Sample s = two_arm({2, 2, 2}, {2, 2}, 0);
  auto more = two_arm({2, 2}, {2, 2, 2}, 1);
  s.y.insert(s.y.end(), more.y.begin(), more.y.end());
  s.a.insert(s.a.end(), more.a.begin(), more.a.end());
  s.s.insert(s.s.end(), more.s.begin(), more.s.end());
  CHECK(carq::qte_sfe(s, 0.5).value == 0.0);
}

TEST_CASE("qte_sfe matches the 2-D grid brute force") {
  carq::Rng rng(47);
  for (int k = 0; k < 30; ++k) {
    auto s = oracles::random_sample(rng, 2, 10);
    double tau = 0.2 + 0.6 * rng.uniform();
    auto stats = carq::strata_stats(s, 0.5);
    std::vector<double> x(s.size()), w(s.size(), 1.0);
    for (std::size_t i = 0; i < s.size(); ++i)
      x[i] = static_cast<double>(s.a[i]) - stats.at_label(s.s[i]).pi_hat;
    auto grid = oracles::grid_line_fit(s.y, x, w, tau);
    auto est = carq::qte_sfe(s, tau);
    double exact_obj = oracles::line_objective(s.y, x, w, est.q0, est.value, tau);
    CHECK(exact_obj <= grid.objective + 1e-9);
    CHECK(grid.objective - exact_obj <=
          4.0 * grid.resolution * static_cast<double>(s.size()));
  }
}

TEST_CASE("qr_line_fit bracketing search equals the full candidate scan") {
  carq::Rng rng(48);
  for (int k = 0; k < 150; ++k) {
    std::size_t n = 4 + rng.below(40);
    std::vector<double> y(n), x(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 6.0 * (rng.uniform() - 0.5);
      x[i] = rng.uniform() < 0.3 ? 0.25 : (rng.uniform() < 0.5 ? -0.4 : 0.6);
      w[i] = rng.uniform() < 0.2 ? 1.0 : 2.0 * rng.uniform();
    }
    x[0] = 0.25;
    x[1] = -0.4;  // regressor varies
    double tau = 0.1 + 0.8 * rng.uniform();
    auto fast = carq::qr_line_fit(y, x, w, tau);
    auto slow = full_scan_line_fit(y, x, w, tau);
    CHECK(fast.slope == slow.slope);
    CHECK(fast.intercept == slow.intercept);
  }
}

TEST_CASE("qr_line_fit rejects a constant regressor") {
  std::vector<double> y = {1, 2, 3};
  std::vector<double> x = {0.5, 0.5, 0.5};
  std::vector<double> w = {1, 1, 1};
  CHECK_THROWS_AS(carq::qr_line_fit(y, x, w, 0.5), carq::data_error);
}

TEST_CASE("ate estimators") {
  SECTION("simple difference of means") {
    auto s = two_arm({2, 4}, {1, 3});
    CHECK(carq::ate(s, carq::AteMethod::SimpleDiff) == 1.0);
  }
  SECTION("all methods coincide on a single stratum") {
    carq::Rng rng(49);
    auto s = oracles::random_sample(rng, 1, 12);
    double simple = carq::ate(s, carq::AteMethod::SimpleDiff);
    CHECK(carq::ate(s, carq::AteMethod::Ipw) == Approx(simple).margin(1e-12));
    CHECK(carq::ate(s, carq::AteMethod::Sfe) == Approx(simple).margin(1e-12));
  }
  SECTION("stratum-share weighting matches the hand formula") {
    carq::Rng rng(50);
    for (int k = 0; k < 50; ++k) {
      auto s = oracles::random_sample(rng, 2 + static_cast<int>(rng.below(3)), 10 + rng.below(20));
      auto stats = carq::strata_stats(s, 0.5);
      double expected = 0.0;
      for (const auto& st : stats.strata) {
        double s1 = 0.0, s0 = 0.0;
        std::int64_t c1 = 0, c0 = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (s.s[i] != st.label) continue;
          if (s.a[i]) { s1 += s.y[i]; ++c1; }
          else { s0 += s.y[i]; ++c0; }
        }
        expected += st.p_hat * (s1 / c1 - s0 / c0);
      }
      CHECK(carq::ate(s, carq::AteMethod::Ipw) == Approx(expected).margin(1e-12));
    }
  }
  SECTION("empty stratum arm is an error for stratified methods") {
    auto s = two_arm({1, 2}, {3}, 0);
    s.y.push_back(5.0);
    s.a.push_back(1);
    s.s.push_back(1);
    CHECK_THROWS_AS(carq::ate(s, carq::AteMethod::Ipw), carq::data_error);
    CHECK_THROWS_AS(carq::ate(s, carq::AteMethod::Sfe), carq::data_error);
    CHECK_NOTHROW(carq::ate(s, carq::AteMethod::SimpleDiff));
  }
}

TEST_CASE("qte_contrast composes the two estimates") {
  carq::Rng rng(51);
  carq::DgpSpec spec;
  spec.id = 3;
  auto pot = carq::generate_potential(spec, 200, rng);
  auto a = carq::assign(carq::sbr(0.5), pot.strata, rng);
  carq::Sample s = carq::realize(pot, a);

  CHECK(carq::qte_contrast(s, 0.5, 0.5, carq::QteMethod::Sqr) == 0.0);
  double direct = carq::qte_sqr(s, 0.25).value - carq::qte_sqr(s, 0.75).value;
  CHECK(carq::qte_contrast(s, 0.25, 0.75, carq::QteMethod::Sqr) == direct);
  double ipw_direct = carq::qte_ipw(s, 0.25).value - carq::qte_ipw(s, 0.75).value;
  CHECK(carq::qte_contrast(s, 0.25, 0.75, carq::QteMethod::Ipw) == ipw_direct);
  double sfe_direct = carq::qte_sfe(s, 0.25).value - carq::qte_sfe(s, 0.75).value;
  CHECK(carq::qte_contrast(s, 0.25, 0.75, carq::QteMethod::Sfe) == sfe_direct);
}

TEST_CASE("imbalance diagnostic") {
  auto balanced = two_arm({1, 2, 3}, {4, 5, 6});
  CHECK(carq::imbalance_diagnostic(balanced, 0.5) == 0.0);

  carq::Sample odd;
  odd.y.assign(7, 0.0);
  odd.a = {1, 1, 1, 0, 0, 0, 0};
  odd.s.assign(7, 0);
  CHECK(carq::imbalance_diagnostic(odd, 0.5) == Approx(0.5 / 7.0));

  carq::Sample all_treated;
  all_treated.y = {1, 2};
  all_treated.a = {1, 1};
  all_treated.s = {0, 0};
  CHECK(carq::imbalance_diagnostic(all_treated, 0.3) == Approx(0.7));

  carq::Sample empty;
  CHECK_THROWS_AS(carq::imbalance_diagnostic(empty, 0.5), carq::data_error);
}

TEST_CASE("qte estimators are location and scale equivariant") {
  carq::Rng rng(52);
  for (int k = 0; k < 40; ++k) {
    auto s = oracles::random_sample(rng, 2, 16);
    double tau = 0.2 + 0.6 * rng.uniform();
    double shift = 4.0 * (rng.uniform() - 0.5);
    double scale = 0.5 + 2.0 * rng.uniform();

    carq::Sample shifted = s, scaled = s;
    for (auto& v : shifted.y) v += shift;
    for (auto& v : scaled.y) v *= scale;

    for (auto method : {carq::QteMethod::Sqr, carq::QteMethod::Ipw, carq::QteMethod::Sfe}) {
      auto base = carq::qte(s, tau, method);
      auto sh = carq::qte(shifted, tau, method);
      CHECK(sh.value == Approx(base.value).margin(1e-9));
      if (method != carq::QteMethod::Sfe) {
        CHECK(sh.q1 == Approx(base.q1 + shift).margin(1e-9));
        CHECK(sh.q0 == Approx(base.q0 + shift).margin(1e-9));
      }
      auto sc = carq::qte(scaled, tau, method);
      CHECK(sc.value == Approx(scale * base.value).margin(1e-9));
    }
  }
}

#include "doctest.h"

#include <cmath>
#include <sstream>

#include "crl/concentration.hpp"
#include "crl/error.hpp"

using namespace crl;

TEST_CASE("log-log fit recovers an exact power law") {
    const std::vector<double> x{10, 100, 1000, 10000};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, -0.5));
    const auto f = fit_log_log(x, y);
    CHECK(f.slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(f.std_error < 1e-12);
    CHECK_THROWS_AS(fit_log_log(std::vector<double>{1, 2}, std::vector<double>{1, 0}), Error);
}

TEST_CASE("tau study on a single class is degenerate") {
    TauStudyConfig c;
    c.rho = {1.0};
    c.grid = {10, 100};
    c.trials = 10;
    const auto r = tau_consistency_study(c);
    CHECK(r.degenerate);
    CHECK_FALSE(r.fit);
    for (const auto& p : r.points) CHECK(p.mean_err == 0.0);
    CHECK(to_json(r)["slope"].is_null());
}

TEST_CASE("tau study slope on a long-tailed distribution is near -1/2") {
    TauStudyConfig c;
    c.rho = longtail_probs(10, 0.5, 0.7);
    const auto r = tau_consistency_study(c);
    REQUIRE(r.fit);
    MESSAGE("slope " << r.fit->slope << " +- " << r.fit->std_error);
    CHECK(r.fit->slope >= -0.65);
    CHECK(r.fit->slope <= -0.35);
    CHECK(to_json(r) == to_json(tau_consistency_study(c)));
}

TEST_CASE("tau study on uniform rho converges at rate 1/N") {
    // first-order term vanishes when the gradient of tau is constant on the simplex
    TauStudyConfig c;
    c.rho.assign(10, 0.1);
    const auto r = tau_consistency_study(c);
    REQUIRE(r.fit);
    CHECK(r.fit->slope == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("estimator rate study: constant representation has no deviation") {
    EstimatorStudyConfig c;
    c.population = balanced_two_class_population();
    c.num_reps = 1;
    c.grid = {20, 40};
    c.trials = 10;
    const auto r = estimator_rate_study(c);
    for (const auto& p : r.points) CHECK(p.mean_err < 1e-12);
}

TEST_CASE("estimator rate study: u_hl slope on a balanced 2-class population") {
    EstimatorStudyConfig c;
    c.population = balanced_two_class_population();
    c.trials = 30;
    const auto r = estimator_rate_study(c);
    REQUIRE(r.fit);
    MESSAGE("slope " << r.fit->slope << " +- " << r.fit->std_error);
    CHECK(r.fitted_on == "median");
    CHECK(r.fit->slope >= -0.65);
    CHECK(r.fit->slope <= -0.35);
}

TEST_CASE("u_n approaches u_hl at k = 1 on a balanced population") {
    EstimatorStudyConfig c;
    c.population = balanced_two_class_population();
    c.estimator = RateEstimator::UN;
    c.reference = RateReference::UHl;
    c.trials = 30;
    const auto r = estimator_rate_study(c);
    REQUIRE(r.fit);
    CHECK(r.fit->slope < 0);
    CHECK(r.points.back().median_err < r.points.front().median_err);
}

TEST_CASE("estimator study rejects out-of-scale configs") {
    EstimatorStudyConfig c;
    c.population = balanced_two_class_population();
    c.k = 4;
    CHECK_THROWS_AS(c.validate(), Error);
    c.k = 1;
    c.grid = {100, 50};
    CHECK_THROWS_AS(c.validate(), Error);
    c.grid = {100, 10000};
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_THROWS_AS(estimator_study_from_json(nlohmann::json{{"estimator", "u_bar"}}), Error);
    CHECK(estimator_study_from_json(nlohmann::json{{"k", 2}}).k == 2);
}

TEST_CASE("bound inequalities hold on random simplexes") {
    const int ks[] = {2, 5, 10};
    const auto r = bound_inequality_suite(ks, 1000, 7);
    CHECK(r.violations() == 0);
    for (const auto& c : r.checks) {
        CHECK(c.typical_draws == 1000);
        CHECK(c.general_draws == 1000);
        CHECK(c.typical_min_margin >= 0);
        CHECK(c.general_min_margin >= 0);
    }
    // single-class boundary: gamma_k = 0 and 1 - tau = 0
    const std::vector<double> one{1.0};
    CHECK(1.0 - collision_probability(one, 5) == 0.0);
    CHECK(one_minus_tau_floor(one, 5).general == 0.0);
}

TEST_CASE("rate csv has one row per grid point") {
    TauStudyConfig c;
    c.rho = {0.6, 0.4};
    c.grid = {10, 20, 40};
    c.trials = 10;
    std::ostringstream os;
    write_rate_csv(os, tau_consistency_study(c));
    const std::string s = os.str();
    CHECK(s.rfind("N,mean_err,median_err\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}

TEST_CASE("tau study config from json") {
    const auto c = tau_study_from_json({{"longtail", {{"R", 10}, {"rho_max", 0.5}, {"decay", 0.7}}}, {"k", 3}});
    CHECK(c.rho.size() == 10);
    CHECK(c.k == 3);
    CHECK_THROWS_AS(tau_study_from_json({{"rho", {0.5, 0.2}}}), Error);
    CHECK_THROWS_AS(tau_study_from_json({{"rho", {1.0}}, {"trials", 3}}), Error);
}

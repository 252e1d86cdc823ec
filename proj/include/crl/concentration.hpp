#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/population.hpp"

namespace crl {

/// Log-log least-squares fit, log(err) = intercept + slope log(N).
struct SlopeFit {
    double slope = 0.0;
    double std_error = 0.0;
    double intercept = 0.0;
};

/// Needs >= 2 points with positive x and y.
SlopeFit fit_log_log(std::span<const double> x, std::span<const double> y);

struct GridPoint {
    std::size_t n = 0;
    double mean_err = 0.0;
    double median_err = 0.0;
    std::size_t trials = 0;
};

struct RateStudyResult {
    std::string study;
    std::string fitted_on;  // "mean" or "median"
    std::vector<GridPoint> points;
    std::optional<SlopeFit> fit;  // absent when degenerate
    bool degenerate = false;      // some error statistic is identically 0
    std::optional<SlopeFit> mean_fit;
    std::optional<SlopeFit> median_fit;
};

void write_rate_csv(std::ostream& out, const RateStudyResult& r);
nlohmann::json to_json(const RateStudyResult& r);

struct TauStudyConfig {
    std::vector<double> rho;
    int k = 5;
    std::vector<std::size_t> grid{100, 1000, 10000, 100000};
    std::size_t trials = 200;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Multinomial class counts at each N; error |tau_hat - tau|; slope fitted on
/// the per-point mean error.
RateStudyResult tau_consistency_study(const TauStudyConfig& c);

enum class RateEstimator { UHl, UN };
enum class RateReference { Population, UHl };

struct EstimatorStudyConfig {
    DiscretePopulation population;
    int k = 1;
    std::vector<std::size_t> grid{100, 300, 1000, 3000};
    std::size_t trials = 20;
    std::size_t num_reps = 20;  // F; the zero representation is always one of them
    std::size_t rep_dim = 2;
    RateEstimator estimator = RateEstimator::UHl;
    /// Population: u_hl against L_phi, u_n against (L_Omega - tau L_Lambda)/(1 - tau).
    /// UHl: deviation from u_hl on the same dataset.
    RateReference reference = RateReference::Population;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Per N: sup over F fixed random linear representations of |U(f) - ref(f)|,
/// exact estimators via the aggregated route; slope fitted on medians.
RateStudyResult estimator_rate_study(const EstimatorStudyConfig& c);

/// Two classes of equal mass on a 4-point support in the plane.
DiscretePopulation balanced_two_class_population();

struct BoundCheck {
    int k = 0;
    std::size_t typical_draws = 0;
    std::size_t typical_violations = 0;
    std::size_t typical_rejections = 0;
    double typical_min_margin = 0.0;  // min of (1 - tau) - 1/e
    std::size_t general_draws = 0;
    std::size_t general_violations = 0;
    double general_min_margin = 0.0;  // min of (1 - tau) - gamma_k / 4
};

struct BoundSuiteResult {
    std::vector<BoundCheck> checks;
    std::size_t violations() const;
};

/// Random simplexes (Dirichlet with random size and concentration); the 1/e
/// floor uses draws rejected until every rho_r <= 1/(k+1).
BoundSuiteResult bound_inequality_suite(std::span<const int> ks, std::size_t draws, std::uint64_t seed);
nlohmann::json to_json(const BoundSuiteResult& r);

TauStudyConfig tau_study_from_json(const nlohmann::json& j);
EstimatorStudyConfig estimator_study_from_json(const nlohmann::json& j);

}  // namespace crl

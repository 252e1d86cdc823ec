#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/dataset.hpp"
#include "crl/losses.hpp"
#include "crl/rng.hpp"
#include "crl/tuples.hpp"

namespace crl {

/// Finite population z_1..z_K with values h and weights w.
struct WeightedPopulation {
    std::vector<double> h;
    std::vector<double> w;

    /// A^w_K(h) = sum_j w_j h_j.
    double total() const;
    /// Importance-sampled estimate (1/M) sum w(z)/q(z) h(z) with z ~ q.
    double subsampled(std::span<const double> q, std::size_t m, Philox& g) const;
};

enum class Algorithm { Alg1, Alg2 };
/// How a collided Omega tuple is charged in the large-class branch of Alg2:
/// by j/3 (j = number of class-r negatives) or by the indicator j >= 1.
enum class CollisionConvention { Multiplicity, Indicator };
/// Auto applies the small-class test; AllLarge sends every class to the
/// collision-allowed branch.
enum class BranchRule { Auto, AllLarge };

struct SamplingPlan {
    Algorithm algorithm = Algorithm::Alg1;
    int k = 1;
    std::size_t m = 1;
    std::uint64_t seed = 0;
    CollisionConvention collision = CollisionConvention::Multiplicity;
    BranchRule branch = BranchRule::Auto;
};

nlohmann::json to_json(const SamplingPlan& p);
SamplingPlan sampling_plan_from_json(const nlohmann::json& j);
const char* to_string(Algorithm a) noexcept;

/// N_r <= 3 tau_hat (N - 2)/k + 2.
bool small_class_flag(std::size_t n_r, std::size_t n, int k, double tau_hat);

/// Uniform tuple of a Theta, Omega or Lambda family without enumeration.
ContrastiveTuple sample_tuple_uniform(const LabeledDataset& ds, const FamilySpec& family, Philox& g);

/// Per-class sampling law of a plan.
struct ClassBranch {
    double prob = 0.0;  // class selection probability
    FamilyKind family = FamilyKind::Theta;
    bool active = false;  // false: the class contributes 0 when drawn
    bool small = false;
    double base_weight = 1.0;        // weight of a collision-free tuple
    double collision_penalty = 0.0;  // subtracted per unit of the collision charge
};

struct PlanLaw {
    SamplingPlan plan;
    std::vector<ClassBranch> classes;
    double tau_hat = 0.0;
    double excluded_mass = 0.0;  // Alg1: mass of classes with empty Theta_r
};

PlanLaw plan_law(const LabeledDataset& ds, const SamplingPlan& plan);

struct Draw {
    std::size_t cls = 0;
    std::optional<ContrastiveTuple> tuple;  // empty when the class contributes 0
    double weight = 0.0;
};

/// Importance weight of tuple t drawn under class r's branch.
double draw_weight(const LabeledDataset& ds, const PlanLaw& law, std::size_t r,
                   const ContrastiveTuple& t);

/// The plan's M draws; identical for identical (dataset, plan).
std::vector<Draw> draw_plan(const LabeledDataset& ds, const PlanLaw& law);

/// (1/M) sum_j w_j l(t_j) on precomputed embeddings.
double plan_estimate(const RowMatrix& emb, const LossSpec& spec, std::span<const Draw> draws);

struct ErmResult {
    double value = 0.0;
    double excluded_mass = 0.0;
};

ErmResult algorithm1_erm(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                         std::size_t m, std::uint64_t seed);
double algorithm2_erm(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                      std::size_t m, std::uint64_t seed,
                      CollisionConvention collision = CollisionConvention::Multiplicity,
                      BranchRule branch = BranchRule::Auto);
double run_plan(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                const SamplingPlan& plan);

/// Exact expectation of one draw's weighted loss over the plan's law.
double exhaustive_plan_expectation(const LabeledDataset& ds, const Representation& rep,
                                   const LossSpec& spec, const SamplingPlan& plan,
                                   double cap = 5e6);

}  // namespace crl

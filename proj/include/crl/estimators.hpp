#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/aggregate.hpp"
#include "crl/dataset.hpp"
#include "crl/losses.hpp"
#include "crl/tuples.hpp"

namespace crl {

enum class EstimatorRoute { Auto, Enumerate, Aggregate };

struct EstimatorOptions {
    EstimatorRoute route = EstimatorRoute::Auto;
    /// Largest total family size the enumeration route will walk.
    double enumeration_cap = 5e6;
    /// Largest aggregate kernel table the Auto route will build.
    double aggregate_cap = 2e5;
};

/// One class term of a class-weighted family average.
struct ClassTerm {
    std::size_t cls = 0;
    double weight = 0.0;
    double mean = 0.0;  // 0 for an empty family
    u128 family_size = 0;
};

struct FamilyEstimate {
    FamilyKind kind = FamilyKind::Theta;
    double value = 0.0;  // sum_r weight_r * mean_r
    std::vector<ClassTerm> terms;
};

struct EstimatorReport {
    std::string estimator;
    double value = 0.0;
    std::optional<double> tau_hat;
    std::optional<FamilyEstimate> theta, omega, lambda;
    std::string route;
    // u_bar only
    std::optional<std::size_t> permutations;
    std::optional<std::size_t> skipped_permutations;
    std::optional<double> std_error;
    double wall_time = 0.0;

    /// (omega - tau lambda)/(1 - tau) recomputed from the components.
    double recombined() const;
};

nlohmann::json to_json(const EstimatorReport& r, bool include_timing = false);

struct SplitEstimate {
    FamilyKind kind = FamilyKind::OmegaSplit;
    std::size_t cut = 0;
    std::vector<std::size_t> counts;   // n_r^pi or m_r^pi
    std::vector<double> weights;       // omega_r^pi or lambda_r^pi
    std::vector<double> class_means;
    double value = 0.0;
};

double tau_hat(const ClassStats& stats, int k);

namespace fault {
/// Mutation hook for the verify command: negates every tau_hat.
void set_tau_hat_sign_flip(bool on) noexcept;
bool tau_hat_sign_flip() noexcept;
}  // namespace fault

/// Precomputed embeddings and (optionally) value groups shared by repeated
/// estimator calls on the same (dataset, representation).
class EstimatorContext {
public:
    EstimatorContext(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                     EstimatorOptions opts = {});

    const LabeledDataset& dataset() const noexcept { return *ds_; }
    const LossSpec& spec() const noexcept { return spec_; }
    const RowMatrix& embeddings() const noexcept { return emb_; }
    bool aggregated() const noexcept { return agg_.has_value(); }
    std::string route_name() const { return aggregated() ? "aggregate" : "enumerate"; }

    /// Class-weighted (rho_hat) average over Theta_r, Omega_r or Lambda_r.
    FamilyEstimate family(FamilyKind kind) const;
    /// Mean over one class's family (0 when empty) and the family size.
    std::pair<double, u128> class_family_mean(const FamilySpec& spec) const;

    SplitEstimate split(FamilyKind kind, std::span<const std::size_t> perm,
                        std::optional<std::size_t> cut) const;

private:
    const LabeledDataset* ds_;
    LossSpec spec_;
    EstimatorOptions opts_;
    RowMatrix emb_;
    std::optional<ValueGroups> groups_;
    std::optional<AggregateKernel> agg_;
};

EstimatorReport u_hl(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                     const EstimatorOptions& opts = {});
double u_omega(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
               const EstimatorOptions& opts = {});
double u_lambda(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                const EstimatorOptions& opts = {});
EstimatorReport u_n(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                    const EstimatorOptions& opts = {});
EstimatorReport u_hl(const EstimatorContext& ctx);
EstimatorReport u_n(const EstimatorContext& ctx);

/// Split estimators on the dataset reordered by `perm`; the default cut is
/// n = 2 floor(N/(k+2)) (Omega) or m = 3 floor(N/(k+2)) (Lambda).
SplitEstimate split_estimate_omega(const LabeledDataset& ds, const Representation& rep,
                                   const LossSpec& spec, std::span<const std::size_t> perm,
                                   std::optional<std::size_t> cut = std::nullopt,
                                   const EstimatorOptions& opts = {});
SplitEstimate split_estimate_lambda(const LabeledDataset& ds, const Representation& rep,
                                    const LossSpec& spec, std::span<const std::size_t> perm,
                                    std::optional<std::size_t> cut = std::nullopt,
                                    const EstimatorOptions& opts = {});

struct UBarMode {
    bool exhaustive = true;
    std::size_t permutations = 0;  // sampled mode
    std::uint64_t seed = 0;

    static UBarMode all() { return {}; }
    static UBarMode sampled(std::size_t t, std::uint64_t seed) { return {false, t, seed}; }
};

/// Average of split estimates over permutations; permutations whose split
/// families are all empty are skipped and counted.
EstimatorReport u_bar(const EstimatorContext& ctx, const UBarMode& mode);
EstimatorReport u_bar(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                      const UBarMode& mode, const EstimatorOptions& opts = {});

}  // namespace crl

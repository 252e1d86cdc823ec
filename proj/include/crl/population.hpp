#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"

#include "crl/dataset.hpp"
#include "crl/losses.hpp"

namespace crl {

/// Finite-support mixture: class r draws support point j with probability
/// conditionals[r][j].
struct DiscretePopulation {
    std::vector<std::vector<double>> support;
    std::vector<double> class_probs;
    std::vector<std::vector<double>> conditionals;

    std::size_t num_classes() const noexcept { return class_probs.size(); }
    std::size_t support_size() const noexcept { return support.size(); }
    std::size_t dim() const noexcept { return support.empty() ? 0 : support.front().size(); }

    /// Throws InvalidArgument unless rows are stochastic within 1e-12.
    void validate() const;
    /// Full mixture sum_r rho_r D_r over the support.
    std::vector<double> mixture() const;
};

struct GaussianMixtureSpec {
    std::vector<std::vector<double>> means;
    std::vector<double> variances;
    std::vector<double> class_probs;

    std::size_t num_classes() const noexcept { return class_probs.size(); }
    std::size_t dim() const noexcept { return means.empty() ? 0 : means.front().size(); }
    void validate() const;
};

using PopulationSpec = std::variant<GaussianMixtureSpec, DiscretePopulation>;

struct PopulationRiskTriple {
    std::optional<double> l_phi;  // absent when tau = 1 (no valid negatives)
    double l_omega = 0.0;
    double l_lambda = 0.0;
    double tau = 0.0;

    /// (l_omega - tau l_lambda) / (1 - tau); DebiasUndefined when tau = 1.
    double debiased() const;
    /// |l_phi - debiased()|.
    double identity_gap() const;
};

/// tau = 1 - sum_r rho_r (1 - rho_r)^k.
double collision_probability(std::span<const double> rho, int k);

/// (1/(1-rho_r)) sum_{q != r} rho_q D_q.
std::vector<double> negative_mixture_excluding(const DiscretePopulation& pop, std::size_t r);

/// Exact risks by nested summation (class, anchor, positive, negatives),
/// compensated accumulation. Cost R |X|^(k+2).
PopulationRiskTriple population_risks(const DiscretePopulation& pop, const Representation& rep,
                                      const LossSpec& spec);

/// Collision-free class risks L_phi^r (absent for classes with rho_r in {0, 1}).
std::vector<std::optional<double>> class_risks(const DiscretePopulation& pop,
                                               const Representation& rep, const LossSpec& spec);

LabeledDataset sample_dataset(const GaussianMixtureSpec& spec, std::size_t n, std::uint64_t seed);
LabeledDataset sample_dataset(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed);
LabeledDataset sample_dataset(const PopulationSpec& spec, std::size_t n, std::uint64_t seed);

/// rho_1 = rho_max; minor classes proportional to decay^(r-1), renormalized to
/// 1 - rho_max; returned in descending order.
std::vector<double> longtail_probs(std::size_t r, double rho_max, double decay);

struct TauFloors {
    std::optional<double> typical;  // 1/e when all rho_r <= 1/(k+1)
    double general = 0.0;           // gamma_k / 4
};

TauFloors one_minus_tau_floor(std::span<const double> rho, int k);

/// gamma_k = sum_r rho_r 1{rho_r <= 1/k}.
double small_probability_mass(std::span<const double> rho, double k);

PopulationSpec population_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscretePopulation& pop);
nlohmann::json to_json(const GaussianMixtureSpec& spec);

}  // namespace crl

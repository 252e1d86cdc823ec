#include "crl/population.hpp"

#include <algorithm>
#include <cmath>

#include "crl/error.hpp"
#include "crl/numeric.hpp"
#include "crl/rng.hpp"

namespace crl {

namespace {

void check_simplex(std::span<const double> p, const char* what) {
    require(!p.empty(), ErrorKind::InvalidArgument, std::string(what) + " is empty");
    double s = 0;
    for (double v : p) {
        require(std::isfinite(v) && v >= 0, ErrorKind::InvalidArgument,
                std::string(what) + " has a negative or non-finite entry");
        s += v;
    }
    require(std::abs(s - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
            std::string(what) + " does not sum to 1");
}

std::vector<double> cdf_of(std::span<const double> p) {
    std::vector<double> c(p.size());
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) c[i] = (s += p[i]);
    return c;
}

// Calls fn(indices, prob) for every element of support^len with product prob.
template <class F>
void for_each_product(std::size_t support, std::size_t len, std::span<const double> probs, F&& fn) {
    std::vector<std::size_t> idx(len, 0);
    for (;;) {
        double p = 1.0;
        for (std::size_t i : idx) p *= probs[i];
        if (p != 0.0) fn(std::span<const std::size_t>(idx), p);
        std::size_t pos = 0;
        while (pos < len && ++idx[pos] == support) idx[pos++] = 0;
        if (pos == len) return;
    }
}

}  // namespace

void DiscretePopulation::validate() const {
    require(!support.empty(), ErrorKind::InvalidArgument, "population support is empty");
    for (const auto& x : support)
        require(x.size() == support.front().size(), ErrorKind::InvalidArgument,
                "support vectors must share a dimension");
    check_simplex(class_probs, "class_probs");
    require(conditionals.size() == class_probs.size(), ErrorKind::InvalidArgument,
            "need one conditional row per class");
    for (const auto& row : conditionals) {
        require(row.size() == support.size(), ErrorKind::InvalidArgument,
                "conditional row length != support size");
        check_simplex(row, "conditional row");
    }
}

std::vector<double> DiscretePopulation::mixture() const {
    std::vector<double> m(support.size(), 0.0);
    for (std::size_t r = 0; r < class_probs.size(); ++r)
        for (std::size_t j = 0; j < support.size(); ++j) m[j] += class_probs[r] * conditionals[r][j];
    return m;
}

void GaussianMixtureSpec::validate() const {
    check_simplex(class_probs, "class_probs");
    require(means.size() == class_probs.size() && variances.size() == class_probs.size(),
            ErrorKind::InvalidArgument, "need one mean and variance per class");
    for (const auto& m : means)
        require(m.size() == means.front().size() && !m.empty(), ErrorKind::InvalidArgument,
                "means must share a positive dimension");
    for (double v : variances)
        require(v > 0 && std::isfinite(v), ErrorKind::InvalidArgument, "variances must be positive");
}

double PopulationRiskTriple::debiased() const {
    require(tau < 1.0, ErrorKind::DebiasUndefined, "debias undefined: tau = 1");
    return (l_omega - tau * l_lambda) / (1.0 - tau);
}

double PopulationRiskTriple::identity_gap() const {
    require(l_phi.has_value(), ErrorKind::DebiasUndefined, "debias undefined: tau = 1");
    return std::abs(*l_phi - debiased());
}

double collision_probability(std::span<const double> rho, int k) {
    require(k >= 1, ErrorKind::InvalidArgument, "collision_probability requires k >= 1");
    CompensatedSum<double> s;
    for (double p : rho) s += p * std::pow(1.0 - p, k);
    return std::clamp(1.0 - s.value(), 0.0, 1.0);
}

std::vector<double> negative_mixture_excluding(const DiscretePopulation& pop, std::size_t r) {
    require(r < pop.num_classes(), ErrorKind::InvalidArgument, "class index out of range");
    const double rest = 1.0 - pop.class_probs[r];
    require(rest > 0.0, ErrorKind::DegenerateClass,
            "class " + std::to_string(r) + " has probability 1: no valid negatives");
    std::vector<double> m(pop.support_size(), 0.0);
    for (std::size_t q = 0; q < pop.num_classes(); ++q) {
        if (q == r) continue;
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += pop.class_probs[q] * pop.conditionals[q][j];
    }
    for (auto& v : m) v /= rest;
    return m;
}

namespace {

RowMatrix support_embeddings(const DiscretePopulation& pop, const Representation& rep) {
    require(pop.dim() == rep.input_dim(), ErrorKind::InvalidArgument,
            "population dimension does not match representation input");
    RowMatrix x(static_cast<Eigen::Index>(pop.support_size()), static_cast<Eigen::Index>(pop.dim()));
    for (std::size_t i = 0; i < pop.support_size(); ++i)
        for (std::size_t j = 0; j < pop.dim(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pop.support[i][j];
    return rep.forward_batch(x);
}

// E_{X,X+ ~ D_r^2, negatives ~ neg^k}[l]
double pair_risk(const RowMatrix& emb, std::span<const double> cond, std::span<const double> neg,
                 const LossSpec& spec) {
    const std::size_t x = cond.size();
    CompensatedSum<double> acc;
    ContrastiveTuple t;
    t.negatives.resize(static_cast<std::size_t>(spec.k));
    for (std::size_t a = 0; a < x; ++a) {
        if (cond[a] == 0) continue;
        for (std::size_t p = 0; p < x; ++p) {
            if (cond[p] == 0) continue;
            const double w = cond[a] * cond[p];
            t.anchor = a;
            t.positive = p;
            for_each_product(x, t.negatives.size(), neg, [&](std::span<const std::size_t> idx, double q) {
                std::copy(idx.begin(), idx.end(), t.negatives.begin());
                acc += w * q * tuple_kernel(emb, t, spec);
            });
        }
    }
    return acc.value();
}

// E_{X,X+,Xbar ~ D_r^3, k-1 negatives ~ mix^(k-1)}[l]
double triple_risk(const RowMatrix& emb, std::span<const double> cond,
                   std::span<const double> mix, const LossSpec& spec) {
    const std::size_t x = cond.size();
    CompensatedSum<double> acc;
    ContrastiveTuple t;
    t.negatives.resize(static_cast<std::size_t>(spec.k - 1));
    for (std::size_t a = 0; a < x; ++a) {
        if (cond[a] == 0) continue;
        for (std::size_t p = 0; p < x; ++p) {
            if (cond[p] == 0) continue;
            for (std::size_t c = 0; c < x; ++c) {
                if (cond[c] == 0) continue;
                const double w = cond[a] * cond[p] * cond[c];
                t.anchor = a;
                t.positive = p;
                t.designated = c;
                for_each_product(x, t.negatives.size(), mix,
                                 [&](std::span<const std::size_t> idx, double q) {
                                     std::copy(idx.begin(), idx.end(), t.negatives.begin());
                                     acc += w * q * tuple_kernel(emb, t, spec);
                                 });
            }
        }
    }
    return acc.value();
}

}  // namespace

std::vector<std::optional<double>> class_risks(const DiscretePopulation& pop,
                                               const Representation& rep, const LossSpec& spec) {
    pop.validate();
    require(spec.k >= 1, ErrorKind::InvalidArgument, "k >= 1 required");
    const RowMatrix emb = support_embeddings(pop, rep);
    std::vector<std::optional<double>> out(pop.num_classes());
    for (std::size_t r = 0; r < pop.num_classes(); ++r) {
        const double rho = pop.class_probs[r];
        if (rho == 0.0 || rho >= 1.0) continue;
        out[r] = pair_risk(emb, pop.conditionals[r], negative_mixture_excluding(pop, r), spec);
    }
    return out;
}

PopulationRiskTriple population_risks(const DiscretePopulation& pop, const Representation& rep,
                                      const LossSpec& spec) {
    pop.validate();
    require(spec.k >= 1, ErrorKind::InvalidArgument, "k >= 1 required");
    const RowMatrix emb = support_embeddings(pop, rep);
    const std::vector<double> mix = pop.mixture();
    PopulationRiskTriple out;
    out.tau = collision_probability(pop.class_probs, spec.k);
    CompensatedSum<double> phi, omega, lambda;
    bool phi_defined = true;
    for (std::size_t r = 0; r < pop.num_classes(); ++r) {
        const double rho = pop.class_probs[r];
        if (rho == 0.0) continue;
        const auto& cond = pop.conditionals[r];
        omega += rho * pair_risk(emb, cond, mix, spec);
        lambda += rho * triple_risk(emb, cond, mix, spec);
        if (rho >= 1.0)
            phi_defined = false;
        else
            phi += rho * pair_risk(emb, cond, negative_mixture_excluding(pop, r), spec);
    }
    out.l_omega = omega.value();
    out.l_lambda = lambda.value();
    if (phi_defined && out.tau < 1.0) out.l_phi = phi.value();
    return out;
}

LabeledDataset sample_dataset(const GaussianMixtureSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    require(n >= 1, ErrorKind::InvalidArgument, "sample_dataset requires N >= 1");
    Philox g(seed, 0x5a);
    const auto cdf = cdf_of(spec.class_probs);
    std::vector<LabeledSample> samples(n);
    for (auto& s : samples) {
        const std::size_t r = draw_from_cdf(g, cdf);
        const double sd = std::sqrt(spec.variances[r]);
        s.label = static_cast<long>(r) + 1;
        s.features.resize(spec.dim());
        for (std::size_t j = 0; j < spec.dim(); ++j)
            s.features[j] = spec.means[r][j] + sd * standard_normal(g);
    }
    return LabeledDataset::build(std::move(samples));
}

LabeledDataset sample_dataset(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed) {
    pop.validate();
    require(n >= 1, ErrorKind::InvalidArgument, "sample_dataset requires N >= 1");
    Philox g(seed, 0x5b);
    const auto cdf = cdf_of(pop.class_probs);
    std::vector<std::vector<double>> cond_cdf;
    for (const auto& row : pop.conditionals) cond_cdf.push_back(cdf_of(row));
    std::vector<LabeledSample> samples(n);
    for (auto& s : samples) {
        const std::size_t r = draw_from_cdf(g, cdf);
        s.label = static_cast<long>(r) + 1;
        s.features = pop.support[draw_from_cdf(g, cond_cdf[r])];
    }
    return LabeledDataset::build(std::move(samples));
}

LabeledDataset sample_dataset(const PopulationSpec& spec, std::size_t n, std::uint64_t seed) {
    return std::visit([&](const auto& s) { return sample_dataset(s, n, seed); }, spec);
}

std::vector<double> longtail_probs(std::size_t r, double rho_max, double decay) {
    require(r >= 2, ErrorKind::InvalidArgument, "longtail_probs requires R >= 2");
    require(rho_max > 0 && rho_max < 1, ErrorKind::InvalidArgument, "rho_max must be in (0,1)");
    require(decay > 0 && decay < 1, ErrorKind::InvalidArgument, "decay must be in (0,1)");
    std::vector<double> out{rho_max};
    double norm = 0, w = 1;
    for (std::size_t i = 1; i < r; ++i, w *= decay) norm += w;
    w = 1;
    for (std::size_t i = 1; i < r; ++i, w *= decay) out.push_back((1.0 - rho_max) * w / norm);
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

double small_probability_mass(std::span<const double> rho, double k) {
    double m = 0;
    for (double p : rho)
        if (p <= 1.0 / k) m += p;
    return m;
}

TauFloors one_minus_tau_floor(std::span<const double> rho, int k) {
    require(k >= 2, ErrorKind::InvalidArgument, "tau floors require k >= 2");
    TauFloors f;
    const double cap = 1.0 / (static_cast<double>(k) + 1.0);
    if (std::all_of(rho.begin(), rho.end(), [cap](double p) { return p <= cap; }))
        f.typical = std::exp(-1.0);
    f.general = small_probability_mass(rho, k) / 4.0;
    return f;
}

PopulationSpec population_from_json(const nlohmann::json& j) {
    try {
        if (j.contains("support")) {
            DiscretePopulation pop;
            pop.support = j.at("support").get<std::vector<std::vector<double>>>();
            pop.class_probs = j.at("class_probs").get<std::vector<double>>();
            pop.conditionals = j.at("conditionals").get<std::vector<std::vector<double>>>();
            pop.validate();
            return pop;
        }
        GaussianMixtureSpec g;
        g.class_probs = j.at("class_probs").get<std::vector<double>>();
        g.means = j.at("means").get<std::vector<std::vector<double>>>();
        const auto& var = j.at("variances");
        if (var.is_number())
            g.variances.assign(g.class_probs.size(), var.get<double>());
        else
            g.variances = var.get<std::vector<double>>();
        if (j.contains("R"))
            require(j.at("R").get<std::size_t>() == g.class_probs.size(), ErrorKind::Config,
                    "R does not match class_probs length");
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("population spec: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("population spec: ") + e.what());
    }
}

nlohmann::json to_json(const DiscretePopulation& pop) {
    return {{"support", pop.support}, {"class_probs", pop.class_probs},
            {"conditionals", pop.conditionals}};
}

nlohmann::json to_json(const GaussianMixtureSpec& spec) {
    return {{"R", spec.num_classes()}, {"class_probs", spec.class_probs},
            {"means", spec.means}, {"variances", spec.variances}};
}

}  // namespace crl

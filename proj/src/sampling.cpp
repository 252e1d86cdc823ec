#include "crl/sampling.hpp"

#include <array>
#include <cmath>

#include "crl/error.hpp"
#include "crl/estimators.hpp"
#include "crl/numeric.hpp"

namespace crl {

double WeightedPopulation::total() const {
    require(h.size() == w.size(), ErrorKind::InvalidArgument, "h and w lengths differ");
    CompensatedSum<double> s;
    for (std::size_t j = 0; j < h.size(); ++j) s += w[j] * h[j];
    return s.value();
}

double WeightedPopulation::subsampled(std::span<const double> q, std::size_t m, Philox& g) const {
    require(q.size() == h.size() && h.size() == w.size() && !h.empty(), ErrorKind::InvalidArgument,
            "population and proposal lengths differ");
    require(m >= 1, ErrorKind::InvalidArgument, "M >= 1 required");
    std::vector<double> cdf(q.size());
    double c = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        require(q[j] > 0 || w[j] * h[j] == 0, ErrorKind::InvalidArgument,
                "proposal must cover the support of w h");
        cdf[j] = (c += q[j]);
    }
    CompensatedSum<double> s;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = draw_from_cdf(g, cdf);
        s += w[j] / (q[j] / c) * h[j];
    }
    return s.value() / static_cast<double>(m);
}

const char* to_string(Algorithm a) noexcept { return a == Algorithm::Alg1 ? "alg1" : "alg2"; }

nlohmann::json to_json(const SamplingPlan& p) {
    return {{"algorithm", to_string(p.algorithm)},
            {"k", p.k},
            {"M", p.m},
            {"seed", p.seed},
            {"collision", p.collision == CollisionConvention::Multiplicity ? "multiplicity" : "indicator"},
            {"branch", p.branch == BranchRule::Auto ? "auto" : "all_large"}};
}

SamplingPlan sampling_plan_from_json(const nlohmann::json& j) {
    SamplingPlan p;
    try {
        const std::string alg = j.at("algorithm").get<std::string>();
        require(alg == "alg1" || alg == "alg2", ErrorKind::Config, "algorithm must be alg1 or alg2");
        p.algorithm = alg == "alg1" ? Algorithm::Alg1 : Algorithm::Alg2;
        p.k = j.at("k").get<int>();
        p.m = j.at("M").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        const std::string col = j.value("collision", std::string("multiplicity"));
        require(col == "multiplicity" || col == "indicator", ErrorKind::Config,
                "collision must be multiplicity or indicator");
        p.collision = col == "multiplicity" ? CollisionConvention::Multiplicity : CollisionConvention::Indicator;
        const std::string br = j.value("branch", std::string("auto"));
        require(br == "auto" || br == "all_large", ErrorKind::Config, "branch must be auto or all_large");
        p.branch = br == "auto" ? BranchRule::Auto : BranchRule::AllLarge;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("sampling plan: ") + e.what());
    }
    require(p.k >= 1 && p.m >= 1, ErrorKind::Config, "sampling plan needs k >= 1 and M >= 1");
    return p;
}

bool small_class_flag(std::size_t n_r, std::size_t n, int k, double tau_hat) {
    require(n >= 3 && k >= 1, ErrorKind::InvalidArgument, "small_class_flag requires N >= 3, k >= 1");
    return static_cast<double>(n_r) <= 3.0 * tau_hat * static_cast<double>(n - 2) / k + 2.0;
}

namespace {

// i-th element of [0, n) minus the ascending `excl` list.
std::size_t skip_excluded(std::size_t i, std::span<const std::size_t> excl) {
    for (std::size_t e : excl)
        if (i >= e) ++i;
    return i;
}

class TupleSampler {
public:
    explicit TupleSampler(const LabeledDataset& ds) : ds_(&ds), others_(ds.num_classes()) {}

    ContrastiveTuple draw(FamilyKind kind, std::size_t r, int k, Philox& g) {
        const auto members = ds_->members(r);
        const std::size_t n = ds_->size();
        const bool triple = kind == FamilyKind::Lambda;
        const std::size_t gsize = triple ? 3 : 2;
        const std::size_t s = static_cast<std::size_t>(k) - (triple ? 1 : 0);
        const std::size_t pool = kind == FamilyKind::Theta ? n - members.size() : n - gsize;
        require(members.size() >= gsize && pool >= s, ErrorKind::EmptyFamily,
                std::string("cannot sample from an empty ") + to_string(kind) + " family");

        ContrastiveTuple t;
        std::array<std::size_t, 3> grp{};
        const auto gi = sample_subset(g, members.size(), gsize);
        for (std::size_t i = 0; i < gsize; ++i) grp[i] = members[gi[i]];
        t.anchor = grp[0];
        t.positive = grp[1];
        if (triple) t.designated = grp[2];
        const auto ni = sample_subset(g, pool, s);
        t.negatives.resize(s);
        if (kind == FamilyKind::Theta) {
            const auto& o = others(r);
            for (std::size_t i = 0; i < s; ++i) t.negatives[i] = o[ni[i]];
        } else {
            const std::span<const std::size_t> excl(grp.data(), gsize);
            for (std::size_t i = 0; i < s; ++i) t.negatives[i] = skip_excluded(ni[i], excl);
        }
        return t;
    }

private:
    const std::vector<std::size_t>& others(std::size_t r) {
        auto& o = others_[r];
        if (o.empty())
            for (std::size_t i = 0; i < ds_->size(); ++i)
                if (ds_->label(i) != r) o.push_back(i);
        return o;
    }

    const LabeledDataset* ds_;
    std::vector<std::vector<std::size_t>> others_;
};

}  // namespace

ContrastiveTuple sample_tuple_uniform(const LabeledDataset& ds, const FamilySpec& family, Philox& g) {
    require(family.kind == FamilyKind::Theta || family.kind == FamilyKind::Omega ||
                family.kind == FamilyKind::Lambda,
            ErrorKind::InvalidArgument, "sample_tuple_uniform takes Theta, Omega or Lambda");
    require(family.cls < ds.num_classes() && family.k >= 1, ErrorKind::InvalidArgument,
            "invalid family spec");
    TupleSampler s(ds);
    return s.draw(family.kind, family.cls, family.k, g);
}

PlanLaw plan_law(const LabeledDataset& ds, const SamplingPlan& plan) {
    require(plan.k >= 1 && plan.m >= 1, ErrorKind::InvalidArgument, "plan needs k >= 1 and M >= 1");
    PlanLaw law;
    law.plan = plan;
    const std::size_t n = ds.size();
    const auto k = static_cast<std::size_t>(plan.k);
    const ClassStats stats = ds.stats();
    law.classes.resize(ds.num_classes());
    law.tau_hat = tau_hat(stats, plan.k);

    if (plan.algorithm == Algorithm::Alg1) {
        double valid = 0;
        for (std::size_t r = 0; r < ds.num_classes(); ++r) {
            const std::size_t nr = ds.class_count(r);
            if (nr >= 2 && n - nr >= k) {
                law.classes[r].active = true;
                valid += stats.probs[r];
            }
        }
        require(valid > 0, ErrorKind::EmptyFamily, "no class has a non-empty Theta family");
        law.excluded_mass = std::max(0.0, 1.0 - valid);
        for (std::size_t r = 0; r < ds.num_classes(); ++r) {
            auto& b = law.classes[r];
            b.family = FamilyKind::Theta;
            b.prob = b.active ? stats.probs[r] / valid : 0.0;
            b.base_weight = 1.0;
        }
        return law;
    }

    const double tau = law.tau_hat;
    require(tau < 1.0, ErrorKind::DebiasUndefined, "debias undefined: tau_hat = 1");
    require(n >= 3, ErrorKind::InvalidArgument, "Algorithm 2 requires N >= 3");
    for (std::size_t r = 0; r < ds.num_classes(); ++r) {
        auto& b = law.classes[r];
        const std::size_t nr = ds.class_count(r);
        b.prob = stats.probs[r];
        if (nr <= 1) continue;
        b.active = true;
        b.small = plan.branch == BranchRule::Auto && small_class_flag(nr, n, plan.k, tau);
        if (b.small) {
            require(n - nr >= k, ErrorKind::EmptyFamily,
                    "small class " + std::to_string(r) + " has an empty Theta family");
            b.family = FamilyKind::Theta;
            double prod = 1.0;
            for (std::size_t l = 0; l < k; ++l)
                prod *= static_cast<double>(n - l - nr) / static_cast<double>(n - l - 2);
            b.base_weight = prod / (1.0 - tau);
        } else {
            require(n - 2 >= k, ErrorKind::EmptyFamily,
                    "large class " + std::to_string(r) + " has an empty Omega family");
            b.family = FamilyKind::Omega;
            b.base_weight = 1.0 / (1.0 - tau);
            if (nr > 2)
                b.collision_penalty = 3.0 * tau * static_cast<double>(n - 2) /
                                      (plan.k * (1.0 - tau) * static_cast<double>(nr - 2));
        }
    }
    return law;
}

double draw_weight(const LabeledDataset& ds, const PlanLaw& law, std::size_t r,
                   const ContrastiveTuple& t) {
    const ClassBranch& b = law.classes.at(r);
    if (!b.active) return 0.0;
    if (b.family != FamilyKind::Omega || b.collision_penalty == 0.0) return b.base_weight;
    const std::size_t j = collision_count(ds, t, r);
    const double charge = law.plan.collision == CollisionConvention::Multiplicity
                              ? static_cast<double>(j) / 3.0
                              : (j >= 1 ? 1.0 : 0.0);
    return b.base_weight - b.collision_penalty * charge;
}

std::vector<Draw> draw_plan(const LabeledDataset& ds, const PlanLaw& law) {
    std::vector<double> cdf;
    double c = 0;
    for (const auto& b : law.classes) cdf.push_back(c += b.prob);
    Philox g(law.plan.seed, 0xa1);
    TupleSampler sampler(ds);
    std::vector<Draw> out;
    out.reserve(law.plan.m);
    for (std::size_t j = 0; j < law.plan.m; ++j) {
        Draw d;
        d.cls = draw_from_cdf(g, cdf);
        const ClassBranch& b = law.classes[d.cls];
        if (b.active) {
            d.tuple = sampler.draw(b.family, d.cls, law.plan.k, g);
            d.weight = draw_weight(ds, law, d.cls, *d.tuple);
        }
        out.push_back(std::move(d));
    }
    return out;
}

double plan_estimate(const RowMatrix& emb, const LossSpec& spec, std::span<const Draw> draws) {
    require(!draws.empty(), ErrorKind::InvalidArgument, "no draws");
    CompensatedSum<double> s;
    for (const auto& d : draws)
        if (d.tuple && d.weight != 0.0) s += d.weight * tuple_kernel(emb, *d.tuple, spec);
    return s.value() / static_cast<double>(draws.size());
}

double run_plan(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                const SamplingPlan& plan) {
    require(plan.k == spec.k, ErrorKind::InvalidArgument, "plan k differs from loss k");
    const PlanLaw law = plan_law(ds, plan);
    const auto draws = draw_plan(ds, law);
    return plan_estimate(embed(rep, ds), spec, draws);
}

ErmResult algorithm1_erm(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                         std::size_t m, std::uint64_t seed) {
    SamplingPlan plan{Algorithm::Alg1, spec.k, m, seed};
    const PlanLaw law = plan_law(ds, plan);
    return {plan_estimate(embed(rep, ds), spec, draw_plan(ds, law)), law.excluded_mass};
}

double algorithm2_erm(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                      std::size_t m, std::uint64_t seed, CollisionConvention collision,
                      BranchRule branch) {
    return run_plan(ds, rep, spec, SamplingPlan{Algorithm::Alg2, spec.k, m, seed, collision, branch});
}

double exhaustive_plan_expectation(const LabeledDataset& ds, const Representation& rep,
                                   const LossSpec& spec, const SamplingPlan& plan, double cap) {
    require(plan.k == spec.k, ErrorKind::InvalidArgument, "plan k differs from loss k");
    const PlanLaw law = plan_law(ds, plan);
    long double total = 0;
    for (std::size_t r = 0; r < law.classes.size(); ++r)
        if (law.classes[r].active && law.classes[r].prob > 0)
            total += to_ld(count(ds, FamilySpec{law.classes[r].family, r, spec.k, std::nullopt}));
    require(total <= cap, ErrorKind::CapExceeded, "plan support exceeds the enumeration cap");

    const RowMatrix emb = embed(rep, ds);
    CompensatedSum<double> acc;
    for (std::size_t r = 0; r < law.classes.size(); ++r) {
        const ClassBranch& b = law.classes[r];
        if (!b.active || b.prob == 0) continue;
        const FamilySpec fs{b.family, r, spec.k, std::nullopt};
        const double size = static_cast<double>(to_ld(count(ds, fs)));
        CompensatedSum<double> cls;
        for_each_tuple(ds, fs, [&](const ContrastiveTuple& t) {
            cls += draw_weight(ds, law, r, t) * tuple_kernel(emb, t, spec);
        });
        acc += b.prob * cls.value() / size;
    }
    return acc.value();
}

}  // namespace crl

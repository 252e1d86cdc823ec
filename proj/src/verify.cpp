#include "crl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "crl/concentration.hpp"
#include "crl/error.hpp"
#include "crl/estimators.hpp"
#include "crl/population.hpp"
#include "crl/rng.hpp"
#include "crl/sampling.hpp"
#include "crl/tuples.hpp"

namespace crl {

namespace {

constexpr std::size_t kMaxDumped = 20;

class Recorder {
public:
    explicit Recorder(SuiteResult& r) : r_(r) {}
    void check(bool ok, const std::function<nlohmann::json()>& dump) {
        ++r_.cases;
        if (ok) return;
        ++r_.failed;
        if (r_.failures.size() < kMaxDumped) r_.failures.push_back(dump());
    }

private:
    SuiteResult& r_;
};

bool close(double a, double b, double eps) { return std::abs(a - b) < eps * (1.0 + std::max(std::abs(a), std::abs(b))); }

// Non-increasing positive class counts summing to n, at most max_r parts.
std::vector<std::vector<std::size_t>> layouts(std::size_t n, std::size_t max_r) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur;
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t left, std::size_t cap) {
        if (left == 0) {
            out.push_back(cur);
            return;
        }
        if (cur.size() == max_r) return;
        for (std::size_t c = std::min(left, cap); c >= 1; --c) {
            cur.push_back(c);
            rec(left - c, c);
            cur.pop_back();
        }
    };
    rec(n, n);
    return out;
}

LabeledDataset layout_dataset(const std::vector<std::size_t>& counts, std::size_t dim, Philox& g) {
    std::vector<LabeledSample> s;
    for (std::size_t r = 0; r < counts.size(); ++r)
        for (std::size_t i = 0; i < counts[r]; ++i) {
            LabeledSample x;
            x.label = static_cast<long>(r) + 1;
            for (std::size_t j = 0; j < dim; ++j) x.features.push_back(standard_normal(g) + 0.5 * static_cast<double>(r));
            s.push_back(std::move(x));
        }
    const auto perm = random_permutation(g, s.size());
    std::vector<LabeledSample> shuffled;
    for (std::size_t i : perm) shuffled.push_back(s[i]);
    return LabeledDataset::build(std::move(shuffled));
}

DiscretePopulation random_population(Philox& g, bool identical_conditionals, std::optional<std::size_t> classes) {
    DiscretePopulation p;
    const std::size_t x = 1 + uniform_index(g, 6);
    const std::size_t r = classes ? *classes : 1 + uniform_index(g, 4);
    for (std::size_t i = 0; i < x; ++i) p.support.push_back({standard_normal(g), standard_normal(g)});
    p.class_probs = dirichlet(g, r, 1.0);
    const auto shared = dirichlet(g, x, 1.0);
    for (std::size_t c = 0; c < r; ++c) p.conditionals.push_back(identical_conditionals ? shared : dirichlet(g, x, 1.0));
    return p;
}

void suite_debias(SuiteResult& res, std::uint64_t seed) {
    Recorder rec(res);
    Philox g(seed, 0xdeb1);
    auto population_case = [&](const DiscretePopulation& pop, int k, const char* regime) {
        const auto rep = Representation::random_linear(2, 2, g());
        const auto risks = population_risks(pop, rep, {k, std::nullopt});
        if (!risks.l_phi || risks.tau >= 1.0) return;
        const double tau = risks.tau;
        const double debiased = (risks.l_omega - tau * risks.l_lambda) / (1.0 - tau);
        rec.check(std::abs(*risks.l_phi - debiased) < 1e-10, [&] {
            return nlohmann::json{{"regime", regime}, {"k", k}, {"l_phi", *risks.l_phi}, {"debiased", debiased},
                                  {"population", to_json(pop)}};
        });
    };
    // regimes where the identity is exact: shared class conditionals (any k),
    // or k = 1 with uniform class probabilities
    for (int i = 0; i < 100; ++i) {
        auto pop = random_population(g, true, std::nullopt);
        if (pop.num_classes() < 2) continue;
        population_case(pop, 1 + static_cast<int>(uniform_index(g, 3)), "identical_conditionals");
    }
    for (int i = 0; i < 50; ++i) {
        auto pop = random_population(g, false, 2 + uniform_index(g, 3));
        pop.class_probs.assign(pop.num_classes(), 1.0 / static_cast<double>(pop.num_classes()));
        population_case(pop, 1, "k1_uniform");
    }
    // estimator level: u_n recombines the family averages with the plug-in
    // collision probability computed from the class counts
    for (std::size_t n = 4; n <= 8; ++n)
        for (const auto& counts : layouts(n, 3)) {
            if (counts.size() < 2) continue;
            const auto ds = layout_dataset(counts, 2, g);
            const auto rep = Representation::random_linear(2, 2, g());
            for (int k = 1; k <= 2; ++k) {
                const LossSpec spec{k, std::nullopt};
                const EstimatorContext ctx(ds, rep, spec);
                double one_minus_tau = 0, uo = 0, ul = 0;
                for (std::size_t r = 0; r < ds.num_classes(); ++r) {
                    const double p = static_cast<double>(ds.class_count(r)) / static_cast<double>(n);
                    one_minus_tau += p * std::pow(1.0 - p, k);
                    uo += p * ctx.class_family_mean({FamilyKind::Omega, r, k, std::nullopt}).first;
                    ul += p * ctx.class_family_mean({FamilyKind::Lambda, r, k, std::nullopt}).first;
                }
                const double tau = 1.0 - one_minus_tau;
                const double expect = (uo - tau * ul) / (1.0 - tau);
                double got = 0;
                try {
                    got = u_n(ctx).value;
                } catch (const Error& e) {
                    if (e.kind() == ErrorKind::EmptyFamily) continue;  // nothing to recombine
                    got = std::nan("");
                }
                rec.check(close(got, expect, 1e-12), [&] {
                    return nlohmann::json{{"regime", "estimator"}, {"counts", counts}, {"k", k},
                                          {"u_n", got}, {"expected", expect}};
                });
            }
        }
}

void suite_counts(SuiteResult& res, std::uint64_t seed) {
    Recorder rec(res);
    Philox g(seed, 0xc0);
    for (std::size_t n = 3; n <= 10; ++n)
        for (const auto& counts : layouts(n, n)) {
            if (counts.size() < 2) continue;
            const auto ds = layout_dataset(counts, 1, g);
            const auto perm = random_permutation(g, n);
            for (int k = 1; k <= 3 && static_cast<std::size_t>(k) <= n - 2; ++k)
                for (std::size_t r = 0; r < ds.num_classes(); ++r) {
                    u128 sizes[2] = {0, 0};
                    for (FamilyKind kind : {FamilyKind::Theta, FamilyKind::Omega, FamilyKind::Lambda,
                                            FamilyKind::OmegaSplit, FamilyKind::LambdaSplit}) {
                        FamilySpec fs{kind, r, k, std::nullopt};
                        if (kind == FamilyKind::OmegaSplit || kind == FamilyKind::LambdaSplit) {
                            const std::size_t cut = kind == FamilyKind::OmegaSplit ? omega_split_size(n, k)
                                                                                   : lambda_split_size(n, k);
                            if (cut == 0 || cut >= n) continue;
                            fs.split = SplitSpec{perm, cut};
                        }
                        u128 enumerated = 0;
                        for_each_tuple(ds, fs, [&](const ContrastiveTuple&) { ++enumerated; });
                        const u128 closed = count(ds, fs);
                        if (kind == FamilyKind::Omega) sizes[0] = enumerated;
                        if (kind == FamilyKind::Lambda) sizes[1] = enumerated;
                        rec.check(enumerated == closed, [&] {
                            return nlohmann::json{{"counts", counts}, {"k", k}, {"class", r}, {"family", to_string(kind)},
                                                  {"enumerated", to_string(enumerated)}, {"closed_form", to_string(closed)}};
                        });
                    }
                    const std::size_t nr = ds.class_count(r);
                    if (nr >= 3) {
                        // |Omega_r| / |Lambda_r| = 3 (N - 2) / (k (N_r - 2)), cross-multiplied
                        const u128 lhs = sizes[0] * static_cast<u128>(k) * (nr - 2);
                        const u128 rhs = sizes[1] * static_cast<u128>(3) * (n - 2);
                        rec.check(lhs == rhs, [&] {
                            return nlohmann::json{{"counts", counts}, {"k", k}, {"class", r}, {"omega", to_string(sizes[0])},
                                                  {"lambda", to_string(sizes[1])}};
                        });
                    }
                }
        }
}

void suite_hypergeometric(SuiteResult& res, std::uint64_t seed) {
    Recorder rec(res);
    Philox g(seed, 0x4e);
    for (std::size_t n = 3; n <= 10; ++n)
        for (const auto& counts : layouts(n, n)) {
            const auto ds = layout_dataset(counts, 1, g);
            for (int k = 1; static_cast<std::size_t>(k) <= n - 2; ++k)
                for (std::size_t r = 0; r < ds.num_classes(); ++r) {
                    const std::size_t nr = ds.class_count(r);
                    if (nr < 2) continue;
                    const auto hist = collision_histogram(ds, {FamilyKind::Omega, r, k, std::nullopt});
                    double worst = 0;
                    for (std::size_t x = 0; x < hist.size(); ++x)
                        worst = std::max(worst, std::abs(hist[x] - hypergeometric_pmf(n - 2, nr - 2, static_cast<std::uint64_t>(k), x)));
                    rec.check(worst < 1e-12, [&] {
                        return nlohmann::json{{"counts", counts}, {"k", k}, {"class", r}, {"max_abs_diff", worst}};
                    });
                }
        }
}

void suite_unbiasedness(SuiteResult& res, std::uint64_t seed) {
    Recorder rec(res);
    Philox g(seed, 0x0b1a5);
    auto one = [&](const LabeledDataset& ds, const Representation& rep, int k, const char* what, double expect,
                   const SamplingPlan& plan) {
        double got = std::nan("");
        try {
            got = exhaustive_plan_expectation(ds, rep, {k, std::nullopt}, plan);
        } catch (const Error&) {
        }
        rec.check(close(got, expect, 1e-12), [&] {
            return nlohmann::json{{"case", what}, {"N", ds.size()}, {"k", k}, {"expectation", got}, {"target", expect}};
        });
    };
    for (std::size_t n = 4; n <= 8; ++n)
        for (const auto& counts : layouts(n, 3)) {
            if (counts.size() < 2) continue;
            const auto ds = layout_dataset(counts, 2, g);
            const auto rep = Representation::random_linear(2, 2, g());
            for (int k = 1; k <= 2; ++k) {
                const LossSpec spec{k, std::nullopt};
                const EstimatorContext ctx(ds, rep, spec);
                // Alg1 renormalizes over classes with a non-empty Theta family
                const SamplingPlan alg1{Algorithm::Alg1, k, 1, 0};
                bool any_theta = false;
                for (std::size_t r = 0; r < ds.num_classes(); ++r)
                    any_theta = any_theta || (ds.class_count(r) >= 2 && n - ds.class_count(r) >= static_cast<std::size_t>(k));
                if (any_theta) {
                    const double kept = 1.0 - plan_law(ds, alg1).excluded_mass;
                    one(ds, rep, k, "alg1", u_hl(ctx).value / kept, alg1);
                }
                bool has_lambda = false;
                for (std::size_t r = 0; r < ds.num_classes(); ++r) has_lambda = has_lambda || ds.class_count(r) >= 3;
                if (!has_lambda || n - 2 < static_cast<std::size_t>(k)) continue;
                SamplingPlan forced{Algorithm::Alg2, k, 1, 0};
                forced.branch = BranchRule::AllLarge;
                one(ds, rep, k, "alg2_all_large", u_n(ctx).value, forced);
            }
        }
    // no small classes under the default rule
    for (int i = 0; i < 3; ++i) {
        const auto ds = layout_dataset({8, 8}, 2, g);
        const auto rep = Representation::random_linear(2, 2, g());
        one(ds, rep, 12, "alg2_no_small_classes", u_n(ds, rep, {12, std::nullopt}).value, {Algorithm::Alg2, 12, 1, 0});
    }
}

void suite_gradient(SuiteResult& res, std::uint64_t seed) {
    Recorder rec(res);
    Philox g(seed, 0x96);
    for (int i = 0; i < 50; ++i) {
        const std::size_t dim = 2 + uniform_index(g, 3);
        const int k = 1 + static_cast<int>(uniform_index(g, 3));
        const auto ds = layout_dataset({4, 3, 3}, dim, g);
        Representation rep = i % 2 ? Representation::random_mlp({dim, 5, 3}, g())
                                   : Representation::random_linear(dim, 3, g(), 0.7);
        if (i % 2) {
            auto p = rep.params();  // nonzero biases exercise those gradients too
            for (auto& v : p) v += 0.05 * standard_normal(g);
        }
        const FamilyKind kinds[] = {FamilyKind::Theta, FamilyKind::Omega, FamilyKind::Lambda};
        const FamilyKind kind = kinds[i % 3];
        const std::size_t cls = uniform_index(g, 3);
        const auto t = sample_tuple_uniform(ds, {kind, cls, k, std::nullopt}, g);
        const LossSpec spec{k, std::nullopt};
        const auto grad = tuple_loss_grad(rep, spec, ds, t);
        double num = 0, den = 0;
        const double h = 1e-6;
        for (std::size_t j = 0; j < rep.num_params(); ++j) {
            Representation a = rep, b = rep;
            a.params()[j] += h;
            b.params()[j] -= h;
            const double fd = (tuple_loss(a, spec, ds, t) - tuple_loss(b, spec, ds, t)) / (2 * h);
            num += (fd - grad[j]) * (fd - grad[j]);
            den = std::max(den, std::max(fd * fd, grad[j] * grad[j]));
        }
        const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
        rec.check(rel < 1e-5, [&] {
            return nlohmann::json{{"pair", i}, {"family", to_string(kind)}, {"k", k}, {"relative_error", rel}};
        });
    }
}

void suite_bounds(SuiteResult& res, std::uint64_t seed) {
    Recorder rec(res);
    const int ks[] = {2, 5, 10};
    const auto r = bound_inequality_suite(ks, 1000, seed);
    for (const auto& c : r.checks) {
        for (std::size_t i = 0; i < c.typical_draws; ++i)
            rec.check(i >= c.typical_violations, [&] {
                return nlohmann::json{{"k", c.k}, {"floor", "1/e"}, {"min_margin", c.typical_min_margin}};
            });
        for (std::size_t i = 0; i < c.general_draws; ++i)
            rec.check(i >= c.general_violations, [&] {
                return nlohmann::json{{"k", c.k}, {"floor", "gamma_k/4"}, {"min_margin", c.general_min_margin}};
            });
    }
}

using SuiteFn = void (*)(SuiteResult&, std::uint64_t);

const std::vector<std::pair<std::string, SuiteFn>>& suites() {
    static const std::vector<std::pair<std::string, SuiteFn>> s{
        {"debias", suite_debias},         {"counts", suite_counts},     {"hypergeometric", suite_hypergeometric},
        {"unbiasedness", suite_unbiasedness}, {"gradient", suite_gradient}, {"bounds", suite_bounds}};
    return s;
}

}  // namespace

const std::vector<std::string>& verify_suite_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& s : suites()) v.push_back(s.first);
        return v;
    }();
    return names;
}

bool VerifyReport::passed() const noexcept {
    return !suites.empty() && std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
}

nlohmann::json VerifyReport::to_json(bool include_timing) const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : suites) {
        nlohmann::json j{{"name", s.name}, {"passed", s.passed()}, {"cases", s.cases}, {"failed", s.failed},
                         {"failures", s.failures}};
        if (include_timing) j["seconds"] = s.seconds;
        arr.push_back(j);
    }
    return {{"passed", passed()}, {"suites", arr}};
}

VerifyReport run_verify(const VerifyOptions& opts) {
    if (opts.filter) {
        const auto& names = verify_suite_names();
        require(std::find(names.begin(), names.end(), *opts.filter) != names.end(), ErrorKind::Config,
                "unknown verify suite '" + *opts.filter + "'");
    }
    VerifyReport report;
    for (const auto& [name, fn] : suites()) {
        if (opts.filter && *opts.filter != name) continue;
        SuiteResult r;
        r.name = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(r, opts.seed);
        } catch (const Error& e) {
            ++r.failed;
            r.failures.push_back({{"error", e.what()}, {"kind", to_string(e.kind())}});
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.suites.push_back(std::move(r));
    }
    return report;
}

}  // namespace crl

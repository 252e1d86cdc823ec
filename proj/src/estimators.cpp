#include "crl/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>

#include "crl/error.hpp"
#include "crl/numeric.hpp"
#include "crl/rng.hpp"

namespace crl {

namespace fault {
namespace {
std::atomic<bool> g_tau_flip{false};
}
void set_tau_hat_sign_flip(bool on) noexcept { g_tau_flip = on; }
bool tau_hat_sign_flip() noexcept { return g_tau_flip; }
}  // namespace fault

double tau_hat(const ClassStats& stats, int k) {
    require(k >= 1, ErrorKind::InvalidArgument, "tau_hat requires k >= 1");
    CompensatedSum<double> s;
    for (double p : stats.probs) s += p * std::pow(1.0 - p, k);
    const double t = 1.0 - s.value();
    return fault::tau_hat_sign_flip() ? -t : t;
}

double EstimatorReport::recombined() const {
    require(tau_hat && omega && lambda, ErrorKind::InvalidArgument,
            "report has no debias components");
    return (omega->value - *tau_hat * lambda->value) / (1.0 - *tau_hat);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json u128_json(u128 v) {
    if (v <= static_cast<u128>(std::numeric_limits<std::uint64_t>::max()))
        return static_cast<std::uint64_t>(v);
    return to_string(v);
}

nlohmann::json family_json(const FamilyEstimate& f) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : f.terms)
        terms.push_back({{"class", t.cls}, {"weight", t.weight}, {"mean", t.mean},
                         {"family_size", u128_json(t.family_size)}});
    return {{"family", to_string(f.kind)}, {"value", f.value}, {"classes", terms}};
}

// Sum of kernels over (combinations of `group` of size g) x (combinations of
// `pool` of size s), with `pool` independent of the group.
long double product_family_sum(const RowMatrix& emb, const LossSpec& spec,
                               const std::vector<std::size_t>& group, std::size_t g,
                               const std::vector<std::size_t>& pool, std::size_t s) {
    CompensatedSum<long double> acc;
    if (group.size() < g || pool.size() < s) return 0;
    ContrastiveTuple t;
    t.negatives.resize(s);
    std::vector<std::size_t> gi(g), ni(s);
    std::iota(gi.begin(), gi.end(), 0);
    do {
        t.anchor = group[gi[0]];
        t.positive = group[gi[1]];
        if (g == 3)
            t.designated = group[gi[2]];
        else
            t.designated.reset();
        std::iota(ni.begin(), ni.end(), 0);
        do {
            for (std::size_t i = 0; i < s; ++i) t.negatives[i] = pool[ni[i]];
            acc += tuple_kernel(emb, t, spec);
        } while (next_combination(ni, pool.size()));
    } while (next_combination(gi, group.size()));
    return acc.value();
}

}  // namespace

nlohmann::json to_json(const EstimatorReport& r, bool include_timing) {
    nlohmann::json j;
    j["estimator"] = r.estimator;
    j["value"] = r.value;
    j["route"] = r.route;
    nlohmann::json comp = nlohmann::json::object();
    if (r.tau_hat) comp["tau_hat"] = *r.tau_hat;
    if (r.omega) {
        comp["u_omega"] = r.omega->value;
        comp["omega"] = family_json(*r.omega);
    }
    if (r.lambda) {
        comp["u_lambda"] = r.lambda->value;
        comp["lambda"] = family_json(*r.lambda);
    }
    if (r.theta) comp["theta"] = family_json(*r.theta);
    j["components"] = comp;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto* f : {&r.theta, &r.omega, &r.lambda}) {
        if (!*f) continue;
        u128 total = 0;
        for (const auto& t : (*f)->terms) total += t.family_size;
        counts[to_string((*f)->kind)] = u128_json(total);
    }
    j["family_counts"] = counts;
    if (r.permutations) j["permutations"] = *r.permutations;
    if (r.skipped_permutations) j["skipped_permutations"] = *r.skipped_permutations;
    if (r.std_error) j["std_error"] = *r.std_error;
    if (include_timing) j["wall_time"] = r.wall_time;
    return j;
}

EstimatorContext::EstimatorContext(const LabeledDataset& ds, const Representation& rep,
                                   const LossSpec& spec, EstimatorOptions opts)
    : ds_(&ds), spec_(spec), opts_(opts), emb_(embed(rep, ds)) {
    require(spec.k >= 1, ErrorKind::InvalidArgument, "k >= 1 required");
    if (opts_.route == EstimatorRoute::Enumerate) return;
    ValueGroups groups = ValueGroups::build(ds);
    const bool worthwhile = groups.size() < ds.size() &&
                            AggregateKernel::table_size(groups.size(), spec.k) <= opts_.aggregate_cap;
    if (opts_.route == EstimatorRoute::Auto && !worthwhile) return;
    RowMatrix gemb(static_cast<Eigen::Index>(groups.size()), emb_.cols());
    for (std::size_t g = 0; g < groups.size(); ++g)
        gemb.row(static_cast<Eigen::Index>(g)) = emb_.row(static_cast<Eigen::Index>(groups.representative[g]));
    agg_.emplace(gemb, spec_);
    groups_ = std::move(groups);
}

std::pair<double, u128> EstimatorContext::class_family_mean(const FamilySpec& fs) const {
    const u128 size = count(*ds_, fs);
    if (size == 0) return {0.0, 0};
    const auto members = ds_->members(fs.cls);
    if (agg_) {
        const auto anchors = groups_->counts(members);
        std::vector<std::size_t> all(ds_->size());
        std::iota(all.begin(), all.end(), 0);
        auto pool = groups_->counts(all);
        FamilySum s;
        switch (fs.kind) {
            case FamilyKind::Theta:
                for (std::size_t g = 0; g < pool.size(); ++g) pool[g] -= anchors[g];
                s = agg_->pairs(anchors, pool, false);
                break;
            case FamilyKind::Omega: s = agg_->pairs(anchors, pool, true); break;
            case FamilyKind::Lambda: s = agg_->triples(anchors, pool, true); break;
            default: fail(ErrorKind::InvalidArgument, "split families go through split()");
        }
        return {static_cast<double>(s.weighted / to_ld(size)), size};
    }
    require(to_ld(size) <= opts_.enumeration_cap, ErrorKind::CapExceeded,
            std::string(to_string(fs.kind)) + " family of size " + to_string(size) +
                " exceeds the enumeration cap");
    CompensatedSum<long double> acc;
    if (fs.kind == FamilyKind::Theta) {
        std::vector<std::size_t> group(members.begin(), members.end());
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < ds_->size(); ++i)
            if (ds_->label(i) != fs.cls) pool.push_back(i);
        acc += product_family_sum(emb_, spec_, group, 2, pool, static_cast<std::size_t>(spec_.k));
    } else {
        for_each_tuple(*ds_, fs, [&](const ContrastiveTuple& t) { acc += tuple_kernel(emb_, t, spec_); });
    }
    return {static_cast<double>(acc.value() / to_ld(size)), size};
}

FamilyEstimate EstimatorContext::family(FamilyKind kind) const {
    require(kind == FamilyKind::Theta || kind == FamilyKind::Omega || kind == FamilyKind::Lambda,
            ErrorKind::InvalidArgument, "family() takes Theta, Omega or Lambda");
    FamilyEstimate out;
    out.kind = kind;
    const ClassStats stats = ds_->stats();
    CompensatedSum<double> acc;
    bool any = false;
    for (std::size_t r = 0; r < ds_->num_classes(); ++r) {
        ClassTerm t;
        t.cls = r;
        t.weight = stats.probs[r];
        std::tie(t.mean, t.family_size) = class_family_mean(FamilySpec{kind, r, spec_.k, std::nullopt});
        any = any || t.family_size > 0;
        acc += t.weight * t.mean;
        out.terms.push_back(t);
    }
    require(any, ErrorKind::EmptyFamily,
            std::string("all ") + to_string(kind) + " families are empty");
    out.value = acc.value();
    return out;
}

namespace {

std::optional<SplitEstimate> split_impl(const LabeledDataset& ds, const RowMatrix& emb,
                                        const LossSpec& spec, const ValueGroups* groups,
                                        const AggregateKernel* agg, FamilyKind kind,
                                        std::span<const std::size_t> perm, std::size_t cut) {
    const bool triple = kind == FamilyKind::LambdaSplit;
    const std::size_t g = triple ? 3 : 2;
    const std::size_t s = static_cast<std::size_t>(spec.k) - (triple ? 1 : 0);
    const std::size_t r_count = ds.num_classes();

    SplitEstimate out;
    out.kind = kind;
    out.cut = cut;
    out.counts.assign(r_count, 0);
    std::vector<std::vector<std::size_t>> front(r_count);
    for (std::size_t i = 0; i < cut; ++i) front[ds.label(perm[i])].push_back(perm[i]);
    std::size_t total = 0;
    for (std::size_t r = 0; r < r_count; ++r) {
        out.counts[r] = front[r].size();
        total += front[r].size() / g;
    }
    if (total == 0) return std::nullopt;

    std::vector<std::size_t> back(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
    std::vector<std::uint64_t> back_counts;
    if (agg) back_counts = groups->counts(back);
    else std::sort(back.begin(), back.end());

    out.weights.assign(r_count, 0.0);
    out.class_means.assign(r_count, 0.0);
    CompensatedSum<double> acc;
    for (std::size_t r = 0; r < r_count; ++r) {
        if (front[r].size() < g) continue;
        out.weights[r] = static_cast<double>(front[r].size() / g) / static_cast<double>(total);
        const long double size = binomial_ld(front[r].size(), g) * binomial_ld(back.size(), s);
        long double sum;
        if (agg) {
            const auto a = groups->counts(front[r]);
            sum = (triple ? agg->triples(a, back_counts, false) : agg->pairs(a, back_counts, false)).weighted;
        } else {
            std::sort(front[r].begin(), front[r].end());
            sum = product_family_sum(emb, spec, front[r], g, back, s);
        }
        out.class_means[r] = static_cast<double>(sum / size);
        acc += out.weights[r] * out.class_means[r];
    }
    out.value = acc.value();
    return out;
}

std::size_t default_cut(std::size_t n, int k, FamilyKind kind) {
    return kind == FamilyKind::OmegaSplit ? omega_split_size(n, k) : lambda_split_size(n, k);
}

}  // namespace

SplitEstimate EstimatorContext::split(FamilyKind kind, std::span<const std::size_t> perm,
                                      std::optional<std::size_t> cut) const {
    require(kind == FamilyKind::OmegaSplit || kind == FamilyKind::LambdaSplit,
            ErrorKind::InvalidArgument, "split() takes OmegaSplit or LambdaSplit");
    const std::size_t n = ds_->size();
    const std::size_t c = cut.value_or(default_cut(n, spec_.k, kind));
    const auto need = static_cast<std::size_t>(spec_.k) - (kind == FamilyKind::LambdaSplit ? 1 : 0);
    // The Lambda cut may take the whole sample when no free negatives are needed.
    require(c > 0 && c <= n && n - c >= need, ErrorKind::InvalidArgument,
            "split cut " + std::to_string(c) + " leaves too few negatives");
    require(perm.size() == n, ErrorKind::InvalidArgument, "permutation length != N");
    std::vector<char> seen(n, 0);
    for (std::size_t p : perm) {
        require(p < n && !seen[p], ErrorKind::InvalidArgument, "not a permutation of [N]");
        seen[p] = 1;
    }
    auto est = split_impl(*ds_, emb_, spec_, groups_ ? &*groups_ : nullptr, agg_ ? &*agg_ : nullptr,
                          kind, perm, c);
    require(est.has_value(), ErrorKind::EmptyFamily,
            std::string("all ") + to_string(kind) + " families are empty");
    return *est;
}

EstimatorReport u_hl(const EstimatorContext& ctx) {
    const auto t0 = Clock::now();
    EstimatorReport r;
    r.estimator = "u_hl";
    r.route = ctx.route_name();
    r.theta = ctx.family(FamilyKind::Theta);
    r.value = r.theta->value;
    r.wall_time = seconds_since(t0);
    return r;
}

EstimatorReport u_n(const EstimatorContext& ctx) {
    const auto t0 = Clock::now();
    EstimatorReport r;
    r.estimator = "u_n";
    r.route = ctx.route_name();
    const double tau = tau_hat(ctx.dataset().stats(), ctx.spec().k);
    require(tau < 1.0, ErrorKind::DebiasUndefined, "debias undefined: tau_hat = 1");
    r.tau_hat = tau;
    r.omega = ctx.family(FamilyKind::Omega);
    r.lambda = ctx.family(FamilyKind::Lambda);
    r.value = r.recombined();
    r.wall_time = seconds_since(t0);
    return r;
}

EstimatorReport u_hl(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                     const EstimatorOptions& opts) {
    return u_hl(EstimatorContext(ds, rep, spec, opts));
}

double u_omega(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
               const EstimatorOptions& opts) {
    return EstimatorContext(ds, rep, spec, opts).family(FamilyKind::Omega).value;
}

double u_lambda(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                const EstimatorOptions& opts) {
    return EstimatorContext(ds, rep, spec, opts).family(FamilyKind::Lambda).value;
}

EstimatorReport u_n(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                    const EstimatorOptions& opts) {
    return u_n(EstimatorContext(ds, rep, spec, opts));
}

SplitEstimate split_estimate_omega(const LabeledDataset& ds, const Representation& rep,
                                   const LossSpec& spec, std::span<const std::size_t> perm,
                                   std::optional<std::size_t> cut, const EstimatorOptions& opts) {
    return EstimatorContext(ds, rep, spec, opts).split(FamilyKind::OmegaSplit, perm, cut);
}

SplitEstimate split_estimate_lambda(const LabeledDataset& ds, const Representation& rep,
                                    const LossSpec& spec, std::span<const std::size_t> perm,
                                    std::optional<std::size_t> cut, const EstimatorOptions& opts) {
    return EstimatorContext(ds, rep, spec, opts).split(FamilyKind::LambdaSplit, perm, cut);
}

EstimatorReport u_bar(const EstimatorContext& ctx, const UBarMode& mode) {
    const auto t0 = Clock::now();
    const LabeledDataset& ds = ctx.dataset();
    const std::size_t n = ds.size();
    const int k = ctx.spec().k;
    const double tau = tau_hat(ds.stats(), k);
    require(tau < 1.0, ErrorKind::DebiasUndefined, "debias undefined: tau_hat = 1");
    if (mode.exhaustive)
        require(n <= 8, ErrorKind::CapExceeded, "exhaustive u_bar is limited to N <= 8");
    else
        require(mode.permutations >= 1, ErrorKind::InvalidArgument, "sampled u_bar needs T >= 1");
    const std::size_t cut_o = omega_split_size(n, k);
    const std::size_t cut_l = lambda_split_size(n, k);
    require(cut_o > 0, ErrorKind::InvalidArgument,
            "split sizes are degenerate: need N >= k + 2");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    CompensatedSum<double> so, sl, sv, sv2;
    std::size_t used = 0, skipped = 0;
    auto guarded = [&](std::span<const std::size_t> p) {
        SplitEstimate o, l;
        try {
            o = ctx.split(FamilyKind::OmegaSplit, p, cut_o);
            l = ctx.split(FamilyKind::LambdaSplit, p, cut_l);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyFamily) throw;
            ++skipped;
            return;
        }
        const double v = (o.value - tau * l.value) / (1.0 - tau);
        so += o.value;
        sl += l.value;
        sv += v;
        sv2 += v * v;
        ++used;
    };
    if (mode.exhaustive) {
        do guarded(perm);
        while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        Philox g(mode.seed, 0x0b);
        for (std::size_t t = 0; t < mode.permutations; ++t) guarded(random_permutation(g, n));
    }
    require(used > 0, ErrorKind::EmptyFamily, "every permutation gave empty split families");

    EstimatorReport r;
    r.estimator = "u_bar";
    r.route = ctx.route_name();
    r.tau_hat = tau;
    r.omega = FamilyEstimate{FamilyKind::OmegaSplit, so.value() / static_cast<double>(used), {}};
    r.lambda = FamilyEstimate{FamilyKind::LambdaSplit, sl.value() / static_cast<double>(used), {}};
    r.value = r.recombined();
    r.permutations = used + skipped;
    r.skipped_permutations = skipped;
    if (!mode.exhaustive && used > 1) {
        const double m = sv.value() / static_cast<double>(used);
        const double var = std::max(0.0, (sv2.value() - static_cast<double>(used) * m * m) /
                                             static_cast<double>(used - 1));
        r.std_error = std::sqrt(var / static_cast<double>(used));
    }
    r.wall_time = seconds_since(t0);
    return r;
}

EstimatorReport u_bar(const LabeledDataset& ds, const Representation& rep, const LossSpec& spec,
                      const UBarMode& mode, const EstimatorOptions& opts) {
    return u_bar(EstimatorContext(ds, rep, spec, opts), mode);
}

}  // namespace crl

#include "crl/tuples.hpp"

#include <algorithm>

#include "crl/error.hpp"

namespace crl {

const char* to_string(FamilyKind kind) noexcept {
    switch (kind) {
        case FamilyKind::Theta: return "theta";
        case FamilyKind::Omega: return "omega";
        case FamilyKind::Lambda: return "lambda";
        case FamilyKind::OmegaSplit: return "omega_split";
        case FamilyKind::LambdaSplit: return "lambda_split";
    }
    return "?";
}

std::size_t omega_split_size(std::size_t n, int k) {
    return 2 * (n / static_cast<std::size_t>(k + 2));
}

std::size_t lambda_split_size(std::size_t n, int k) {
    return 3 * (n / static_cast<std::size_t>(k + 2));
}

bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
    const std::size_t k = c.size();
    if (k == 0) return false;
    std::size_t i = k;
    while (i > 0) {
        --i;
        if (c[i] < n - k + i) {
            ++c[i];
            for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
            return true;
        }
    }
    return false;
}

namespace {

bool is_split(FamilyKind kind) {
    return kind == FamilyKind::OmegaSplit || kind == FamilyKind::LambdaSplit;
}

bool is_triple(FamilyKind kind) {
    return kind == FamilyKind::Lambda || kind == FamilyKind::LambdaSplit;
}

void validate(const LabeledDataset& ds, const FamilySpec& spec) {
    require(spec.k >= 1, ErrorKind::InvalidArgument, "family requires k >= 1");
    require(spec.cls < ds.num_classes(), ErrorKind::InvalidArgument, "class index out of range");
    if (is_split(spec.kind)) {
        require(spec.split.has_value(), ErrorKind::InvalidArgument,
                "split family requires a permutation and cut");
        require(spec.split->cut > 0 && spec.split->cut < ds.size(), ErrorKind::InvalidArgument,
                "split cut out of range");
    }
}

std::vector<std::size_t> complement_sorted(std::size_t n, const std::vector<std::size_t>& excl) {
    std::vector<std::size_t> out;
    out.reserve(n - excl.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (j < excl.size() && excl[j] == i) {
            ++j;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

}  // namespace

TupleEnumerator::TupleEnumerator(const LabeledDataset& ds, FamilySpec spec)
    : ds_(&ds), spec_(std::move(spec)) {
    validate(ds, spec_);
    group_size_ = is_triple(spec_.kind) ? 3 : 2;
    neg_size_ = static_cast<std::size_t>(spec_.k) - (group_size_ == 3 ? 1 : 0);
    const auto members = ds.members(spec_.cls);
    if (is_split(spec_.kind)) {
        const SplitResult sr = ds.split(spec_.split->perm, spec_.split->cut);
        for (std::size_t i : sr.front)
            if (ds.label(i) == spec_.cls) anchors_.push_back(i);
        fixed_pool_ = sr.back;
        std::sort(anchors_.begin(), anchors_.end());
        std::sort(fixed_pool_.begin(), fixed_pool_.end());
    } else {
        anchors_.assign(members.begin(), members.end());
        if (spec_.kind == FamilyKind::Theta) {
            std::vector<std::size_t> excl(members.begin(), members.end());
            fixed_pool_ = complement_sorted(ds.size(), excl);
        }
    }
    if (anchors_.size() < group_size_) done_ = true;
}

void TupleEnumerator::rebuild_pool() {
    if (spec_.kind == FamilyKind::Omega || spec_.kind == FamilyKind::Lambda) {
        std::vector<std::size_t> excl;
        for (std::size_t g : group_) excl.push_back(anchors_[g]);
        pool_ = complement_sorted(ds_->size(), excl);
    } else {
        pool_ = fixed_pool_;
    }
    neg_.resize(neg_size_);
    for (std::size_t i = 0; i < neg_size_; ++i) neg_[i] = i;
}

bool TupleEnumerator::advance_group() {
    if (!started_) {
        group_.resize(group_size_);
        for (std::size_t i = 0; i < group_size_; ++i) group_[i] = i;
        started_ = true;
    } else if (!next_combination(group_, anchors_.size())) {
        return false;
    }
    rebuild_pool();
    return pool_.size() >= neg_size_;
}

bool TupleEnumerator::next(ContrastiveTuple& out) {
    if (done_) return false;
    const bool need_group = !started_ || !next_combination(neg_, pool_.size());
    if (need_group) {
        if (!advance_group()) {
            done_ = true;
            return false;
        }
    }
    out.anchor = anchors_[group_[0]];
    out.positive = anchors_[group_[1]];
    out.designated.reset();
    if (group_size_ == 3) out.designated = anchors_[group_[2]];
    out.negatives.resize(neg_size_);
    for (std::size_t i = 0; i < neg_size_; ++i) out.negatives[i] = pool_[neg_[i]];
    return true;
}

u128 count(const LabeledDataset& ds, const FamilySpec& spec) {
    validate(ds, spec);
    const std::uint64_t n = ds.size();
    const auto k = static_cast<std::uint64_t>(spec.k);
    const std::uint64_t nr = ds.class_count(spec.cls);
    switch (spec.kind) {
        case FamilyKind::Theta: return binomial(nr, 2) * binomial(n - nr, k);
        case FamilyKind::Omega: return nr < 2 ? 0 : binomial(nr, 2) * binomial(n - 2, k);
        case FamilyKind::Lambda: return nr < 3 ? 0 : binomial(nr, 3) * binomial(n - 3, k - 1);
        case FamilyKind::OmegaSplit:
        case FamilyKind::LambdaSplit: {
            const SplitResult sr = ds.split(spec.split->perm, spec.split->cut);
            const std::uint64_t front_r = sr.front_counts[spec.cls];
            const std::uint64_t back = n - spec.split->cut;
            if (spec.kind == FamilyKind::OmegaSplit) return binomial(front_r, 2) * binomial(back, k);
            return binomial(front_r, 3) * binomial(back, k - 1);
        }
    }
    return 0;
}

std::size_t collision_count(const LabeledDataset& ds, const ContrastiveTuple& t, std::size_t r) {
    std::size_t c = 0;
    for (std::size_t i : t.negatives)
        if (ds.label(i) == r) ++c;
    if (t.designated && ds.label(*t.designated) == r) ++c;
    return c;
}

double hypergeometric_pmf(std::uint64_t N, std::uint64_t K, std::uint64_t n, std::uint64_t x) {
    require(K <= N && n <= N, ErrorKind::InvalidArgument,
            "hypergeometric_pmf: require K <= N and n <= N");
    if (x > n || x > K || n - x > N - K) return 0.0;
    const u128 num = binomial(K, x) * binomial(N - K, n - x);
    const u128 den = binomial(N, n);
    return static_cast<double>(to_ld(num) / to_ld(den));
}

std::vector<u128> collision_histogram_counts(const LabeledDataset& ds, const FamilySpec& spec) {
    require(spec.kind == FamilyKind::Omega || spec.kind == FamilyKind::OmegaSplit,
            ErrorKind::InvalidArgument, "collision histogram is defined on Omega families");
    std::vector<u128> hist(static_cast<std::size_t>(spec.k) + 1, 0);
    for_each_tuple(ds, spec, [&](const ContrastiveTuple& t) {
        ++hist[collision_count(ds, t, spec.cls)];
    });
    return hist;
}

std::vector<double> collision_histogram(const LabeledDataset& ds, const FamilySpec& spec) {
    const auto counts = collision_histogram_counts(ds, spec);
    u128 total = 0;
    for (u128 c : counts) total += c;
    require(total > 0, ErrorKind::EmptyFamily,
            std::string("collision histogram over empty ") + to_string(spec.kind) + " family");
    std::vector<double> out;
    for (u128 c : counts) out.push_back(static_cast<double>(to_ld(c) / to_ld(total)));
    return out;
}

}  // namespace crl

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "crl/dataset.hpp"
#include "crl/numeric.hpp"

namespace crl {

/// (anchor, positive, negatives) index tuple. Lambda-form tuples carry the
/// forced same-class negative in `designated` and k-1 free negatives.
/// Canonical form: anchor < positive (< designated), negatives ascending.
struct ContrastiveTuple {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::vector<std::size_t> negatives;
    std::optional<std::size_t> designated;

    bool is_lambda() const noexcept { return designated.has_value(); }
    friend bool operator==(const ContrastiveTuple&, const ContrastiveTuple&) = default;
};

enum class FamilyKind { Theta, Omega, Lambda, OmegaSplit, LambdaSplit };

const char* to_string(FamilyKind kind) noexcept;

struct SplitSpec {
    std::vector<std::size_t> perm;
    std::size_t cut = 0;
};

struct FamilySpec {
    FamilyKind kind = FamilyKind::Theta;
    std::size_t cls = 0;
    int k = 1;
    std::optional<SplitSpec> split;  // required for the split kinds
};

/// Pair/triple split sizes n = 2 floor(N/(k+2)), m = 3 floor(N/(k+2)).
std::size_t omega_split_size(std::size_t n, int k);
std::size_t lambda_split_size(std::size_t n, int k);

/// Lazy enumeration of a tuple family; every unordered tuple appears once.
class TupleEnumerator {
public:
    TupleEnumerator(const LabeledDataset& ds, FamilySpec spec);

    /// Writes the next tuple into `out`; returns false when exhausted.
    bool next(ContrastiveTuple& out);

private:
    void rebuild_pool();
    bool advance_group();

    const LabeledDataset* ds_;
    FamilySpec spec_;
    std::size_t group_size_;
    std::size_t neg_size_;
    std::vector<std::size_t> anchors_;     // candidate anchor/positive(/collided) pool
    std::vector<std::size_t> fixed_pool_;  // negative pool when it does not depend on the group
    std::vector<std::size_t> pool_;
    std::vector<std::size_t> group_;  // positions into anchors_
    std::vector<std::size_t> neg_;    // positions into pool_
    bool started_ = false;
    bool done_ = false;
};

template <class F>
void for_each_tuple(const LabeledDataset& ds, const FamilySpec& spec, F&& fn) {
    TupleEnumerator it(ds, spec);
    ContrastiveTuple t;
    while (it.next(t)) fn(t);
}

/// Closed-form family size (binomial products).
u128 count(const LabeledDataset& ds, const FamilySpec& spec);

/// Number of negatives (including a designated one) whose label is r.
std::size_t collision_count(const LabeledDataset& ds, const ContrastiveTuple& t, std::size_t r);

/// Hypergeometric(N, K, n) pmf at x: C(K,x) C(N-K,n-x) / C(N,n).
double hypergeometric_pmf(std::uint64_t N, std::uint64_t K, std::uint64_t n, std::uint64_t x);

/// Exact tuple counts per collision count kappa = 0..k over an Omega family.
std::vector<u128> collision_histogram_counts(const LabeledDataset& ds, const FamilySpec& spec);
/// Proportions of collision_histogram_counts.
std::vector<double> collision_histogram(const LabeledDataset& ds, const FamilySpec& spec);

bool next_combination(std::vector<std::size_t>& c, std::size_t n);

}  // namespace crl

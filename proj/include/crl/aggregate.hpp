#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crl/dataset.hpp"
#include "crl/losses.hpp"

namespace crl {

/// Partition of a dataset into groups of identical feature vectors.
struct ValueGroups {
    std::vector<std::size_t> representative;  // one sample index per group
    std::vector<std::size_t> group_of;        // group id of every sample

    std::size_t size() const noexcept { return representative.size(); }
    static ValueGroups build(const LabeledDataset& ds);
    /// Per-group counts over the given sample indices.
    std::vector<std::uint64_t> counts(std::span<const std::size_t> samples) const;
};

struct FamilySum {
    long double weighted = 0;  // sum of kernel values over the family
    long double count = 0;     // family size
    double mean() const { return count > 0 ? static_cast<double>(weighted / count) : 0.0; }
};

/// Exact family sums computed from value counts: a tuple family is a product
/// of combinations over groups, so every distinct value pattern is evaluated
/// once and weighted by its binomial multiplicity.
class AggregateKernel {
public:
    AggregateKernel(const RowMatrix& group_emb, const LossSpec& spec);

    /// Rough table size for a given group count, used for route selection.
    static double table_size(std::size_t groups, int k);

    /// Unordered pairs drawn from `anchors` and k negatives from `negatives`.
    /// With `exclude_pair`, the pair itself is removed from the negative pool
    /// (the anchors are a subset of the negatives).
    FamilySum pairs(std::span<const std::uint64_t> anchors, std::span<const std::uint64_t> negatives,
                    bool exclude_pair) const;
    /// Unordered triples and k-1 negatives, as for pairs().
    FamilySum triples(std::span<const std::uint64_t> anchors,
                      std::span<const std::uint64_t> negatives, bool exclude_triple) const;

private:
    std::size_t groups_;
    int k_;
    std::vector<std::vector<std::uint8_t>> neg_sets_;     // multisets of size k
    std::vector<std::vector<std::uint8_t>> neg_sets_m1_;  // multisets of size k-1
    std::vector<std::array<std::size_t, 2>> pair_list_;
    std::vector<std::array<std::size_t, 3>> triple_list_;
    std::vector<double> pair_table_;    // pair_list_ x neg_sets_
    std::vector<double> triple_table_;  // triple_list_ x neg_sets_m1_
};

}  // namespace crl

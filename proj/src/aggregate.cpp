#include "crl/aggregate.hpp"

#include <array>
#include <map>

#include "crl/error.hpp"
#include "crl/numeric.hpp"

namespace crl {

namespace {

// All multisets of size s over g values, as per-value multiplicities.
std::vector<std::vector<std::uint8_t>> multisets(std::size_t g, int s) {
    std::vector<std::vector<std::uint8_t>> out;
    std::vector<std::uint8_t> cur(g, 0);
    auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
        if (pos + 1 == g) {
            cur[pos] = static_cast<std::uint8_t>(left);
            out.push_back(cur);
            return;
        }
        for (int m = left; m >= 0; --m) {
            cur[pos] = static_cast<std::uint8_t>(m);
            self(self, pos + 1, left - m);
        }
    };
    rec(rec, 0, s);
    return out;
}

long double choose(std::uint64_t n, unsigned m) {
    if (m > n) return 0;
    long double r = 1;
    for (unsigned i = 0; i < m; ++i) r = r * static_cast<long double>(n - i) / (i + 1);
    return r;
}

void expand(const std::vector<std::uint8_t>& ms, std::vector<std::size_t>& out) {
    out.clear();
    for (std::size_t v = 0; v < ms.size(); ++v)
        for (int c = 0; c < ms[v]; ++c) out.push_back(v);
}

long double neg_multiplicity(const std::vector<std::uint8_t>& ms,
                             std::span<const std::uint64_t> pool) {
    long double w = 1;
    for (std::size_t v = 0; v < ms.size() && w != 0; ++v)
        if (ms[v]) w *= choose(pool[v], ms[v]);
    return w;
}

}  // namespace

ValueGroups ValueGroups::build(const LabeledDataset& ds) {
    ValueGroups g;
    std::map<std::vector<double>, std::size_t> ids;
    g.group_of.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto f = ds.features(i);
        auto [it, fresh] = ids.emplace(std::vector<double>(f.begin(), f.end()), g.size());
        if (fresh) g.representative.push_back(i);
        g.group_of[i] = it->second;
    }
    return g;
}

std::vector<std::uint64_t> ValueGroups::counts(std::span<const std::size_t> samples) const {
    std::vector<std::uint64_t> c(size(), 0);
    for (std::size_t i : samples) ++c[group_of[i]];
    return c;
}

double AggregateKernel::table_size(std::size_t g, int k) {
    const auto gl = static_cast<std::uint64_t>(g);
    return static_cast<double>(binomial_ld(gl + 1, 2) * binomial_ld(gl + k - 1, k) +
                               binomial_ld(gl + 2, 3) * binomial_ld(gl + k - 2, k - 1));
}

AggregateKernel::AggregateKernel(const RowMatrix& group_emb, const LossSpec& spec)
    : groups_(static_cast<std::size_t>(group_emb.rows())), k_(spec.k) {
    require(groups_ >= 1 && k_ >= 1, ErrorKind::InvalidArgument, "aggregate kernel needs groups and k >= 1");
    neg_sets_ = multisets(groups_, k_);
    neg_sets_m1_ = multisets(groups_, k_ - 1);
    for (std::size_t a = 0; a < groups_; ++a)
        for (std::size_t b = a; b < groups_; ++b) {
            pair_list_.push_back({a, b});
            for (std::size_t c = b; c < groups_; ++c) triple_list_.push_back({a, b, c});
        }

    ContrastiveTuple t;
    pair_table_.reserve(pair_list_.size() * neg_sets_.size());
    for (const auto& p : pair_list_) {
        t.anchor = p[0];
        t.positive = p[1];
        t.designated.reset();
        for (const auto& ms : neg_sets_) {
            expand(ms, t.negatives);
            pair_table_.push_back(tuple_kernel(group_emb, t, spec));
        }
    }
    triple_table_.reserve(triple_list_.size() * neg_sets_m1_.size());
    for (const auto& p : triple_list_) {
        t.anchor = p[0];
        t.positive = p[1];
        t.designated = p[2];
        for (const auto& ms : neg_sets_m1_) {
            expand(ms, t.negatives);
            triple_table_.push_back(tuple_kernel(group_emb, t, spec));
        }
    }
}

FamilySum AggregateKernel::pairs(std::span<const std::uint64_t> anchors,
                                 std::span<const std::uint64_t> negatives, bool exclude_pair) const {
    require(anchors.size() == groups_ && negatives.size() == groups_, ErrorKind::InvalidArgument,
            "count vectors must cover every group");
    FamilySum out;
    CompensatedSum<long double> sum, cnt;
    std::vector<std::uint64_t> pool(negatives.begin(), negatives.end());
    for (std::size_t i = 0; i < pair_list_.size(); ++i) {
        const auto [a, b] = pair_list_[i];
        const long double m = a == b ? choose(anchors[a], 2)
                                     : static_cast<long double>(anchors[a]) * anchors[b];
        if (m == 0) continue;
        if (exclude_pair) {
            --pool[a];
            --pool[b];
        }
        const double* row = pair_table_.data() + i * neg_sets_.size();
        for (std::size_t j = 0; j < neg_sets_.size(); ++j) {
            const long double w = neg_multiplicity(neg_sets_[j], pool);
            if (w == 0) continue;
            sum += m * w * row[j];
            cnt += m * w;
        }
        if (exclude_pair) {
            ++pool[a];
            ++pool[b];
        }
    }
    out.weighted = sum.value();
    out.count = cnt.value();
    return out;
}

FamilySum AggregateKernel::triples(std::span<const std::uint64_t> anchors,
                                   std::span<const std::uint64_t> negatives,
                                   bool exclude_triple) const {
    require(anchors.size() == groups_ && negatives.size() == groups_, ErrorKind::InvalidArgument,
            "count vectors must cover every group");
    FamilySum out;
    CompensatedSum<long double> sum, cnt;
    std::vector<std::uint64_t> pool(negatives.begin(), negatives.end());
    for (std::size_t i = 0; i < triple_list_.size(); ++i) {
        const auto [a, b, c] = triple_list_[i];
        long double m;
        if (a == c)
            m = choose(anchors[a], 3);
        else if (a == b)
            m = choose(anchors[a], 2) * anchors[c];
        else if (b == c)
            m = anchors[a] * choose(anchors[b], 2);
        else
            m = static_cast<long double>(anchors[a]) * anchors[b] * anchors[c];
        if (m == 0) continue;
        if (exclude_triple) {
            --pool[a];
            --pool[b];
            --pool[c];
        }
        const double* row = triple_table_.data() + i * neg_sets_m1_.size();
        for (std::size_t j = 0; j < neg_sets_m1_.size(); ++j) {
            const long double w = neg_multiplicity(neg_sets_m1_[j], pool);
            if (w == 0) continue;
            sum += m * w * row[j];
            cnt += m * w;
        }
        if (exclude_triple) {
            ++pool[a];
            ++pool[b];
            ++pool[c];
        }
    }
    out.weighted = sum.value();
    out.count = cnt.value();
    return out;
}

}  // namespace crl

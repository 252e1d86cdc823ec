#include "doctest.h"

#include <set>

#include "crl/error.hpp"
#include "crl/tuples.hpp"
#include "oracles.hpp"

using namespace crl;

namespace {

std::size_t enumerate_length(const LabeledDataset& ds, const FamilySpec& spec) {
    std::size_t n = 0;
    for_each_tuple(ds, spec, [&](const ContrastiveTuple&) { ++n; });
    return n;
}

}  // namespace

TEST_CASE("enumeration examples") {
    auto ds5 = oracle::make_dataset({2, 3}, 1, 1);
    CHECK(enumerate_length(ds5, {FamilyKind::Theta, 0, 2, std::nullopt}) == 3);
    auto ds4 = oracle::make_dataset({2, 2}, 1, 1);
    CHECK(enumerate_length(ds4, {FamilyKind::Omega, 0, 2, std::nullopt}) == 1);
    CHECK(enumerate_length(ds4, {FamilyKind::Lambda, 0, 2, std::nullopt}) == 0);
}

TEST_CASE("closed-form counts") {
    auto ds = oracle::make_dataset({4, 6}, 1, 2);
    const u128 omega = count(ds, {FamilyKind::Omega, 0, 2, std::nullopt});
    const u128 lambda = count(ds, {FamilyKind::Lambda, 0, 2, std::nullopt});
    CHECK(omega == 168);
    CHECK(lambda == 28);
    CHECK(omega / lambda == 6);
}

TEST_CASE("enumeration matches brute force tuple sets and closed forms") {
    for (std::size_t n = 2; n <= 8; ++n)
        for (const auto& comp : oracle::compositions(n, 3))
            for (int k = 1; k <= 3; ++k) {
                auto ds = oracle::make_dataset(comp, 1, static_cast<std::uint32_t>(n * 31 + k));
                for (std::size_t r = 0; r < ds.num_classes(); ++r) {
                    // brute-force tuple sets by index predicates
                    std::set<std::vector<std::size_t>> want_theta, want_omega, want_lambda;
                    const auto cls = oracle::indices_where(n, [&](std::size_t i) { return ds.label(i) == r; });
                    const auto others = oracle::indices_where(n, [&](std::size_t i) { return ds.label(i) != r; });
                    oracle::subsets(cls, 2, [&](const auto& pr) {
                        oracle::subsets(others, k, [&](const auto& ng) {
                            std::vector<std::size_t> key(pr);
                            key.insert(key.end(), ng.begin(), ng.end());
                            want_theta.insert(key);
                        });
                        const auto rest = oracle::indices_where(n, [&](std::size_t i) { return i != pr[0] && i != pr[1]; });
                        oracle::subsets(rest, k, [&](const auto& ng) {
                            std::vector<std::size_t> key(pr);
                            key.insert(key.end(), ng.begin(), ng.end());
                            want_omega.insert(key);
                        });
                    });
                    oracle::subsets(cls, 3, [&](const auto& tr) {
                        const auto rest = oracle::indices_where(n, [&](std::size_t i) {
                            return i != tr[0] && i != tr[1] && i != tr[2];
                        });
                        oracle::subsets(rest, k - 1, [&](const auto& ng) {
                            std::vector<std::size_t> key(tr);
                            key.insert(key.end(), ng.begin(), ng.end());
                            want_lambda.insert(key);
                        });
                    });
                    auto got = [&](FamilyKind kind) {
                        std::set<std::vector<std::size_t>> out;
                        std::size_t len = 0;
                        for_each_tuple(ds, {kind, r, k, std::nullopt}, [&](const ContrastiveTuple& t) {
                            std::vector<std::size_t> key{t.anchor, t.positive};
                            if (t.designated) key.push_back(*t.designated);
                            key.insert(key.end(), t.negatives.begin(), t.negatives.end());
                            REQUIRE(std::is_sorted(t.negatives.begin(), t.negatives.end()));
                            REQUIRE(t.anchor < t.positive);
                            if (kind == FamilyKind::Theta) REQUIRE(collision_count(ds, t, r) == 0);
                            if (t.designated) REQUIRE(ds.label(*t.designated) == r);
                            out.insert(key);
                            ++len;
                        });
                        REQUIRE(len == out.size());
                        return out;
                    };
                    REQUIRE(got(FamilyKind::Theta) == want_theta);
                    REQUIRE(got(FamilyKind::Omega) == want_omega);
                    REQUIRE(got(FamilyKind::Lambda) == want_lambda);
                    REQUIRE(count(ds, {FamilyKind::Theta, r, k, std::nullopt}) == want_theta.size());
                    REQUIRE(count(ds, {FamilyKind::Omega, r, k, std::nullopt}) == want_omega.size());
                    REQUIRE(count(ds, {FamilyKind::Lambda, r, k, std::nullopt}) == want_lambda.size());
                }
            }
}

TEST_CASE("split families") {
    auto ds = oracle::make_dataset({3, 3}, 1, 5, false);  // labels 0,0,0,1,1,1
    SplitSpec sp{{0, 3, 1, 4, 2, 5}, 4};
    FamilySpec fs{FamilyKind::OmegaSplit, 0, 1, sp};
    std::size_t len = 0;
    for_each_tuple(ds, fs, [&](const ContrastiveTuple& t) {
        CHECK(t.anchor == 0);
        CHECK(t.positive == 1);
        CHECK((t.negatives[0] == 2 || t.negatives[0] == 5));
        ++len;
    });
    CHECK(len == 2);
    CHECK(count(ds, fs) == 2);
    FamilySpec ls{FamilyKind::LambdaSplit, 0, 2, SplitSpec{{0, 1, 2, 3, 4, 5}, 3}};
    CHECK(count(ds, ls) == 3);
    CHECK(enumerate_length(ds, ls) == 3);
    CHECK(omega_split_size(10, 3) == 4);
    CHECK(lambda_split_size(10, 3) == 6);
}

TEST_CASE("hypergeometric pmf") {
    CHECK(hypergeometric_pmf(10, 4, 2, 1) == doctest::Approx(8.0 / 15.0).epsilon(1e-15));
    CHECK(hypergeometric_pmf(10, 1, 2, 2) == 0.0);
    CHECK(hypergeometric_pmf(7, 7, 3, 3) == 1.0);
    CHECK_THROWS_AS(hypergeometric_pmf(5, 6, 1, 0), Error);
    CHECK_THROWS_AS(hypergeometric_pmf(5, 2, 6, 0), Error);
}

TEST_CASE("collision histograms follow the hypergeometric law") {
    auto ds = oracle::make_dataset({3, 3}, 1, 7);
    const auto h = collision_histogram(ds, {FamilyKind::Omega, 0, 2, std::nullopt});
    REQUIRE(h.size() == 3);
    for (std::uint64_t x = 0; x <= 2; ++x) CHECK(h[x] == doctest::Approx(hypergeometric_pmf(4, 1, 2, x)).epsilon(1e-14));

    auto pair = oracle::make_dataset({2, 4}, 1, 7);
    const auto hp = collision_histogram(pair, {FamilyKind::Omega, 0, 2, std::nullopt});
    CHECK(hp[0] == 1.0);

    auto k1 = oracle::make_dataset({4, 3}, 1, 7);
    const auto h1 = collision_histogram(k1, {FamilyKind::Omega, 0, 1, std::nullopt});
    CHECK(h1.size() == 2);
    CHECK(h1[1] == doctest::Approx(2.0 / 5.0).epsilon(1e-15));

    auto single = oracle::make_dataset({1, 3}, 1, 7);
    CHECK_THROWS_AS(collision_histogram(single, {FamilyKind::Omega, 0, 1, std::nullopt}), Error);
}

TEST_CASE("collision_count on mixed tuples") {
    auto ds = oracle::make_dataset({3, 3}, 1, 8, false);
    ContrastiveTuple t{0, 1, {2, 3, 4}, std::nullopt};
    CHECK(collision_count(ds, t, 0) == 1);
    ContrastiveTuple all{3, 4, {5}, std::nullopt};
    CHECK(collision_count(ds, all, 1) == 1);
    ContrastiveTuple lam{0, 1, {3}, 2};
    CHECK(collision_count(ds, lam, 0) == 1);
}

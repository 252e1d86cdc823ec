#include "doctest.h"

#include <map>
#include <set>

#include "crl/error.hpp"
#include "crl/numeric.hpp"
#include "crl/rng.hpp"

using namespace crl;

TEST_CASE("binomial matches Pascal's triangle") {
    std::vector<std::vector<u128>> pascal(70);
    for (std::size_t n = 0; n < pascal.size(); ++n) {
        pascal[n].assign(n + 1, 1);
        for (std::size_t k = 1; k < n; ++k) pascal[n][k] = pascal[n - 1][k - 1] + pascal[n - 1][k];
    }
    for (std::uint64_t n = 0; n < pascal.size(); ++n)
        for (std::uint64_t k = 0; k <= n + 2; ++k) {
            const u128 expect = k <= n ? pascal[n][k] : 0;
            CHECK(binomial(n, k) == expect);
        }
    CHECK(to_string(binomial(10, 3)) == "120");
    CHECK(binomial_ld(50, 25) == doctest::Approx(static_cast<double>(to_ld(binomial(50, 25)))));
}

TEST_CASE("binomial overflow is reported") {
    CHECK_THROWS_AS(binomial(400, 200), Error);
    try {
        binomial(400, 200);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Overflow);
    }
}

TEST_CASE("compensated sum recovers cancelled terms") {
    CompensatedSum<double> s;
    s += 1e16;
    s += 1.0;
    s += -1e16;
    CHECK(s.value() == 1.0);
}

TEST_CASE("least squares fit on exact line") {
    std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    const auto f = fit_line(x, y);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.slope_stderr == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("philox is deterministic and streams differ") {
    Philox a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    std::vector<std::uint64_t> va, vb, vc, vd;
    for (int i = 0; i < 16; ++i) {
        va.push_back(a());
        vb.push_back(b());
        vc.push_back(c());
        vd.push_back(d());
    }
    CHECK(va == vb);
    CHECK(va != vc);
    CHECK(va != vd);
    Philox e = Philox(42, 0).derive(7);
    CHECK(e.stream() != 0);
}

TEST_CASE("uniform_index stays in range and is roughly flat") {
    Philox g(1);
    std::vector<int> hist(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = uniform_index(g, 7);
        REQUIRE(v < 7);
        ++hist[v];
    }
    double chi2 = 0;
    for (int h : hist) chi2 += (h - n / 7.0) * (h - n / 7.0) / (n / 7.0);
    CHECK(chi2 < 22.46);  // chi^2_6 at p = 0.001
}

TEST_CASE("sample_subset is a uniform sorted k-subset") {
    Philox g(5);
    std::map<std::vector<std::uint64_t>, int> hist;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto s = sample_subset(g, 6, 3);
        REQUIRE(std::is_sorted(s.begin(), s.end()));
        REQUIRE(std::set<std::uint64_t>(s.begin(), s.end()).size() == 3);
        ++hist[s];
    }
    REQUIRE(hist.size() == 20);
    double chi2 = 0;
    for (const auto& [k, h] : hist) chi2 += (h - n / 20.0) * (h - n / 20.0) / (n / 20.0);
    CHECK(chi2 < 43.82);  // chi^2_19 at p = 0.001
    CHECK_THROWS_AS(sample_subset(g, 2, 3), Error);
}

TEST_CASE("permutations and dirichlet draws") {
    Philox g(9);
    auto p = random_permutation(g, 10);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(p[i] == i);
    for (int t = 0; t < 100; ++t) {
        const auto d = dirichlet(g, 5, 0.3);
        double s = 0;
        for (double v : d) {
            CHECK(v >= 0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    double m = 0;
    for (int i = 0; i < 20000; ++i) m += standard_normal(g);
    CHECK(std::abs(m / 20000) < 0.03);
}

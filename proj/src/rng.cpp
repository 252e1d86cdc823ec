#include "crl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crl/error.hpp"
#include "crl/numeric.hpp"

namespace crl {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::uint64_t splitmix(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double gamma_variate(Philox& g, double alpha) {
    if (alpha < 1.0) {
        const double u = uniform01(g);
        return gamma_variate(g, alpha + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / alpha);
    }
    // Marsaglia-Tsang
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = standard_normal(g);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(g);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace

Philox::Philox(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream) {}

void Philox::refill() noexcept {
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                           static_cast<std::uint32_t>(seed_ >> 32)};
    out_ = philox_block(ctr, key);
    ++block_;
    used_ = 0;
}

Philox::result_type Philox::operator()() noexcept {
    if (used_ >= 4) refill();
    const std::uint64_t v = (static_cast<std::uint64_t>(out_[used_]) << 32) | out_[used_ + 1];
    used_ += 2;
    return v;
}

Philox Philox::derive(std::uint64_t stream) const noexcept {
    return Philox(seed_, mix_stream(stream_, stream));
}

std::uint64_t mix_stream(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
    return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

double uniform01(Philox& g) noexcept {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_index(Philox& g, std::uint64_t n) noexcept {
    std::uint64_t x = g();
    u128 m = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = g();
            m = static_cast<unsigned __int128>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double standard_normal(Philox& g) noexcept {
    double u1 = uniform01(g);
    while (u1 <= 0.0) u1 = uniform01(g);
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double standard_exponential(Philox& g) noexcept {
    return -std::log1p(-uniform01(g));
}

std::vector<std::uint64_t> sample_subset(Philox& g, std::uint64_t n, std::uint64_t k) {
    require(k <= n, ErrorKind::InvalidArgument, "sample_subset: k > n");
    std::vector<std::uint64_t> chosen;
    chosen.reserve(k);
    for (std::uint64_t j = n - k; j < n; ++j) {
        const std::uint64_t t = uniform_index(g, j + 1);
        if (std::find(chosen.begin(), chosen.end(), t) == chosen.end())
            chosen.push_back(t);
        else
            chosen.push_back(j);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::vector<std::size_t> random_permutation(Philox& g, std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(g, i)]);
    return p;
}

std::size_t draw_from_cdf(Philox& g, const std::vector<double>& cdf) {
    const double u = uniform01(g) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> dirichlet(Philox& g, std::size_t dim, double alpha) {
    require(dim >= 1 && alpha > 0, ErrorKind::InvalidArgument, "dirichlet: bad parameters");
    std::vector<double> x(dim);
    double total = 0;
    for (auto& v : x) {
        v = gamma_variate(g, alpha);
        total += v;
    }
    for (auto& v : x) v /= total;
    return x;
}

}  // namespace crl

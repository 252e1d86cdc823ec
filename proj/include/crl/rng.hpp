#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace crl {

/// Philox4x32-10 counter-based generator. The stream id occupies the upper
/// half of the counter, so (seed, stream) pairs give independent sequences
/// for parallel workers.
class Philox {
public:
    using result_type = std::uint64_t;

    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept;

    /// Generator for a derived stream, e.g. derive(trial) inside a study.
    Philox derive(std::uint64_t stream) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> out_{};
    int used_ = 4;
};

/// Mixes several integers into one stream id.
std::uint64_t mix_stream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

double uniform01(Philox& g) noexcept;
/// Uniform integer in [0, n), n > 0 (Lemire's multiply-shift with rejection).
std::uint64_t uniform_index(Philox& g, std::uint64_t n) noexcept;
double standard_normal(Philox& g) noexcept;
double standard_exponential(Philox& g) noexcept;

/// Uniform k-subset of [0, n), sorted ascending (Floyd's algorithm).
std::vector<std::uint64_t> sample_subset(Philox& g, std::uint64_t n, std::uint64_t k);

/// Uniform random permutation of [0, n) (Fisher-Yates).
std::vector<std::size_t> random_permutation(Philox& g, std::size_t n);

/// Index drawn from a discrete distribution given by its cumulative weights
/// (last entry = total mass).
std::size_t draw_from_cdf(Philox& g, const std::vector<double>& cdf);

/// Dirichlet(alpha, ..., alpha) draw via normalized Gamma variates.
std::vector<double> dirichlet(Philox& g, std::size_t dim, double alpha);

}  // namespace crl

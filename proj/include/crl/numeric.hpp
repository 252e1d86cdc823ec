#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crl {

using u128 = unsigned __int128;

/// Exact binomial coefficient C(n, k). Throws ErrorKind::Overflow when the
/// result does not fit in 128 bits. C(n, k) = 0 for k > n.
u128 binomial(std::uint64_t n, std::uint64_t k);

/// C(n, k) in extended precision, for multiplicities far beyond 128 bits.
long double binomial_ld(std::uint64_t n, std::uint64_t k);

std::string to_string(u128 v);

inline long double to_ld(u128 v) { return static_cast<long double>(v); }

/// Neumaier-compensated running sum.
template <class T = double>
class CompensatedSum {
public:
    void add(T x) noexcept {
        const T t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    CompensatedSum& operator+=(T x) noexcept {
        add(x);
        return *this;
    }
    T value() const noexcept { return sum_ + comp_; }

private:
    T sum_{0};
    T comp_{0};
};

/// Ordinary least squares fit y = a + b x.
struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double slope_stderr = 0.0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> v);
double mean(std::span<const double> v);

}  // namespace crl

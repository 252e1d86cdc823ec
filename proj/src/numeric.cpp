#include "crl/numeric.hpp"

#include <algorithm>
#include <numeric>

#include "crl/error.hpp"

namespace crl {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::DegenerateClass: return "degenerate class";
        case ErrorKind::DebiasUndefined: return "debias undefined";
        case ErrorKind::EmptyFamily: return "empty family";
        case ErrorKind::CapExceeded: return "cap exceeded";
        case ErrorKind::Overflow: return "overflow";
        case ErrorKind::Io: return "io";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

u128 binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    u128 result = 1;
    for (std::uint64_t i = 0; i < k; ++i) {
        // result == C(n, i); C(n, i) * (n - i) is divisible by (i + 1).
        u128 next;
        if (__builtin_mul_overflow(result, static_cast<u128>(n - i), &next))
            fail(ErrorKind::Overflow, "binomial(" + std::to_string(n) + ", " +
                                          std::to_string(k) + ") exceeds 128 bits");
        result = next / static_cast<u128>(i + 1);
    }
    return result;
}

long double binomial_ld(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0.0L;
    k = std::min(k, n - k);
    long double result = 1.0L;
    for (std::uint64_t i = 0; i < k; ++i)
        result = result * static_cast<long double>(n - i) / static_cast<long double>(i + 1);
    return result;
}

std::string to_string(u128 v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, ErrorKind::InvalidArgument,
            "fit_line needs at least two paired points");
    const auto n = static_cast<double>(x.size());
    const double mx = mean(x), my = mean(y);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    require(sxx > 0, ErrorKind::InvalidArgument, "fit_line: x values are constant");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (x.size() > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = y[i] - fit.intercept - fit.slope * x[i];
            rss += e * e;
        }
        fit.slope_stderr = std::sqrt(rss / (n - 2) / sxx);
    }
    return fit;
}

double median(std::vector<double> v) {
    require(!v.empty(), ErrorKind::InvalidArgument, "median of empty sample");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double mean(std::span<const double> v) {
    require(!v.empty(), ErrorKind::InvalidArgument, "mean of empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace crl

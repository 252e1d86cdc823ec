#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace crl {

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failed = 0;
    nlohmann::json failures = nlohmann::json::array();  // first few failing cases
    double seconds = 0.0;

    bool passed() const noexcept { return failed == 0 && cases > 0; }
};

struct VerifyReport {
    std::vector<SuiteResult> suites;
    bool passed() const noexcept;
    nlohmann::json to_json(bool include_timing = false) const;
};

struct VerifyOptions {
    std::optional<std::string> filter;  // run only the suite with this name
    std::uint64_t seed = 1;
};

const std::vector<std::string>& verify_suite_names();

/// Property suites: debias, counts, hypergeometric, unbiasedness, gradient, bounds.
VerifyReport run_verify(const VerifyOptions& opts);

}  // namespace crl

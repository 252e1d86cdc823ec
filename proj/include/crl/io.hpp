#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace crl {

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// FNV-1a of the compact JSON dump (keys sorted), as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// {"library", "version", "config_hash"} stamped into every output file.
nlohmann::json output_header(const nlohmann::json& config);

/// Same header as '#'-prefixed lines, written before a CSV table.
std::string csv_header_block(const nlohmann::json& config);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
/// Pretty-printed with a trailing newline; `header` is inserted under "header".
void write_json_file(const std::filesystem::path& path, nlohmann::json body, const nlohmann::json& config);

}  // namespace crl

#include "crl/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "crl/error.hpp"
#include "crl/version.hpp"

namespace crl {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const nlohmann::json& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
    return buf;
}

nlohmann::json output_header(const nlohmann::json& config) {
    return {{"library", kLibraryName}, {"version", kLibraryVersion}, {"config_hash", config_hash(config)}};
}

std::string csv_header_block(const nlohmann::json& config) {
    return std::string("# library: ") + kLibraryName + "\n# version: " + kLibraryVersion +
           "\n# config_hash: " + config_hash(config) + "\n";
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Config, "cannot open config " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, "config " + path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorKind::Io, "write failed: " + path.string());
}

void write_json_file(const std::filesystem::path& path, nlohmann::json body, const nlohmann::json& config) {
    body["header"] = output_header(config);
    write_text_file(path, body.dump(2) + "\n");
}

}  // namespace crl

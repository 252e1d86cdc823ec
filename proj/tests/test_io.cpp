#include "doctest.h"

#include "crl/io.hpp"
#include "crl/version.hpp"

using namespace crl;

TEST_CASE("fnv1a64 matches published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("config hash ignores key order and tracks values") {
    const auto a = nlohmann::json::parse(R"({"k": 2, "seed": 7})");
    const auto b = nlohmann::json::parse(R"({"seed": 7, "k": 2})");
    const auto c = nlohmann::json::parse(R"({"seed": 8, "k": 2})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("output header carries hash and version") {
    const nlohmann::json cfg{{"k", 1}};
    const auto h = output_header(cfg);
    CHECK(h["version"] == kLibraryVersion);
    CHECK(h["config_hash"] == config_hash(cfg));
    const auto block = csv_header_block(cfg);
    CHECK(block.find(config_hash(cfg)) != std::string::npos);
    CHECK(block.rfind("# ", 0) == 0);
}

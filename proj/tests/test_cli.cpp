#include "doctest.h"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "crl/experiment.hpp"
#include "crl/population.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr
    double seconds = 0;
};

Run run(const std::string& args) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string cmd = std::string(CRL_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    Run r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("crl_cli_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Lines that are neither '#' header lines nor the column header.
std::size_t data_rows(const std::string& csv, const std::string& column_prefix) {
    std::istringstream in(csv);
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#' && line.rfind(column_prefix, 0) != 0) ++rows;
    return rows;
}

}  // namespace

TEST_CASE("verify passes on a fresh build") {
    const auto d = scratch("verify");
    const auto r = run("verify --out " + d.string());
    INFO(r.output);
    CHECK(r.code == 0);
    CHECK(r.seconds < 300);
    const auto j = nlohmann::json::parse(slurp(d / "verify_report.json"));
    CHECK(j["passed"] == true);
    CHECK(j["suites"].size() == 6);
    CHECK(j["header"].contains("config_hash"));
}

TEST_CASE("verify with an injected tau sign flip fails naming the debias suite") {
    const auto d = scratch("fault");
    const auto r = run("verify --inject-fault tau-sign --out " + d.string());
    CHECK(r.code == 1);
    CHECK(r.output.find("FAIL debias") != std::string::npos);
}

TEST_CASE("verify filter runs only the named suite") {
    const auto d = scratch("filter");
    const auto r = run("verify --filter hypergeometric --out " + d.string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(d / "verify_report.json"));
    REQUIRE(j["suites"].size() == 1);
    CHECK(j["suites"][0]["name"] == "hypergeometric");
    CHECK(run("verify --filter nope --out " + d.string()).code == 2);
}

TEST_CASE("estimate is deterministic and reports precondition errors") {
    const auto d = scratch("estimate");
    write(d / "pop.json", R"({"population": {"class_probs": [0.5, 0.5], "support": [[1, 0], [0, 1], [1, 1]],
        "conditionals": [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]]}, "N": 150, "k": 2,
        "estimators": ["u_hl", "u_n", "tau_hat", "u_bar", "alg1", "alg2"], "u_bar_permutations": 16})");
    REQUIRE(run("estimate --config " + (d / "pop.json").string() + " --out " + (d / "a").string()).code == 0);
    REQUIRE(run("estimate --config " + (d / "pop.json").string() + " --out " + (d / "b").string()).code == 0);
    CHECK(slurp(d / "a" / "estimate.json") == slurp(d / "b" / "estimate.json"));

    write(d / "one.csv", "label,f1\n3,0.1\n3,0.4\n3,0.9\n");
    write(d / "one.json", R"({"dataset": "one.csv", "k": 1, "estimators": ["u_n"]})");
    const auto r = run("estimate --config " + (d / "one.json").string() + " --out " + d.string());
    CHECK(r.code == 3);
    CHECK(r.output.find("debias undefined: tau_hat = 1") != std::string::npos);

    write(d / "bad.json", "{not json");
    CHECK(run("estimate --config " + (d / "bad.json").string() + " --out " + d.string()).code == 2);
    write(d / "unknown.json", R"({"dataset": "one.csv", "estimators": ["u_star"]})");
    CHECK(run("estimate --config " + (d / "unknown.json").string() + " --out " + d.string()).code == 2);
}

TEST_CASE("estimate runs Alg1 at M = 3000 on the N = 5000 synthetic set within 10 s") {
    const auto d = scratch("alg1_timing");
    const crl::SyntheticConfig sc;
    const auto ds = crl::sample_dataset(crl::synthetic_population(sc), 5000, 1);
    {
        std::ofstream out(d / "train.csv");
        crl::write_dataset_csv(out, ds);
    }
    write(d / "cfg.json", R"({"dataset": "train.csv", "k": 5, "M": 3000, "estimators": ["alg1"],
        "representation": {"kind": "random_mlp", "hidden": [64], "out_dim": 32}})");
    const auto r = run("estimate --config " + (d / "cfg.json").string() + " --out " + d.string());
    INFO(r.output);
    CHECK(r.code == 0);
    MESSAGE("alg1 estimate wall time " << r.seconds << " s");
    CHECK(r.seconds < 10);
}

TEST_CASE("synthetic writes the comparison table and embeddings") {
    const auto d = scratch("synthetic");
    write(d / "cfg.json", R"({"N": 800, "N_test": 2000, "M_eval": 200,
        "train": {"steps": 5, "M": 100, "hidden": [8], "output_dim": 4}})");
    const auto r = run("synthetic --config " + (d / "cfg.json").string() + " --out " + d.string());
    INFO(r.output);
    REQUIRE(r.code == 0);
    CHECK(data_rows(slurp(d / "rare_classes.csv"), "class,") == 5);
    for (const char* f : {"synthetic_summary.json", "loss_curves.csv", "rare_classes.csv", "embeddings_alg1.csv",
                          "embeddings_alg2.csv", "model_alg1.json", "model_alg2.json"}) {
        INFO(f);
        const auto text = slurp(d / f);
        CHECK(text.find("config_hash") != std::string::npos);
        CHECK(text.find("0.1.0") != std::string::npos);
    }
    CHECK(slurp(d / "embeddings_alg1.csv").find("class,x,y\n") != std::string::npos);
}

TEST_CASE("study writes one csv row per grid point and a slope summary") {
    const auto d = scratch("study");
    write(d / "tau.json", R"({"study": "tau", "grid": [100, 1000, 10000, 100000], "trials": 200})");
    const auto r = run("study --config " + (d / "tau.json").string() + " --out " + d.string());
    REQUIRE(r.code == 0);
    CHECK(r.seconds < 120);
    CHECK(data_rows(slurp(d / "study.csv"), "N,") == 4);
    const auto j = nlohmann::json::parse(slurp(d / "study_summary.json"));
    CHECK(j.contains("slope"));
    CHECK(j.contains("slope_std_error"));

    write(d / "bounds.json", R"({"study": "bounds"})");
    CHECK(run("study --config " + (d / "bounds.json").string() + " --out " + d.string()).code == 0);
    write(d / "x.json", R"({"study": "nope"})");
    CHECK(run("study --config " + (d / "x.json").string() + " --out " + d.string()).code == 2);
}

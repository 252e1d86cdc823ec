// Command-line front end: verify, estimate, synthetic, study.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "crl/concentration.hpp"
#include "crl/error.hpp"
#include "crl/estimators.hpp"
#include "crl/experiment.hpp"
#include "crl/io.hpp"
#include "crl/population.hpp"
#include "crl/sampling.hpp"
#include "crl/verify.hpp"
#include "crl/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crl;

namespace {

enum Exit { kOk = 0, kSuiteFailure = 1, kConfigError = 2, kPrecondition = 3 };

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int threads = 1;
    bool timing = false;
};

json load_config(const Common& c) {
    if (c.config_path.empty()) return json::object();
    json j = read_json_file(c.config_path);
    require(j.is_object(), ErrorKind::Config, "config must be a JSON object");
    return j;
}

fs::path config_dir(const Common& c) {
    return c.config_path.empty() ? fs::current_path() : fs::absolute(c.config_path).parent_path();
}

void write_csv(const fs::path& path, const json& config, const std::string& table) {
    write_text_file(path, csv_header_block(config) + table);
}

// --- verify ---------------------------------------------------------------

int cmd_verify(const Common& c, const std::optional<std::string>& filter, const std::string& fault) {
    if (!fault.empty()) {
        require(fault == "tau-sign", ErrorKind::Config, "unknown fault '" + fault + "' (known: tau-sign)");
        fault::set_tau_hat_sign_flip(true);
    }
    VerifyOptions opts;
    opts.filter = filter;
    if (c.seed) opts.seed = *c.seed;
    const VerifyReport report = run_verify(opts);
    const json config{{"command", "verify"}, {"filter", filter ? json(*filter) : json(nullptr)}, {"seed", opts.seed},
                      {"fault", fault}};
    write_json_file(fs::path(c.out_dir) / "verify_report.json", report.to_json(c.timing), config);
    for (const auto& s : report.suites) {
        std::cout << (s.passed() ? "PASS " : "FAIL ") << s.name << " (" << s.cases - s.failed << "/" << s.cases
                  << " cases)";
        if (c.timing) std::cout << " " << s.seconds << " s";
        std::cout << "\n";
        if (!s.passed())
            for (const auto& f : s.failures) std::cout << "  " << f.dump() << "\n";
    }
    return report.passed() ? kOk : kSuiteFailure;
}

// --- estimate -------------------------------------------------------------

Representation representation_from(const json& j, std::size_t dim, std::uint64_t seed) {
    if (j.is_null()) return Representation::random_linear(dim, dim, seed);
    if (j.contains("weights")) return Representation::from_json(j);
    const auto kind = j.value("kind", std::string("random_linear"));
    const std::uint64_t s = j.value("seed", seed);
    if (kind == "random_linear")
        return Representation::random_linear(dim, j.value("out_dim", dim), s, j.value("scale", 1.0));
    if (kind == "zero") return Representation::zero_linear(dim, j.value("out_dim", dim));
    if (kind == "random_mlp") {
        std::vector<std::size_t> dims{dim};
        for (std::size_t h : j.value("hidden", std::vector<std::size_t>{64})) dims.push_back(h);
        dims.push_back(j.value("out_dim", std::size_t{32}));
        return Representation::random_mlp(dims, s);
    }
    fail(ErrorKind::Config, "unknown representation kind '" + kind + "'");
}

LabeledDataset dataset_from(const json& cfg, const fs::path& base, std::uint64_t seed) {
    if (cfg.contains("dataset")) {
        fs::path p = cfg.at("dataset").get<std::string>();
        if (p.is_relative()) p = base / p;
        return load_dataset_csv(p.string());
    }
    require(cfg.contains("population"), ErrorKind::Config, "config needs 'dataset' (CSV path) or 'population'");
    require(cfg.contains("N"), ErrorKind::Config, "sampling a population needs 'N'");
    return sample_dataset(population_from_json(cfg.at("population")), cfg.at("N").get<std::size_t>(), seed);
}

int cmd_estimate(const Common& c) {
    json cfg = load_config(c);
    if (c.seed) cfg["seed"] = *c.seed;
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});
    const int k = cfg.value("k", 1);
    require(k >= 1, ErrorKind::Config, "k >= 1 required");
    const auto names = cfg.value("estimators", std::vector<std::string>{"u_hl", "u_n", "tau_hat"});
    const LabeledDataset ds = dataset_from(cfg, config_dir(c), mix_stream(seed, 0xda7a));
    const Representation rep = representation_from(cfg.value("representation", json()), ds.dim(), seed);
    const LossSpec spec{k, cfg.contains("clamp") ? std::optional<double>(cfg.at("clamp").get<double>()) : std::nullopt};
    EstimatorOptions opts;
    const auto route = cfg.value("route", std::string("auto"));
    require(route == "auto" || route == "enumerate" || route == "aggregate", ErrorKind::Config,
            "route must be auto, enumerate or aggregate");
    opts.route = route == "auto" ? EstimatorRoute::Auto
                 : route == "enumerate" ? EstimatorRoute::Enumerate : EstimatorRoute::Aggregate;
    const std::size_t m = cfg.value("M", std::size_t{3000});

    json out{{"dataset", {{"N", ds.size()}, {"R", ds.num_classes()}, {"dim", ds.dim()}}}, {"k", k}};
    json est = json::object();
    std::optional<EstimatorContext> ctx;
    auto context = [&]() -> const EstimatorContext& {
        if (!ctx) ctx.emplace(ds, rep, spec, opts);
        return *ctx;
    };
    for (const auto& name : names) {
        if (name == "u_hl") {
            est[name] = to_json(u_hl(context()), c.timing);
        } else if (name == "u_n") {
            est[name] = to_json(u_n(context()), c.timing);
        } else if (name == "tau_hat") {
            est[name] = tau_hat(ds.stats(), k);
        } else if (name == "u_bar") {
            const auto t = cfg.value("u_bar_permutations", std::size_t{256});
            est[name] = to_json(u_bar(context(), UBarMode::sampled(t, mix_stream(seed, 0xba))), c.timing);
        } else if (name == "alg1") {
            const auto r = algorithm1_erm(ds, rep, spec, m, mix_stream(seed, 0xa1));
            est[name] = {{"value", r.value}, {"M", m}, {"excluded_mass", r.excluded_mass}};
        } else if (name == "alg2") {
            SamplingPlan plan{Algorithm::Alg2, k, m, mix_stream(seed, 0xa2)};
            if (cfg.contains("plan")) {
                json pj = to_json(plan);
                pj.update(cfg.at("plan"));
                plan = sampling_plan_from_json(pj);
            }
            est[name] = {{"value", run_plan(ds, rep, spec, plan)}, {"plan", to_json(plan)}};
        } else {
            fail(ErrorKind::Config, "unknown estimator '" + name + "' (known: u_hl, u_n, tau_hat, u_bar, alg1, alg2)");
        }
    }
    out["estimators"] = est;
    json effective = cfg;
    effective["command"] = "estimate";
    write_json_file(fs::path(c.out_dir) / "estimate.json", out, effective);
    std::cout << est.dump(2) << "\n";
    return kOk;
}

// --- synthetic ------------------------------------------------------------

int cmd_synthetic(const Common& c) {
    json cfg = load_config(c);
    if (c.seed) cfg["seed"] = *c.seed;
    const SyntheticConfig sc = synthetic_config_from_json(cfg);
    const json effective{{"command", "synthetic"}, {"synthetic", to_json(sc)}};
    const fs::path out = c.out_dir;
    std::cerr << "training two models (" << sc.train.steps << " steps each)...\n";
    const SyntheticResult r = run_synthetic(sc);

    write_json_file(out / "synthetic_summary.json", summary_json(r, c.timing), effective);
    std::ostringstream curves;
    curves.precision(17);
    curves << "step,alg1,alg2\n";
    const std::size_t steps = std::max(r.alg1.report.loss_curve.size(), r.alg2.report.loss_curve.size());
    for (std::size_t i = 0; i < steps; ++i) {
        curves << i << ',';
        if (i < r.alg1.report.loss_curve.size()) curves << r.alg1.report.loss_curve[i];
        curves << ',';
        if (i < r.alg2.report.loss_curve.size()) curves << r.alg2.report.loss_curve[i];
        curves << '\n';
    }
    write_csv(out / "loss_curves.csv", effective, curves.str());

    std::ostringstream rare;
    rare.precision(17);
    rare << "class,train_count,test_count,loss_alg1,loss_alg2\n";
    for (const auto& row : r.rare) {
        rare << row.label << ',' << row.train_count << ',' << row.test_count << ',';
        if (row.loss_alg1) rare << *row.loss_alg1;
        rare << ',';
        if (row.loss_alg2) rare << *row.loss_alg2;
        rare << '\n';
    }
    write_csv(out / "rare_classes.csv", effective, rare.str());

    // 2-D projections of the rare-class test points
    std::vector<LabeledSample> pts;
    for (std::size_t i = 0; i < r.test_set.size(); ++i) {
        const long label = r.test_set.original_label(r.test_set.label(i));
        for (const auto& row : r.rare)
            if (row.label == label) {
                const auto f = r.test_set.features(i);
                pts.push_back({std::vector<double>(f.begin(), f.end()), label});
            }
    }
    const LabeledDataset rare_ds = LabeledDataset::build(pts);
    for (const auto& [name, model] : {std::pair{"alg1", &r.alg1}, std::pair{"alg2", &r.alg2}}) {
        const auto proj = project_2d(embed(model->rep, rare_ds));
        if (!proj.notice.empty()) std::cerr << name << ": " << proj.notice << "\n";
        std::ostringstream csv;
        write_projection_csv(csv, rare_ds, proj);
        write_csv(out / (std::string("embeddings_") + name + ".csv"), effective, csv.str());
        write_json_file(out / (std::string("model_") + name + ".json"), {{"representation", model->rep.to_json()}},
                        effective);
    }

    std::cout << "class  train  test  loss_alg1  loss_alg2\n";
    for (const auto& row : r.rare) {
        std::cout << row.label << "  " << row.train_count << "  " << row.test_count << "  "
                  << (row.loss_alg1 ? std::to_string(*row.loss_alg1) : "-") << "  "
                  << (row.loss_alg2 ? std::to_string(*row.loss_alg2) : "-") << "\n";
    }
    std::cout << "alg2 lower on " << r.alg2_wins() << "/" << r.rare.size() << " rare classes\n";
    return kOk;
}

// --- study ----------------------------------------------------------------

int cmd_study(const Common& c) {
    json cfg = load_config(c);
    if (c.seed) cfg["seed"] = *c.seed;
    const auto kind = cfg.value("study", std::string("tau"));
    json effective = cfg;
    effective["command"] = "study";
    const fs::path out = c.out_dir;
    if (kind == "bounds") {
        const auto ks = cfg.value("k", std::vector<int>{2, 5, 10});
        const auto draws = cfg.value("draws", std::size_t{1000});
        for (int k : ks) require(k >= 2, ErrorKind::Config, "bound suite needs k >= 2");
        const auto r = bound_inequality_suite(ks, draws, cfg.value("seed", std::uint64_t{1}));
        std::ostringstream csv;
        csv.precision(17);
        csv << "k,typical_draws,typical_violations,typical_min_margin,general_draws,general_violations,general_min_margin\n";
        for (const auto& b : r.checks)
            csv << b.k << ',' << b.typical_draws << ',' << b.typical_violations << ',' << b.typical_min_margin << ','
                << b.general_draws << ',' << b.general_violations << ',' << b.general_min_margin << '\n';
        write_csv(out / "study.csv", effective, csv.str());
        write_json_file(out / "study_summary.json", to_json(r), effective);
        std::cout << "bound inequality violations: " << r.violations() << "\n";
        return r.violations() == 0 ? kOk : kSuiteFailure;
    }
    RateStudyResult r;
    if (kind == "tau") {
        json tc = cfg;
        if (!tc.contains("rho") && !tc.contains("longtail"))
            tc["longtail"] = {{"R", 10}, {"rho_max", 0.5}, {"decay", 0.7}};
        r = tau_consistency_study(tau_study_from_json(tc));
    } else if (kind == "estimator")
        r = estimator_rate_study(estimator_study_from_json(cfg));
    else
        fail(ErrorKind::Config, "unknown study '" + kind + "' (known: tau, estimator, bounds)");
    std::ostringstream csv;
    write_rate_csv(csv, r);
    write_csv(out / "study.csv", effective, csv.str());
    write_json_file(out / "study_summary.json", to_json(r), effective);
    std::cout << csv.str();
    if (r.fit)
        std::cout << "slope " << r.fit->slope << " (se " << r.fit->std_error << ", fitted on " << r.fitted_on << ")\n";
    else
        std::cout << "slope undefined: degenerate study\n";
    return kOk;
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config: return kConfigError;
        default: return kPrecondition;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Supervised contrastive risk estimators: verification, estimation and experiments"};
    app.set_version_flag("--version", std::string(kLibraryName) + " " + kLibraryVersion);
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Override the config seed");
        sub->add_option("--out", common.out_dir, "Output directory")->capture_default_str();
        sub->add_option("--threads", common.threads, "Worker cap (computation is single-threaded)")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_flag("--timing", common.timing, "Include wall-clock timings in outputs");
    };
    auto* verify = app.add_subcommand("verify", "Run the property suites");
    add_common(verify);
    std::optional<std::string> filter;
    std::string fault;
    verify->add_option("--filter", filter, "Run only this suite");
    verify->add_option("--inject-fault", fault, "Mutation sanity check (tau-sign)")->group("");
    auto* estimate = app.add_subcommand("estimate", "Evaluate estimators on a dataset");
    add_common(estimate);
    auto* synthetic = app.add_subcommand("synthetic", "Long-tailed synthetic training experiment");
    add_common(synthetic);
    auto* study = app.add_subcommand("study", "Concentration and bound studies");
    add_common(study);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }
    try {
        if (*verify) return cmd_verify(common, filter, fault);
        if (*estimate) return cmd_estimate(common);
        if (*synthetic) return cmd_synthetic(common);
        if (*study) return cmd_study(common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPrecondition;
    }
    return kOk;
}

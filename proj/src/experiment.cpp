#include "crl/experiment.hpp"

#include <chrono>
#include <cmath>

#include "crl/error.hpp"
#include "crl/rng.hpp"

namespace crl {

SyntheticConfig::SyntheticConfig() {
    train.k = 5;
    train.m = 3000;
    train.steps = 2000;
    train.learning_rate = 0.05;
}

void SyntheticConfig::validate() const {
    require(num_classes >= 2, ErrorKind::Config, "synthetic: at least 2 classes required");
    require(rho_max > 0 && rho_max < 1, ErrorKind::Config, "synthetic: rho_max must lie in (0, 1)");
    require(decay > 0 && decay <= 1, ErrorKind::Config, "synthetic: decay must lie in (0, 1]");
    require(dim >= 1 && variance > 0 && mean_scale >= 0, ErrorKind::Config,
            "synthetic: dim >= 1, variance > 0, mean_scale >= 0 required");
    require(n_train >= 2 && n_test >= 2, ErrorKind::Config, "synthetic: n_train, n_test >= 2 required");
    require(rare_count >= 1 && m_eval >= 1, ErrorKind::Config, "synthetic: rare_count, m_eval >= 1 required");
    train.validate();
}

nlohmann::json to_json(const SyntheticConfig& c) {
    auto t = to_json(c.train);
    t.erase("estimator");
    return {{"R", c.num_classes},      {"rho_max", c.rho_max}, {"decay", c.decay},
            {"dim", c.dim},            {"mean_scale", c.mean_scale}, {"variance", c.variance},
            {"N", c.n_train},          {"N_test", c.n_test},   {"rare_count", c.rare_count},
            {"M_eval", c.m_eval},      {"seed", c.seed},       {"train", t}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    try {
        c.num_classes = j.value("R", c.num_classes);
        c.rho_max = j.value("rho_max", c.rho_max);
        c.decay = j.value("decay", c.decay);
        c.dim = j.value("dim", c.dim);
        c.mean_scale = j.value("mean_scale", c.mean_scale);
        c.variance = j.value("variance", c.variance);
        c.n_train = j.value("N", c.n_train);
        c.n_test = j.value("N_test", c.n_test);
        c.rare_count = j.value("rare_count", c.rare_count);
        c.m_eval = j.value("M_eval", c.m_eval);
        c.seed = j.value("seed", c.seed);
        if (j.contains("train")) {
            nlohmann::json t = to_json(c.train);
            t.update(j.at("train"));
            t.erase("estimator");
            c.train = train_config_from_json(t);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("synthetic config: ") + e.what());
    }
    c.validate();
    return c;
}

GaussianMixtureSpec synthetic_population(const SyntheticConfig& c) {
    GaussianMixtureSpec g;
    g.class_probs = longtail_probs(c.num_classes, c.rho_max, c.decay);
    Philox rng(c.seed, 0x3ea5);
    g.means.assign(c.num_classes, std::vector<double>(c.dim));
    for (auto& mu : g.means)
        for (auto& x : mu) x = c.mean_scale * standard_normal(rng);
    g.variances.assign(c.num_classes, c.variance);
    return g;
}

std::size_t SyntheticResult::alg2_wins() const {
    std::size_t wins = 0;
    for (const auto& row : rare)
        if (row.loss_alg1 && row.loss_alg2 && *row.loss_alg2 < *row.loss_alg1) ++wins;
    return wins;
}

SyntheticResult run_synthetic(const SyntheticConfig& c) {
    c.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto pop = synthetic_population(c);
    auto train_ds = sample_dataset(pop, c.n_train, mix_stream(c.seed, 1));
    auto test_ds = sample_dataset(pop, c.n_test, mix_stream(c.seed, 2));

    TrainConfig tc = c.train;
    tc.seed = mix_stream(c.seed, 3, tc.seed);
    tc.init_seed = mix_stream(c.seed, 4, tc.init_seed);
    const Representation init = initial_representation(tc, train_ds.dim());
    tc.estimator = Algorithm::Alg1;
    auto alg1 = train(train_ds, tc, init);
    tc.estimator = Algorithm::Alg2;
    auto alg2 = train(train_ds, tc, init);

    const LossSpec spec{tc.k, std::nullopt};
    const std::uint64_t eval_seed = mix_stream(c.seed, 5);
    const auto l1 = rare_class_test_loss(alg1.rep, test_ds, spec, c.rare_count, c.m_eval, eval_seed);
    const auto l2 = rare_class_test_loss(alg2.rep, test_ds, spec, c.rare_count, c.m_eval, eval_seed);

    std::vector<RareClassRow> rare;
    for (std::size_t i = 0; i < l1.size(); ++i) {
        RareClassRow row;
        row.label = l1[i].label;
        row.test_count = l1[i].count;
        for (std::size_t r = 0; r < train_ds.num_classes(); ++r)
            if (train_ds.original_label(r) == row.label) row.train_count = train_ds.class_count(r);
        row.loss_alg1 = l1[i].loss;
        row.loss_alg2 = l2[i].loss;
        rare.push_back(row);
    }
    SyntheticResult res{c, std::move(train_ds), std::move(test_ds), std::move(alg1), std::move(alg2),
                        std::move(rare), 0.0};
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

nlohmann::json summary_json(const SyntheticResult& r, bool include_timing) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rare) {
        nlohmann::json j{{"class", row.label}, {"train_count", row.train_count}, {"test_count", row.test_count}};
        j["loss_alg1"] = row.loss_alg1 ? nlohmann::json(*row.loss_alg1) : nlohmann::json(nullptr);
        j["loss_alg2"] = row.loss_alg2 ? nlohmann::json(*row.loss_alg2) : nlohmann::json(nullptr);
        rows.push_back(j);
    }
    auto model = [&](const TrainResult& t) {
        nlohmann::json m{{"steps_run", t.report.steps_run},
                         {"stopped_early", t.report.stopped_early},
                         {"final_loss", t.report.loss_curve.empty() ? 0.0 : t.report.loss_curve.back()},
                         {"reported_bound", t.report.reported_bound}};
        if (include_timing) m["wall_time"] = t.report.wall_time;
        return m;
    };
    nlohmann::json out{{"config", to_json(r.config)},
                       {"rare_classes", rows},
                       {"alg2_wins", r.alg2_wins()},
                       {"alg1", model(r.alg1)},
                       {"alg2", model(r.alg2)}};
    if (include_timing) out["wall_time"] = r.wall_time;
    return out;
}

}  // namespace crl

#include "crl/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "crl/error.hpp"
#include "crl/numeric.hpp"
#include "crl/rng.hpp"

namespace crl {

void TrainConfig::validate() const {
    require(k >= 1, ErrorKind::Config, "train: k >= 1 required");
    require(m >= 1, ErrorKind::Config, "train: M >= 1 required");
    require(steps >= 1, ErrorKind::Config, "train: steps >= 1 required");
    require(learning_rate >= 0 && std::isfinite(learning_rate), ErrorKind::Config,
            "train: learning rate must be finite and non-negative");
    require(output_dim >= 1, ErrorKind::Config, "train: output_dim >= 1 required");
    require(init_output_scale > 0 && std::isfinite(init_output_scale), ErrorKind::Config,
            "train: init_output_scale must be positive");
    require(!early_stop || early_stop_window >= 1, ErrorKind::Config, "train: window >= 1 required");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"estimator", to_string(c.estimator)},
            {"k", c.k},
            {"M", c.m},
            {"steps", c.steps},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"init_seed", c.init_seed},
            {"hidden", c.hidden},
            {"output_dim", c.output_dim},
            {"init_output_scale", c.init_output_scale},
            {"early_stop", c.early_stop},
            {"early_stop_window", c.early_stop_window},
            {"early_stop_tol", c.early_stop_tol}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.contains("estimator")) {
            const auto e = j.at("estimator").get<std::string>();
            require(e == "alg1" || e == "alg2", ErrorKind::Config, "estimator must be alg1 or alg2");
            c.estimator = e == "alg1" ? Algorithm::Alg1 : Algorithm::Alg2;
        }
        c.k = j.value("k", c.k);
        c.m = j.value("M", c.m);
        c.steps = j.value("steps", c.steps);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.seed = j.value("seed", c.seed);
        c.init_seed = j.value("init_seed", c.init_seed);
        c.hidden = j.value("hidden", c.hidden);
        c.output_dim = j.value("output_dim", c.output_dim);
        c.init_output_scale = j.value("init_output_scale", c.init_output_scale);
        c.early_stop = j.value("early_stop", c.early_stop);
        c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
        c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

Representation initial_representation(const TrainConfig& c, std::size_t in_dim) {
    std::vector<std::size_t> dims{in_dim};
    dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
    dims.push_back(c.output_dim);
    Representation rep = Representation::random_mlp(dims, c.init_seed);
    // last layer: weights then bias at the end of the buffer
    const std::size_t last = dims[dims.size() - 2] * dims.back();
    auto p = rep.params();
    for (std::size_t i = p.size() - dims.back() - last; i < p.size() - dims.back(); ++i)
        p[i] *= c.init_output_scale;
    return rep;
}

TrainResult train(const LabeledDataset& train_ds, const TrainConfig& c) {
    return train(train_ds, c, initial_representation(c, train_ds.dim()));
}

TrainResult train(const LabeledDataset& ds, const TrainConfig& c, Representation rep) {
    c.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const LossSpec spec{c.k, std::nullopt};
    // The class law does not change between steps; only the draws do.
    const PlanLaw base = plan_law(ds, SamplingPlan{c.estimator, c.k, c.m, c.seed});
    TrainReport report;
    report.excluded_mass = base.excluded_mass;
    report.loss_curve.reserve(c.steps);

    std::vector<ContrastiveTuple> tuples;
    std::vector<double> weights;
    CompensatedSum<double> window_now, window_prev;
    for (std::size_t step = 0; step < c.steps; ++step) {
        PlanLaw law = base;
        law.plan.seed = mix_stream(c.seed, step);
        auto draws = draw_plan(ds, law);
        tuples.clear();
        weights.clear();
        for (auto& d : draws)
            if (d.tuple && d.weight != 0.0) {
                tuples.push_back(std::move(*d.tuple));
                weights.push_back(d.weight);
            }
        require(!tuples.empty(), ErrorKind::EmptyFamily, "sub-sample contributed no tuples");
        // mean over all M draws, the zero-weight ones included
        const double scale = static_cast<double>(tuples.size()) / static_cast<double>(c.m);
        for (auto& w : weights) w *= scale;
        const WeightedLoss wl = weighted_loss_and_grad(rep, spec, ds, tuples, weights);
        if (!std::isfinite(wl.value))
            fail(ErrorKind::InvalidArgument, "non-finite training objective at step " + std::to_string(step));
        report.loss_curve.push_back(wl.value);
        report.reported_bound = std::max(report.reported_bound, wl.max_tuple_loss);
        auto params = rep.params();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= c.learning_rate * wl.grad[i];
        report.steps_run = step + 1;

        if (c.early_stop && report.steps_run >= 2 * c.early_stop_window &&
            report.steps_run % c.early_stop_window == 0) {
            const auto& lc = report.loss_curve;
            const std::size_t w = c.early_stop_window;
            const double now = std::accumulate(lc.end() - static_cast<long>(w), lc.end(), 0.0) / w;
            const double prev =
                std::accumulate(lc.end() - static_cast<long>(2 * w), lc.end() - static_cast<long>(w), 0.0) / w;
            if (prev - now < c.early_stop_tol) {
                report.stopped_early = true;
                break;
            }
        }
    }
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(rep), std::move(report)};
}

std::vector<ClassLoss> rare_class_test_loss(const Representation& rep, const LabeledDataset& test_ds,
                                            const LossSpec& spec, std::size_t rare_count,
                                            std::size_t m_eval, std::uint64_t seed) {
    require(rare_count >= 1 && m_eval >= 1, ErrorKind::InvalidArgument,
            "rare_count and M_eval must be positive");
    std::vector<std::size_t> order(test_ds.num_classes());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return test_ds.class_count(a) < test_ds.class_count(b);
    });
    order.resize(std::min(rare_count, order.size()));
    const RowMatrix emb = embed(rep, test_ds);
    std::vector<ClassLoss> out;
    for (std::size_t r : order) {
        ClassLoss cl;
        cl.cls = r;
        cl.label = test_ds.original_label(r);
        cl.count = test_ds.class_count(r);
        if (cl.count < 2 || test_ds.size() - cl.count < static_cast<std::size_t>(spec.k)) {
            cl.notice = "class " + std::to_string(cl.label) + " skipped: too few samples for a test tuple";
            out.push_back(cl);
            continue;
        }
        Philox g(seed, mix_stream(0x7e57, r));
        const FamilySpec fs{FamilyKind::Theta, r, spec.k, std::nullopt};
        CompensatedSum<double> s;
        for (std::size_t j = 0; j < m_eval; ++j) s += tuple_kernel(emb, sample_tuple_uniform(test_ds, fs, g), spec);
        cl.loss = s.value() / static_cast<double>(m_eval);
        out.push_back(cl);
    }
    return out;
}

namespace {

void orient(Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > 1e-14) {
            if (v(i) < 0) v = -v;
            return;
        }
}

// Dominant eigenpair of a symmetric PSD matrix.
std::pair<double, Eigen::VectorXd> power_iteration(const Eigen::MatrixXd& c) {
    const Eigen::Index d = c.rows();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));
    // a fixed, non-symmetric start avoids landing orthogonal to the target
    for (Eigen::Index i = 0; i < d; ++i) v(i) += 0.01 * static_cast<double>(i + 1);
    v.normalize();
    double lambda = 0;
    for (int it = 0; it < 200000; ++it) {
        Eigen::VectorXd w = c * v;
        const double norm = w.norm();
        if (norm == 0) return {0.0, Eigen::VectorXd::Zero(d)};
        w /= norm;
        const double next = w.dot(c * w);
        const bool done = (w - v).norm() < 1e-13 || (it > 50 && std::abs(next - lambda) <= 1e-15 * std::abs(next));
        v = w;
        lambda = next;
        if (done) break;
    }
    return {lambda, v};
}

}  // namespace

Projection project_2d(const RowMatrix& x) {
    require(x.rows() >= 2 && x.cols() >= 2, ErrorKind::InvalidArgument,
            "project_2d needs >= 2 embeddings of dimension >= 2");
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
    Projection p;
    p.total_variance = cov.trace();
    p.coords.assign(static_cast<std::size_t>(x.rows()), {0.0, 0.0});
    const double tiny = 1e-12 * std::max(1.0, p.total_variance);
    if (p.total_variance <= tiny) {
        p.notice = "degenerate covariance: all projections are zero";
        return p;
    }
    Eigen::MatrixXd deflated = cov;
    for (int comp = 0; comp < 2; ++comp) {
        auto [lambda, v] = power_iteration(deflated);
        if (lambda <= tiny) {
            p.notice = "covariance has rank < 2: second coordinate is zero";
            break;
        }
        orient(v);
        p.eigenvalues[static_cast<std::size_t>(comp)] = lambda;
        const Eigen::VectorXd proj = centered * v;
        for (Eigen::Index i = 0; i < proj.size(); ++i) p.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(comp)] = proj(i);
        deflated -= lambda * v * v.transpose();
    }
    return p;
}

void write_projection_csv(std::ostream& out, const LabeledDataset& ds, const Projection& p) {
    require(p.coords.size() == ds.size(), ErrorKind::InvalidArgument, "projection size != dataset size");
    out << "class,x,y\n";
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i)
        out << ds.original_label(ds.label(i)) << ',' << p.coords[i][0] << ',' << p.coords[i][1] << '\n';
}

}  // namespace crl

#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "crl/error.hpp"
#include "crl/population.hpp"
#include "crl/training.hpp"
#include "oracles.hpp"

using namespace crl;

namespace {

LabeledDataset small_mixture(std::size_t n, std::uint64_t seed) {
    GaussianMixtureSpec g;
    g.class_probs = {0.5, 0.3, 0.2};
    g.means = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
    g.variances = {0.2, 0.2, 0.2};
    return sample_dataset(g, n, seed);
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.k = 2;
    c.m = 40;
    c.steps = 5;
    c.learning_rate = 0.1;
    c.hidden = {6};
    c.output_dim = 3;
    return c;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto ds = small_mixture(60, 3);
    auto c = tiny_config();
    c.learning_rate = 0.0;
    const auto init = initial_representation(c, ds.dim());
    const auto res = train(ds, c);
    REQUIRE(res.rep.num_params() == init.num_params());
    for (std::size_t i = 0; i < init.num_params(); ++i) CHECK(res.rep.params()[i] == init.params()[i]);
    CHECK(res.report.steps_run == c.steps);
}

TEST_CASE("one SGD step matches a per-tuple gradient oracle") {
    const auto ds = small_mixture(50, 4);
    for (Algorithm alg : {Algorithm::Alg1, Algorithm::Alg2}) {
        auto c = tiny_config();
        c.estimator = alg;
        c.steps = 1;
        const auto init = initial_representation(c, ds.dim());
        const auto res = train(ds, c);

        PlanLaw law = plan_law(ds, SamplingPlan{alg, c.k, c.m, c.seed});
        law.plan.seed = mix_stream(c.seed, 0);
        const auto draws = draw_plan(ds, law);
        const LossSpec spec{c.k, std::nullopt};
        std::vector<double> grad(init.num_params(), 0.0);
        double value = 0;
        for (const auto& d : draws) {
            if (!d.tuple) continue;
            value += d.weight * tuple_loss(init, spec, ds, *d.tuple) / static_cast<double>(c.m);
            const auto g = tuple_loss_grad(init, spec, ds, *d.tuple);
            for (std::size_t i = 0; i < g.size(); ++i) grad[i] += d.weight * g[i] / static_cast<double>(c.m);
        }
        CHECK(res.report.loss_curve.at(0) == doctest::Approx(value).epsilon(1e-12));
        for (std::size_t i = 0; i < grad.size(); ++i)
            CHECK(res.rep.params()[i] ==
                  doctest::Approx(init.params()[i] - c.learning_rate * grad[i]).epsilon(1e-10));
    }
}

TEST_CASE("training is deterministic for a fixed config") {
    const auto ds = small_mixture(60, 5);
    const auto c = tiny_config();
    const auto a = train(ds, c);
    const auto b = train(ds, c);
    CHECK(a.report.loss_curve == b.report.loss_curve);
    for (std::size_t i = 0; i < a.rep.num_params(); ++i) CHECK(a.rep.params()[i] == b.rep.params()[i]);
    auto c2 = c;
    c2.seed = 99;
    CHECK(train(ds, c2).report.loss_curve != a.report.loss_curve);
}

TEST_CASE("constant representation gives ln(1+k) per step") {
    const auto ds = small_mixture(40, 6);
    auto c = tiny_config();
    c.learning_rate = 0.0;
    const auto res = train(ds, c, Representation::mlp({3, 6, 3}));
    for (double v : res.report.loss_curve) CHECK(v == doctest::Approx(std::log(1.0 + c.k)).epsilon(1e-14));
    CHECK(res.report.reported_bound == doctest::Approx(std::log(1.0 + c.k)));
}

TEST_CASE("training lowers the objective on separable data") {
    const auto ds = small_mixture(120, 7);
    auto c = tiny_config();
    c.steps = 150;
    c.m = 100;
    const auto res = train(ds, c);
    const auto& lc = res.report.loss_curve;
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < 20; ++i) head += lc[i], tail += lc[lc.size() - 1 - i];
    CHECK(tail < head);
}

TEST_CASE("early stop fires on a flat objective") {
    const auto ds = small_mixture(40, 8);
    auto c = tiny_config();
    c.learning_rate = 0.0;
    c.steps = 1000;
    c.early_stop = true;
    c.early_stop_window = 50;
    const auto res = train(ds, c, Representation::mlp({3, 6, 3}));
    CHECK(res.report.stopped_early);
    CHECK(res.report.steps_run == 100);
}

TEST_CASE("train config rejects bad values") {
    auto c = tiny_config();
    c.k = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"estimator", "alg3"}}), Error);
    const auto back = train_config_from_json(to_json(tiny_config()));
    CHECK(back.m == 40);
    CHECK(back.hidden == std::vector<std::size_t>{6});
}

TEST_CASE("rare class test loss picks the smallest classes") {
    const auto ds = oracle::make_dataset({6, 4, 1, 3}, 2, 11);
    const auto rep = Representation::random_linear(2, 2, 1);
    const LossSpec spec{2, std::nullopt};
    const auto out = rare_class_test_loss(rep, ds, spec, 3, 200, 5);
    REQUIRE(out.size() == 3);
    CHECK(out[0].count == 1);
    CHECK_FALSE(out[0].loss);
    CHECK_FALSE(out[0].notice.empty());
    CHECK(out[1].count == 3);
    CHECK(out[2].count == 4);
    REQUIRE(out[1].loss);
    // Theta-form mean over many draws approaches the exact family mean
    const auto e = oracle::embed_naive(rep, ds);
    const auto big = rare_class_test_loss(rep, ds, spec, 3, 200000, 6);
    CHECK(*big[1].loss == doctest::Approx(oracle::theta_family(ds, e, big[1].cls, 2).mean()).epsilon(0.01));
    CHECK(*big[2].loss == doctest::Approx(oracle::theta_family(ds, e, big[2].cls, 2).mean()).epsilon(0.01));
}

TEST_CASE("projection recovers a rotated rank-2 cloud") {
    std::mt19937 gen(1);
    std::normal_distribution<double> nd;
    RowMatrix pts(200, 3);
    const double c = std::cos(0.7), s = std::sin(0.7);
    for (int i = 0; i < 200; ++i) {
        const double u = 3 * nd(gen), v = nd(gen);
        pts.row(i) << c * u - s * v, s * u + c * v, 0.0;
    }
    const auto p = project_2d(pts);
    CHECK(p.captured_ratio() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(p.eigenvalues[0] > p.eigenvalues[1]);
    // distances are preserved by the projection of a planar cloud
    for (int i = 1; i < 200; i += 37) {
        const double d3 = (pts.row(i) - pts.row(0)).norm();
        const double dx = p.coords[i][0] - p.coords[0][0], dy = p.coords[i][1] - p.coords[0][1];
        CHECK(std::hypot(dx, dy) == doctest::Approx(d3).epsilon(1e-8));
    }
}

TEST_CASE("projection of identical points is zero with a notice") {
    RowMatrix pts = RowMatrix::Constant(10, 4, 2.5);
    const auto p = project_2d(pts);
    CHECK_FALSE(p.notice.empty());
    for (const auto& xy : p.coords) CHECK((xy[0] == 0.0 && xy[1] == 0.0));
}

TEST_CASE("projection variance matches a dense eigensolver") {
    std::mt19937 gen(2);
    std::normal_distribution<double> nd;
    RowMatrix pts(300, 5);
    const double scale[5] = {4.0, 2.5, 1.5, 1.0, 0.5};
    for (int i = 0; i < 300; ++i)
        for (int j = 0; j < 5; ++j) pts(i, j) = scale[j] * nd(gen) + 0.3 * (j > 0 ? pts(i, 0) : 0.0);
    const auto p = project_2d(pts);

    const RowMatrix cen = pts.rowwise() - pts.colwise().mean();
    const Eigen::MatrixXd cov = cen.transpose() * cen / 299.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const auto ev = es.eigenvalues();
    const double ratio = (ev(4) + ev(3)) / ev.sum();
    CHECK(std::abs(p.captured_ratio() - ratio) < 1e-6);
    CHECK(p.eigenvalues[0] == doctest::Approx(ev(4)).epsilon(1e-9));

    // sign convention: first nonzero loading is positive, so the coordinate
    // equals the centered data dotted with that oriented eigenvector
    Eigen::VectorXd v = es.eigenvectors().col(4);
    if (v(0) < 0) v = -v;
    const Eigen::VectorXd proj = cen * v;
    for (int i = 0; i < 300; i += 50) CHECK(p.coords[i][0] == doctest::Approx(proj(i)).epsilon(1e-6));
}

TEST_CASE("projection csv has a header and one row per sample") {
    const auto ds = oracle::make_dataset({3, 2}, 3, 1);
    const auto emb = embed(Representation::random_linear(3, 3, 2), ds);
    std::ostringstream os;
    write_projection_csv(os, ds, project_2d(emb));
    const std::string s = os.str();
    CHECK(s.rfind("class,x,y\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 6);
}

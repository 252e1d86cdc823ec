#include "crl/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crl/error.hpp"
#include "crl/estimators.hpp"
#include "crl/rng.hpp"

namespace crl {

SlopeFit fit_log_log(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, ErrorKind::InvalidArgument,
            "slope fit needs >= 2 paired points");
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(x[i] > 0 && y[i] > 0, ErrorKind::InvalidArgument, "log-log fit needs positive values");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    require(sxx > 0, ErrorKind::InvalidArgument, "slope fit needs distinct x values");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double ssr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ly[i] - f.intercept - f.slope * lx[i];
            ssr += r * r;
        }
        f.std_error = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    }
    return f;
}

namespace {

double median(std::vector<double> v) {
    const std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(h), v.end());
    if (v.size() % 2) return v[h];
    const double hi = v[h];
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<long>(h)));
}

GridPoint summarize(std::size_t n, const std::vector<double>& errs) {
    GridPoint p;
    p.n = n;
    p.trials = errs.size();
    p.mean_err = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
    p.median_err = median(errs);
    return p;
}

void fit_result(RateStudyResult& r, bool on_mean) {
    std::vector<double> x, ym, yd;
    bool mean_ok = true, median_ok = true;
    for (const auto& p : r.points) {
        x.push_back(static_cast<double>(p.n));
        ym.push_back(p.mean_err);
        yd.push_back(p.median_err);
        mean_ok = mean_ok && p.mean_err > 0;
        median_ok = median_ok && p.median_err > 0;
    }
    if (mean_ok) r.mean_fit = fit_log_log(x, ym);
    if (median_ok) r.median_fit = fit_log_log(x, yd);
    r.fitted_on = on_mean ? "mean" : "median";
    r.fit = on_mean ? r.mean_fit : r.median_fit;
    r.degenerate = !r.fit.has_value();
}

void check_grid(const std::vector<std::size_t>& grid, std::size_t trials) {
    require(grid.size() >= 2, ErrorKind::Config, "study grid needs >= 2 points");
    for (std::size_t i = 0; i < grid.size(); ++i)
        require(grid[i] >= 2 && (i == 0 || grid[i] > grid[i - 1]), ErrorKind::Config,
                "study grid must be strictly increasing with N >= 2");
    require(trials >= 10, ErrorKind::Config, "study needs >= 10 trials per grid point");
}

nlohmann::json fit_json(const std::optional<SlopeFit>& f) {
    if (!f) return nullptr;
    return {{"slope", f->slope}, {"std_error", f->std_error}, {"intercept", f->intercept}};
}

}  // namespace

void write_rate_csv(std::ostream& out, const RateStudyResult& r) {
    out << "N,mean_err,median_err\n";
    out.precision(17);
    for (const auto& p : r.points) out << p.n << ',' << p.mean_err << ',' << p.median_err << '\n';
}

nlohmann::json to_json(const RateStudyResult& r) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : r.points)
        pts.push_back({{"N", p.n}, {"mean_err", p.mean_err}, {"median_err", p.median_err}, {"trials", p.trials}});
    nlohmann::json j{{"study", r.study}, {"fitted_on", r.fitted_on}, {"degenerate", r.degenerate},
                     {"points", pts}, {"mean_fit", fit_json(r.mean_fit)}, {"median_fit", fit_json(r.median_fit)}};
    j["slope"] = r.fit ? nlohmann::json(r.fit->slope) : nlohmann::json(nullptr);
    j["slope_std_error"] = r.fit ? nlohmann::json(r.fit->std_error) : nlohmann::json(nullptr);
    return j;
}

void TauStudyConfig::validate() const {
    require(!rho.empty(), ErrorKind::Config, "tau study: rho must be non-empty");
    double s = 0;
    for (double p : rho) {
        require(p >= 0 && std::isfinite(p), ErrorKind::Config, "tau study: rho entries must be >= 0");
        s += p;
    }
    require(std::abs(s - 1) < 1e-9, ErrorKind::Config, "tau study: rho must sum to 1");
    require(k >= 1, ErrorKind::Config, "tau study: k >= 1 required");
    check_grid(grid, trials);
}

RateStudyResult tau_consistency_study(const TauStudyConfig& c) {
    c.validate();
    const double tau = collision_probability(c.rho, c.k);
    std::vector<double> cdf(c.rho.size());
    std::partial_sum(c.rho.begin(), c.rho.end(), cdf.begin());
    cdf.back() = 1.0;
    RateStudyResult res;
    res.study = "tau_consistency";
    std::vector<std::size_t> counts(c.rho.size());
    std::vector<double> rho_hat(c.rho.size());
    for (std::size_t gi = 0; gi < c.grid.size(); ++gi) {
        const std::size_t n = c.grid[gi];
        std::vector<double> errs;
        errs.reserve(c.trials);
        for (std::size_t t = 0; t < c.trials; ++t) {
            Philox g(c.seed, mix_stream(0x7a, gi, t));
            std::fill(counts.begin(), counts.end(), 0);
            for (std::size_t i = 0; i < n; ++i) {
                const double u = uniform01(g);
                ++counts[static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin())];
            }
            for (std::size_t r = 0; r < counts.size(); ++r)
                rho_hat[r] = static_cast<double>(counts[r]) / static_cast<double>(n);
            errs.push_back(std::abs(collision_probability(rho_hat, c.k) - tau));
        }
        res.points.push_back(summarize(n, errs));
    }
    fit_result(res, true);
    return res;
}

void EstimatorStudyConfig::validate() const {
    try {
        population.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("estimator study population: ") + e.what());
    }
    require(k >= 1 && k <= 3, ErrorKind::Config, "estimator study: 1 <= k <= 3 required");
    require(num_reps >= 1 && num_reps <= 20, ErrorKind::Config, "estimator study: 1 <= F <= 20 required");
    require(rep_dim >= 1, ErrorKind::Config, "estimator study: rep_dim >= 1 required");
    check_grid(grid, trials);
    require(grid.back() <= 5000, ErrorKind::Config, "estimator study: N <= 5000 required");
}

DiscretePopulation balanced_two_class_population() {
    DiscretePopulation p;
    p.support = {{1.0, 0.0}, {0.6, 0.8}, {-0.5, 0.4}, {0.0, -1.0}};
    p.class_probs = {0.5, 0.5};
    p.conditionals = {{0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}};
    return p;
}

RateStudyResult estimator_rate_study(const EstimatorStudyConfig& c) {
    c.validate();
    const LossSpec spec{c.k, std::nullopt};
    std::vector<Representation> reps;
    reps.push_back(Representation::zero_linear(c.population.dim(), c.rep_dim));
    for (std::size_t f = 1; f < c.num_reps; ++f)
        reps.push_back(Representation::random_linear(c.population.dim(), c.rep_dim, mix_stream(c.seed, 0xf0, f)));

    std::vector<double> target(reps.size(), 0.0);
    if (c.reference == RateReference::Population)
        for (std::size_t f = 0; f < reps.size(); ++f) {
            const auto risks = population_risks(c.population, reps[f], spec);
            if (c.estimator == RateEstimator::UHl) {
                require(risks.l_phi.has_value(), ErrorKind::DebiasUndefined,
                        "collision-free risk undefined: a class has probability 1");
                target[f] = *risks.l_phi;
            } else {
                target[f] = risks.debiased();
            }
        }

    RateStudyResult res;
    res.study = c.estimator == RateEstimator::UHl ? "u_hl_rate" : "u_n_rate";
    if (c.reference == RateReference::UHl) res.study += "_vs_u_hl";
    for (std::size_t gi = 0; gi < c.grid.size(); ++gi) {
        const std::size_t n = c.grid[gi];
        std::vector<double> errs;
        errs.reserve(c.trials);
        for (std::size_t t = 0; t < c.trials; ++t) {
            const auto ds = sample_dataset(c.population, n, mix_stream(c.seed, gi + 1, t));
            double sup = 0;
            for (std::size_t f = 0; f < reps.size(); ++f) {
                const EstimatorContext ctx(ds, reps[f], spec);
                const double est = c.estimator == RateEstimator::UHl ? u_hl(ctx).value : u_n(ctx).value;
                const double ref = c.reference == RateReference::UHl ? u_hl(ctx).value : target[f];
                sup = std::max(sup, std::abs(est - ref));
            }
            errs.push_back(sup);
        }
        res.points.push_back(summarize(n, errs));
    }
    fit_result(res, false);
    return res;
}

std::size_t BoundSuiteResult::violations() const {
    std::size_t v = 0;
    for (const auto& c : checks) v += c.typical_violations + c.general_violations;
    return v;
}

BoundSuiteResult bound_inequality_suite(std::span<const int> ks, std::size_t draws, std::uint64_t seed) {
    static constexpr double kAlphas[] = {0.1, 0.5, 1.0, 2.0, 5.0, 20.0};
    constexpr std::size_t kMaxAttempts = 1000000;
    BoundSuiteResult res;
    for (int k : ks) {
        require(k >= 2, ErrorKind::InvalidArgument, "bound suite needs k >= 2");
        BoundCheck bc;
        bc.k = k;
        bc.typical_min_margin = bc.general_min_margin = std::numeric_limits<double>::infinity();
        Philox g(seed, mix_stream(0xb0, static_cast<std::uint64_t>(k)));
        const auto kk = static_cast<std::size_t>(k);
        for (std::size_t d = 0; d < draws; ++d) {
            // unconstrained: any support size, any concentration
            const std::size_t r = 1 + uniform_index(g, 50);
            const auto rho = dirichlet(g, r, kAlphas[uniform_index(g, std::size(kAlphas))]);
            const double gap = 1.0 - collision_probability(rho, k) - one_minus_tau_floor(rho, k).general;
            ++bc.general_draws;
            if (gap < 0) ++bc.general_violations;
            bc.general_min_margin = std::min(bc.general_min_margin, gap);

            // constrained: resample until max rho_r <= 1/(k+1)
            for (std::size_t attempt = 0;; ++attempt) {
                require(attempt < kMaxAttempts, ErrorKind::CapExceeded, "constrained simplex rejection cap");
                const std::size_t rc = (kk + 1) * (1 + uniform_index(g, 4));
                const auto rr = dirichlet(g, rc, kAlphas[uniform_index(g, std::size(kAlphas))]);
                const auto floor = one_minus_tau_floor(rr, k);
                if (!floor.typical) {
                    ++bc.typical_rejections;
                    continue;
                }
                const double m = 1.0 - collision_probability(rr, k) - *floor.typical;
                ++bc.typical_draws;
                if (m < 0) ++bc.typical_violations;
                bc.typical_min_margin = std::min(bc.typical_min_margin, m);
                break;
            }
        }
        res.checks.push_back(bc);
    }
    return res;
}

nlohmann::json to_json(const BoundSuiteResult& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : r.checks)
        arr.push_back({{"k", c.k},
                       {"typical_draws", c.typical_draws},
                       {"typical_violations", c.typical_violations},
                       {"typical_rejections", c.typical_rejections},
                       {"typical_min_margin", c.typical_min_margin},
                       {"general_draws", c.general_draws},
                       {"general_violations", c.general_violations},
                       {"general_min_margin", c.general_min_margin}});
    return {{"study", "bound_inequalities"}, {"violations", r.violations()}, {"checks", arr}};
}

TauStudyConfig tau_study_from_json(const nlohmann::json& j) {
    TauStudyConfig c;
    try {
        if (j.contains("rho")) {
            c.rho = j.at("rho").get<std::vector<double>>();
        } else {
            const auto& lt = j.at("longtail");
            c.rho = longtail_probs(lt.at("R").get<std::size_t>(), lt.at("rho_max").get<double>(),
                                   lt.at("decay").get<double>());
        }
        c.k = j.value("k", c.k);
        c.grid = j.value("grid", c.grid);
        c.trials = j.value("trials", c.trials);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("tau study config: ") + e.what());
    }
    c.validate();
    return c;
}

EstimatorStudyConfig estimator_study_from_json(const nlohmann::json& j) {
    EstimatorStudyConfig c;
    c.population = balanced_two_class_population();
    try {
        if (j.contains("population")) {
            auto spec = population_from_json(j.at("population"));
            require(std::holds_alternative<DiscretePopulation>(spec), ErrorKind::Config,
                    "estimator study needs a discrete population");
            c.population = std::get<DiscretePopulation>(spec);
        }
        c.k = j.value("k", c.k);
        c.grid = j.value("grid", c.grid);
        c.trials = j.value("trials", c.trials);
        c.num_reps = j.value("F", c.num_reps);
        c.rep_dim = j.value("rep_dim", c.rep_dim);
        c.seed = j.value("seed", c.seed);
        const auto est = j.value("estimator", std::string("u_hl"));
        require(est == "u_hl" || est == "u_n", ErrorKind::Config, "estimator must be u_hl or u_n");
        c.estimator = est == "u_hl" ? RateEstimator::UHl : RateEstimator::UN;
        const auto ref = j.value("reference", std::string("population"));
        require(ref == "population" || ref == "u_hl", ErrorKind::Config, "reference must be population or u_hl");
        c.reference = ref == "population" ? RateReference::Population : RateReference::UHl;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("estimator study config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace crl

#include "crl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crl/error.hpp"
#include "crl/rng.hpp"

namespace crl {

Representation::Representation(Kind kind, std::vector<std::size_t> dims)
    : kind_(kind), dims_(std::move(dims)) {
    require(dims_.size() >= 2, ErrorKind::InvalidArgument, "representation needs >= 1 layer");
    for (std::size_t d : dims_)
        require(d > 0, ErrorKind::InvalidArgument, "layer dimensions must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        offsets_.push_back(off);
        off += dims_[l] * dims_[l + 1];
        if (kind_ == Kind::Mlp) off += dims_[l + 1];
    }
    params_.assign(off, 0.0);
}

Representation Representation::linear(const Eigen::MatrixXd& a) {
    Representation rep(Kind::Linear, {static_cast<std::size_t>(a.cols()),
                                      static_cast<std::size_t>(a.rows())});
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            require(std::isfinite(a(i, j)), ErrorKind::InvalidArgument,
                    "linear representation has non-finite entries");
            rep.params_[static_cast<std::size_t>(i * a.cols() + j)] = a(i, j);
        }
    return rep;
}

Representation Representation::zero_linear(std::size_t in_dim, std::size_t out_dim) {
    return Representation(Kind::Linear, {in_dim, out_dim});
}

Representation Representation::random_linear(std::size_t in_dim, std::size_t out_dim,
                                             std::uint64_t seed, double scale) {
    Representation rep(Kind::Linear, {in_dim, out_dim});
    Philox g(seed, 0x11);
    for (auto& p : rep.params_) p = scale * standard_normal(g);
    return rep;
}

Representation Representation::mlp(std::vector<std::size_t> layer_dims) {
    return Representation(Kind::Mlp, std::move(layer_dims));
}

Representation Representation::random_mlp(std::vector<std::size_t> layer_dims,
                                          std::uint64_t seed) {
    Representation rep(Kind::Mlp, std::move(layer_dims));
    Philox g(seed, 0x22);
    for (std::size_t l = 0; l < rep.num_layers(); ++l) {
        const double sd = std::sqrt(2.0 / static_cast<double>(rep.dims_[l]));
        const std::size_t off = rep.weight_offset(l);
        for (std::size_t i = 0; i < rep.dims_[l] * rep.dims_[l + 1]; ++i)
            rep.params_[off + i] = sd * standard_normal(g);
    }
    return rep;
}

Eigen::Map<const RowMatrix> Representation::weight(std::size_t layer) const {
    return {params_.data() + weight_offset(layer), static_cast<Eigen::Index>(dims_[layer + 1]),
            static_cast<Eigen::Index>(dims_[layer])};
}

Eigen::Map<const Eigen::VectorXd> Representation::bias(std::size_t layer) const {
    require(has_bias(), ErrorKind::InvalidArgument, "linear representation has no bias");
    return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(dims_[layer + 1])};
}

Eigen::VectorXd Representation::forward(std::span<const double> x) const {
    require(x.size() == input_dim(), ErrorKind::InvalidArgument,
            "forward: input dimension " + std::to_string(x.size()) + " != " +
                std::to_string(input_dim()));
    Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    for (std::size_t l = 0; l < num_layers(); ++l) {
        Eigen::VectorXd z = weight(l) * h;
        if (has_bias()) z += bias(l);
        if (l + 1 < num_layers()) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

RowMatrix Representation::forward_batch(const RowMatrix& x, Cache* cache) const {
    require(static_cast<std::size_t>(x.cols()) == input_dim(), ErrorKind::InvalidArgument,
            "forward_batch: input dimension mismatch");
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
    }
    RowMatrix h = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        RowMatrix z = h * weight(l).transpose();
        if (has_bias()) z.rowwise() += bias(l).transpose();
        if (cache) {
            cache->inputs.push_back(h);
            cache->preacts.push_back(z);
        }
        if (l + 1 < num_layers()) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

void Representation::backward_batch(const Cache& cache, const RowMatrix& d_out,
                                    std::span<double> grad) const {
    require(grad.size() == num_params(), ErrorKind::InvalidArgument, "gradient buffer size");
    RowMatrix g = d_out;
    for (std::size_t l = num_layers(); l-- > 0;) {
        Eigen::Map<RowMatrix> dw(grad.data() + weight_offset(l),
                                 static_cast<Eigen::Index>(dims_[l + 1]),
                                 static_cast<Eigen::Index>(dims_[l]));
        dw.noalias() += g.transpose() * cache.inputs[l];
        if (has_bias()) {
            Eigen::Map<Eigen::VectorXd> db(grad.data() + bias_offset(l),
                                           static_cast<Eigen::Index>(dims_[l + 1]));
            db += g.colwise().sum().transpose();
        }
        if (l == 0) break;
        RowMatrix prev = g * weight(l);
        // rectifier subgradient at 0 is 0
        prev.array() *= (cache.preacts[l - 1].array() > 0.0).cast<double>();
        g = std::move(prev);
    }
}

nlohmann::json Representation::to_json() const {
    return {{"kind", kind_ == Kind::Linear ? "linear" : "mlp"},
            {"layer_dims", dims_},
            {"weights", params_}};
}

Representation Representation::from_json(const nlohmann::json& j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        require(kind == "linear" || kind == "mlp", ErrorKind::Config,
                "representation kind must be linear or mlp");
        Representation rep(kind == "linear" ? Kind::Linear : Kind::Mlp,
                           j.at("layer_dims").get<std::vector<std::size_t>>());
        require(kind == "mlp" || rep.num_layers() == 1, ErrorKind::Config,
                "linear representation has exactly one layer");
        const auto w = j.at("weights").get<std::vector<double>>();
        require(w.size() == rep.num_params(), ErrorKind::Config,
                "checkpoint weight count mismatch");
        for (double v : w) require(std::isfinite(v), ErrorKind::Config, "non-finite weight");
        rep.params_ = w;
        return rep;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("representation checkpoint: ") + e.what());
    }
}

double phi_logistic(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, -x);
    if (m == 0.0) {
        double s = 0;
        for (double x : v) s += std::exp(-x);
        return std::log1p(s);
    }
    double s = std::exp(-m);
    for (double x : v) s += std::exp(-x - m);
    return m + std::log(s);
}

double phi_logistic_grad(std::span<const double> v, std::span<double> grad) {
    const double phi = phi_logistic(v);
    for (std::size_t i = 0; i < v.size(); ++i) grad[i] = -std::exp(-v[i] - phi);
    return phi;
}

RowMatrix embed(const Representation& rep, const LabeledDataset& ds) {
    require(ds.dim() == rep.input_dim(), ErrorKind::InvalidArgument,
            "dataset dimension does not match representation input");
    RowMatrix x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.dim()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto f = ds.features(i);
        for (std::size_t j = 0; j < ds.dim(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
    return rep.forward_batch(x);
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Scratch {
    std::vector<double> scores;
    std::vector<double> grads;
    std::vector<std::size_t> negs;
};

Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

// phi over scores v_i = e_a.(e_p - e_n) for negatives `negs`; adds
// weight * gradient into d_emb when provided.
double ordered_loss(const RowMatrix& emb, std::size_t a, std::size_t p,
                    std::span<const std::size_t> negs, double weight, RowMatrix* d_emb) {
    Scratch& s = scratch();
    s.scores.resize(negs.size());
    const auto ea = emb.row(static_cast<Eigen::Index>(a));
    const double pos = ea.dot(emb.row(static_cast<Eigen::Index>(p)));
    for (std::size_t i = 0; i < negs.size(); ++i)
        s.scores[i] = pos - ea.dot(emb.row(static_cast<Eigen::Index>(negs[i])));
    if (!d_emb) return phi_logistic(s.scores);
    s.grads.resize(negs.size());
    const double val = phi_logistic_grad(s.scores, s.grads);
    auto& d = *d_emb;
    const auto ia = static_cast<Eigen::Index>(a), ip = static_cast<Eigen::Index>(p);
    double gsum = 0;
    for (std::size_t i = 0; i < negs.size(); ++i) {
        const double g = weight * s.grads[i];
        const auto in = static_cast<Eigen::Index>(negs[i]);
        gsum += g;
        d.row(ia) -= g * emb.row(in);
        d.row(in) -= g * emb.row(ia);
    }
    d.row(ia) += gsum * emb.row(ip);
    d.row(ip) += gsum * emb.row(ia);
    return val;
}

// Omega-form kernel; `extra` (if not kNone) is prepended to the negatives.
double omega_form(const RowMatrix& emb, std::size_t a, std::size_t p, std::size_t extra,
                  std::span<const std::size_t> free_negs, double weight, RowMatrix* d_emb) {
    std::span<const std::size_t> negs = free_negs;
    std::vector<std::size_t> local;
    if (extra != kNone) {
        local.reserve(free_negs.size() + 1);
        local.push_back(extra);
        local.insert(local.end(), free_negs.begin(), free_negs.end());
        negs = local;
    }
    return 0.5 * (ordered_loss(emb, a, p, negs, 0.5 * weight, d_emb) +
                  ordered_loss(emb, p, a, negs, 0.5 * weight, d_emb));
}

double kernel_impl(const RowMatrix& emb, const ContrastiveTuple& t, double weight,
                   RowMatrix* d_emb) {
    if (!t.designated) return omega_form(emb, t.anchor, t.positive, kNone, t.negatives, weight, d_emb);
    const std::size_t a = t.anchor, p = t.positive, c = *t.designated;
    const double w = weight / 3.0;
    return (omega_form(emb, a, p, c, t.negatives, w, d_emb) +
            omega_form(emb, a, c, p, t.negatives, w, d_emb) +
            omega_form(emb, p, c, a, t.negatives, w, d_emb)) /
           3.0;
}

void check_tuple(const ContrastiveTuple& t, std::size_t n, const LossSpec& spec) {
    auto ok = [n](std::size_t i) { return i < n; };
    bool valid = ok(t.anchor) && ok(t.positive) &&
                 std::all_of(t.negatives.begin(), t.negatives.end(), ok) &&
                 (!t.designated || ok(*t.designated));
    require(valid, ErrorKind::InvalidArgument, "tuple index out of range");
    const std::size_t negs = t.negatives.size() + (t.designated ? 1 : 0);
    if (negs != static_cast<std::size_t>(spec.k))
        fail(ErrorKind::InvalidArgument, "tuple has " + std::to_string(negs) +
                                             " negatives, loss expects k = " + std::to_string(spec.k));
}

}  // namespace

double tuple_kernel(const RowMatrix& emb, const ContrastiveTuple& t, const LossSpec& spec) {
    const double v = kernel_impl(emb, t, 1.0, nullptr);
    return spec.clamp ? std::min(v, *spec.clamp) : v;
}

double tuple_kernel_grad(const RowMatrix& emb, const ContrastiveTuple& t, const LossSpec& spec,
                         double weight, RowMatrix& d_emb) {
    if (spec.clamp) {
        const double v = kernel_impl(emb, t, 1.0, nullptr);
        if (v >= *spec.clamp) return *spec.clamp;
    }
    return kernel_impl(emb, t, weight, &d_emb);
}

double tuple_loss(const Representation& rep, const LossSpec& spec, const LabeledDataset& ds,
                  const ContrastiveTuple& t) {
    check_tuple(t, ds.size(), spec);
    WeightedLoss wl = weighted_loss_and_grad(rep, spec, ds, std::span(&t, 1),
                                             std::vector<double>{1.0});
    return wl.value;
}

std::vector<double> tuple_loss_grad(const Representation& rep, const LossSpec& spec,
                                    const LabeledDataset& ds, const ContrastiveTuple& t) {
    check_tuple(t, ds.size(), spec);
    return weighted_loss_and_grad(rep, spec, ds, std::span(&t, 1), std::vector<double>{1.0}).grad;
}

WeightedLoss weighted_loss_and_grad(const Representation& rep, const LossSpec& spec,
                                    const LabeledDataset& ds,
                                    std::span<const ContrastiveTuple> tuples,
                                    std::span<const double> weights) {
    require(tuples.size() == weights.size() && !tuples.empty(), ErrorKind::InvalidArgument,
            "weighted loss needs one weight per tuple");
    require(ds.dim() == rep.input_dim(), ErrorKind::InvalidArgument,
            "dataset dimension does not match representation input");
    std::vector<std::size_t> local(ds.size(), kNone);
    std::vector<std::size_t> rows;
    auto map = [&](std::size_t i) {
        if (local[i] == kNone) {
            local[i] = rows.size();
            rows.push_back(i);
        }
        return local[i];
    };
    std::vector<ContrastiveTuple> mapped(tuples.size());
    for (std::size_t j = 0; j < tuples.size(); ++j) {
        const auto& t = tuples[j];
        check_tuple(t, ds.size(), spec);
        auto& m = mapped[j];
        m.anchor = map(t.anchor);
        m.positive = map(t.positive);
        m.negatives.resize(t.negatives.size());
        for (std::size_t i = 0; i < t.negatives.size(); ++i) m.negatives[i] = map(t.negatives[i]);
        if (t.designated) m.designated = map(*t.designated);
    }
    RowMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.dim()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto f = ds.features(rows[r]);
        for (std::size_t c = 0; c < ds.dim(); ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f[c];
    }
    Representation::Cache cache;
    const RowMatrix emb = rep.forward_batch(x, &cache);
    RowMatrix d_emb = RowMatrix::Zero(emb.rows(), emb.cols());
    const double inv_m = 1.0 / static_cast<double>(tuples.size());
    CompensatedSum<double> total;
    double max_loss = 0.0;
    for (std::size_t j = 0; j < mapped.size(); ++j) {
        const double v = tuple_kernel_grad(emb, mapped[j], spec, weights[j] * inv_m, d_emb);
        total += weights[j] * v;
        max_loss = std::max(max_loss, std::abs(v));
    }
    WeightedLoss out;
    out.max_tuple_loss = max_loss;
    out.value = total.value() * inv_m;
    out.grad.assign(rep.num_params(), 0.0);
    rep.backward_batch(cache, d_emb, out.grad);
    return out;
}

}  // namespace crl

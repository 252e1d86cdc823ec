#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "crl/dataset.hpp"
#include "crl/tuples.hpp"

namespace crl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameterized representation f. Linear: x -> A x (single layer, no bias).
/// Mlp: affine layers with rectifiers between them and an identity output.
/// Parameters live in one flat buffer: per layer, W (out x in, row-major)
/// followed by the bias (Mlp only).
class Representation {
public:
    enum class Kind { Linear, Mlp };

    static Representation linear(const Eigen::MatrixXd& a);
    static Representation zero_linear(std::size_t in_dim, std::size_t out_dim);
    static Representation random_linear(std::size_t in_dim, std::size_t out_dim,
                                        std::uint64_t seed, double scale = 1.0);
    /// layer_dims = {input, hidden..., output}; parameters zeroed.
    static Representation mlp(std::vector<std::size_t> layer_dims);
    /// He-normal weights, zero biases.
    static Representation random_mlp(std::vector<std::size_t> layer_dims, std::uint64_t seed);

    Kind kind() const noexcept { return kind_; }
    const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
    std::size_t input_dim() const noexcept { return dims_.front(); }
    std::size_t output_dim() const noexcept { return dims_.back(); }
    std::size_t num_layers() const noexcept { return dims_.size() - 1; }
    bool has_bias() const noexcept { return kind_ == Kind::Mlp; }

    std::size_t num_params() const noexcept { return params_.size(); }
    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

    Eigen::VectorXd forward(std::span<const double> x) const;

    /// Activations kept for the backward pass.
    struct Cache {
        std::vector<RowMatrix> inputs;  // input to each layer (rows = samples)
        std::vector<RowMatrix> preacts; // pre-activation output of each layer
    };

    /// Rows of `x` are samples; returns rows of embeddings.
    RowMatrix forward_batch(const RowMatrix& x, Cache* cache = nullptr) const;

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output rows).
    void backward_batch(const Cache& cache, const RowMatrix& d_out, std::span<double> grad) const;

    nlohmann::json to_json() const;
    static Representation from_json(const nlohmann::json& j);

private:
    Representation(Kind kind, std::vector<std::size_t> dims);

    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + dims_[layer] * dims_[layer + 1];
    }

    Kind kind_;
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

using LinearRep = Representation;  // Kind::Linear
using MlpRep = Representation;     // Kind::Mlp

struct LossSpec {
    int k = 1;
    /// Optional upper clamp on the tuple loss (bound-sensitive experiments).
    std::optional<double> clamp;
};

/// phi(v) = ln(1 + sum_i exp(-v_i)) with log-sum-exp stabilization.
double phi_logistic(std::span<const double> v);
/// d phi / d v_i written into `grad` (same length as v); returns phi(v).
double phi_logistic_grad(std::span<const double> v, std::span<double> grad);

/// Embedding table: row i is f(X_i).
RowMatrix embed(const Representation& rep, const LabeledDataset& ds);

/// Symmetrized tuple kernel evaluated on precomputed embeddings.
/// Theta/Omega form: 1/2 [phi(v(a,p)) + phi(v(p,a))], v_i = f(a).(f(p) - f(n_i)).
/// Lambda form: mean over the three choices of the forced negative among
/// {anchor, positive, designated} of the Omega-form kernel.
double tuple_kernel(const RowMatrix& emb, const ContrastiveTuple& t, const LossSpec& spec);

/// Adds weight * d(kernel)/d(emb rows) into d_emb; returns the kernel value.
double tuple_kernel_grad(const RowMatrix& emb, const ContrastiveTuple& t, const LossSpec& spec,
                         double weight, RowMatrix& d_emb);

double tuple_loss(const Representation& rep, const LossSpec& spec, const LabeledDataset& ds,
                  const ContrastiveTuple& t);

std::vector<double> tuple_loss_grad(const Representation& rep, const LossSpec& spec,
                                    const LabeledDataset& ds, const ContrastiveTuple& t);

struct WeightedLoss {
    double value = 0.0;           // (1/M) sum_j w_j l(t_j)
    std::vector<double> grad;     // gradient of value
    double max_tuple_loss = 0.0;  // largest |l| among the tuples (empirical bound)
};

/// Batched weighted mean loss and gradient; each distinct sample is
/// forwarded and back-propagated once.
WeightedLoss weighted_loss_and_grad(const Representation& rep, const LossSpec& spec,
                                    const LabeledDataset& ds,
                                    std::span<const ContrastiveTuple> tuples,
                                    std::span<const double> weights);

}  // namespace crl

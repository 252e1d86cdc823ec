#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/dataset.hpp"
#include "crl/losses.hpp"
#include "crl/sampling.hpp"

namespace crl {

struct TrainConfig {
    Algorithm estimator = Algorithm::Alg1;
    int k = 5;
    std::size_t m = 3000;  // tuples per step
    std::size_t steps = 2000;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;       // sub-sample stream
    std::uint64_t init_seed = 1;  // parameter initialization
    std::vector<std::size_t> hidden{64};
    std::size_t output_dim = 32;
    double init_output_scale = 0.1;  // shrinks the output layer so the initial loss is near ln(1+k)
    bool early_stop = false;
    std::size_t early_stop_window = 200;
    double early_stop_tol = 1e-4;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainReport {
    std::vector<double> loss_curve;  // per-step sub-sampled objective
    std::size_t steps_run = 0;
    bool stopped_early = false;
    double reported_bound = 0.0;  // running max |l| over training tuples
    double excluded_mass = 0.0;   // Alg1 class-draw exclusion
    double wall_time = 0.0;
};

struct TrainResult {
    Representation rep;
    TrainReport report;
};

/// Initial representation for a config on inputs of dimension in_dim.
Representation initial_representation(const TrainConfig& c, std::size_t in_dim);

/// Plain SGD; every step draws a fresh sub-sample of M tuples.
TrainResult train(const LabeledDataset& train_ds, const TrainConfig& c);
/// Continues from a given representation.
TrainResult train(const LabeledDataset& train_ds, const TrainConfig& c, Representation init);

struct ClassLoss {
    std::size_t cls = 0;
    long label = 0;
    std::size_t count = 0;
    std::optional<double> loss;  // absent when the class has < 2 samples
    std::string notice;
};

/// Mean loss over M_eval uniform collision-free test tuples anchored in each
/// of the rare_count rarest test classes (fewest samples; ties by class id).
std::vector<ClassLoss> rare_class_test_loss(const Representation& rep, const LabeledDataset& test_ds,
                                            const LossSpec& spec, std::size_t rare_count,
                                            std::size_t m_eval, std::uint64_t seed);

struct Projection {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> eigenvalues{0.0, 0.0};
    double total_variance = 0.0;
    std::string notice;  // set for degenerate covariance

    double captured_ratio() const {
        return total_variance > 0 ? (eigenvalues[0] + eigenvalues[1]) / total_variance : 0.0;
    }
};

/// Top-2 principal components by power iteration with deflation; each
/// component's first nonzero coordinate is made positive.
Projection project_2d(const RowMatrix& embeddings);

void write_projection_csv(std::ostream& out, const LabeledDataset& ds, const Projection& p);

}  // namespace crl

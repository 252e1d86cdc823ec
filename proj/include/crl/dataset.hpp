#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace crl {

struct LabeledSample {
    std::vector<double> features;
    long label = 0;  // arbitrary integer label; relabeled densely on build
};

/// Empirical class probabilities rho_hat_r = N_r / N.
struct ClassStats {
    std::vector<double> probs;

    /// Mass of classes with rho_hat_r <= 1/alpha (inclusive).
    double gamma_hat(double alpha) const;
    /// Mass of classes with rho_hat_r <= 2/(k+2).
    double theta_hat(int k) const;
};

double small_class_mass(const ClassStats& stats, double alpha);

struct SplitResult {
    std::vector<std::size_t> front;
    std::vector<std::size_t> back;
    std::vector<std::size_t> front_counts;  // n_r^pi per class
};

/// Immutable labeled dataset. Classes are dense ids 0..R-1 assigned in
/// ascending order of the original labels.
class LabeledDataset {
public:
    static LabeledDataset build(std::vector<LabeledSample> samples);

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_classes() const noexcept { return members_.size(); }

    std::size_t label(std::size_t i) const { return labels_.at(i); }
    std::span<const double> features(std::size_t i) const {
        return {features_.data() + i * dim_, dim_};
    }
    std::span<const std::size_t> members(std::size_t r) const { return members_.at(r); }
    std::size_t class_count(std::size_t r) const { return members_.at(r).size(); }
    long original_label(std::size_t r) const { return original_labels_.at(r); }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }

    ClassStats stats() const;

    /// Front = first `cut` positions of the permutation, back = the rest.
    SplitResult split(std::span<const std::size_t> perm, std::size_t cut) const;

private:
    std::size_t dim_ = 0;
    std::vector<double> features_;
    std::vector<std::size_t> labels_;
    std::vector<std::vector<std::size_t>> members_;
    std::vector<long> original_labels_;
};

SplitResult random_split(const LabeledDataset& ds, std::span<const std::size_t> perm,
                         std::size_t cut);

/// CSV with header `label,f1,...,fd`.
LabeledDataset read_dataset_csv(std::istream& in);
LabeledDataset load_dataset_csv(const std::string& path);
/// Writes original labels so a round trip preserves class identity.
void write_dataset_csv(std::ostream& out, const LabeledDataset& ds);

}  // namespace crl

#pragma once

#include <cstddef>
#include <vector>

#include "mgr/model.hpp"

namespace mgr {

enum class EntropyBase { bits, nats };

// Discrete joint distribution over n variables, probability table in
// row-major order over outcome tuples (last variable fastest).
struct JointDistribution {
    std::vector<std::size_t> support_sizes;
    std::vector<double> probs;

    JointDistribution(std::vector<std::size_t> support_sizes_,
                      std::vector<double> probs_);
    std::size_t variable_count() const { return support_sizes.size(); }

    // Marginal over the given variable subset, flattened the same way.
    std::vector<double> marginal(const std::vector<std::size_t>& subset) const;
};

// Shannon entropy of the marginal over subset; 0 * log 0 = 0.
double entropy(const JointDistribution& dist,
               const std::vector<std::size_t>& subset,
               EntropyBase base = EntropyBase::bits);

// I(Z_i, Z_j) = H(Z_i) + H(Z_j) - H(Z_i, Z_j), clamped at 0 against
// numerical slack.
double mutual_information(const JointDistribution& dist, std::size_t i,
                          std::size_t j, EntropyBase base = EntropyBase::bits);

struct Theorem2Report {
    bool lower_ok = false;   // max_i H(Z_i) <= H(Z_1..Z_n)
    bool upper_ok = false;   // H(Z_1..Z_n) <= sum_k H(Z_k)
    bool lower_tight = false;
    bool upper_tight = false;
    double max_marginal = 0.0;
    double joint = 0.0;
    double sum_marginals = 0.0;
};

Theorem2Report verify_theorem2(const JointDistribution& dist,
                               double tolerance = 1e-9);

// Plug-in entropies of eval-mode rationale masks truncated to the first
// max_tokens positions (max 16 so the outcome space stays enumerable).
struct MaskEntropyReport {
    std::vector<double> marginals;  // one per generator, bits
    double joint = 0.0;
    double sum_marginals = 0.0;
};

MaskEntropyReport empirical_mask_entropy(const MgrModel& model,
                                         const DatasetSplit& dataset,
                                         std::size_t max_tokens);

}  // namespace mgr

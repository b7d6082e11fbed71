#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace mgr {

using Mask = std::vector<std::uint8_t>;

struct PrfScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Micro-averaged token precision/recall/F1 over all annotated examples.
// Zero denominators yield 0.
PrfScores token_prf1(const std::vector<Mask>& pred_masks,
                     const std::vector<Mask>& gold_masks);

// Mean over examples of the selected-token fraction.
double sparsity(const std::vector<Mask>& pred_masks);

// Fraction of argmax-correct predictions; ties broken by lowest class index.
double accuracy(const std::vector<std::vector<double>>& predictions,
                const std::vector<std::size_t>& labels);

// ||M_i - M_j||_1 / (||M_i||_1 + ||M_j||_1): the fraction of tokens on which
// two rationales disagree. Both-empty is defined as 0 (no disagreement).
double generator_overlap(const Mask& mi, const Mask& mj);
double generator_overlap_batch(const std::vector<Mask>& mi,
                               const std::vector<Mask>& mj);

struct EvalReport {
    std::optional<PrfScores> prf;  // absent when no example has a gold mask
    double sparsity_S = 0.0;
    double accuracy = 0.0;
    std::size_t annotated_examples = 0;
    std::size_t total_examples = 0;
};

}  // namespace mgr

#include "mgr/eval.hpp"

#include <stdexcept>
#include <string>

namespace mgr {

PrfScores token_prf1(const std::vector<Mask>& pred_masks,
                     const std::vector<Mask>& gold_masks) {
    if (pred_masks.size() != gold_masks.size())
        throw std::invalid_argument("token_prf1: mask count mismatch");
    std::size_t tp = 0, pred_total = 0, gold_total = 0;
    for (std::size_t e = 0; e < pred_masks.size(); ++e) {
        if (pred_masks[e].size() != gold_masks[e].size())
            throw std::invalid_argument("token_prf1: length mismatch at example " +
                                        std::to_string(e));
        for (std::size_t t = 0; t < pred_masks[e].size(); ++t) {
            if (pred_masks[e][t] && gold_masks[e][t]) ++tp;
            if (pred_masks[e][t]) ++pred_total;
            if (gold_masks[e][t]) ++gold_total;
        }
    }
    PrfScores s;
    s.precision = pred_total ? static_cast<double>(tp) / pred_total : 0.0;
    s.recall = gold_total ? static_cast<double>(tp) / gold_total : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

double sparsity(const std::vector<Mask>& pred_masks) {
    if (pred_masks.empty())
        throw std::invalid_argument("sparsity: empty mask set");
    double total = 0.0;
    for (const auto& m : pred_masks) {
        if (m.empty()) continue;  // zero-length contributes 0
        std::size_t on = 0;
        for (std::uint8_t v : m) on += v != 0;
        total += static_cast<double>(on) / static_cast<double>(m.size());
    }
    return total / static_cast<double>(pred_masks.size());
}

double accuracy(const std::vector<std::vector<double>>& predictions,
                const std::vector<std::size_t>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("accuracy: size mismatch");
    if (predictions.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t e = 0; e < predictions.size(); ++e) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < predictions[e].size(); ++c)
            if (predictions[e][c] > predictions[e][best]) best = c;
        if (best == labels[e]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double generator_overlap(const Mask& mi, const Mask& mj) {
    if (mi.size() != mj.size())
        throw std::invalid_argument("generator_overlap: length mismatch");
    std::size_t diff = 0, total = 0;
    for (std::size_t t = 0; t < mi.size(); ++t) {
        diff += (mi[t] != 0) != (mj[t] != 0);
        total += (mi[t] != 0) + (mj[t] != 0);
    }
    return total ? static_cast<double>(diff) / static_cast<double>(total) : 0.0;
}

double generator_overlap_batch(const std::vector<Mask>& mi,
                               const std::vector<Mask>& mj) {
    if (mi.size() != mj.size() || mi.empty())
        throw std::invalid_argument("generator_overlap_batch: size mismatch");
    double total = 0.0;
    for (std::size_t e = 0; e < mi.size(); ++e)
        total += generator_overlap(mi[e], mj[e]);
    return total / static_cast<double>(mi.size());
}

}  // namespace mgr

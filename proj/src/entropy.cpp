#include "mgr/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mgr {

namespace {

double entropy_of(const std::vector<double>& probs, EntropyBase base) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return base == EntropyBase::bits ? h / std::log(2.0) : h;
}

}  // namespace

JointDistribution::JointDistribution(std::vector<std::size_t> support_sizes_,
                                     std::vector<double> probs_)
    : support_sizes(std::move(support_sizes_)), probs(std::move(probs_)) {
    if (support_sizes.empty())
        throw std::invalid_argument("JointDistribution: no variables");
    std::size_t total = 1;
    for (std::size_t s : support_sizes) {
        if (s == 0)
            throw std::invalid_argument("JointDistribution: empty support");
        total *= s;
    }
    if (probs.size() != total)
        throw std::invalid_argument("JointDistribution: table size mismatch");
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0)
            throw std::invalid_argument("JointDistribution: negative probability");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("JointDistribution: probabilities sum to " +
                                    std::to_string(sum));
}

std::vector<double> JointDistribution::marginal(
    const std::vector<std::size_t>& subset) const {
    if (subset.empty())
        throw std::invalid_argument("marginal: empty subset");
    for (std::size_t v : subset)
        if (v >= variable_count())
            throw std::invalid_argument("marginal: variable index " +
                                        std::to_string(v) + " out of range");

    // Strides of each variable in the row-major table.
    std::vector<std::size_t> strides(variable_count(), 1);
    for (std::size_t v = variable_count(); v-- > 1;)
        strides[v - 1] = strides[v] * support_sizes[v];

    std::size_t out_size = 1;
    for (std::size_t v : subset) out_size *= support_sizes[v];
    std::vector<double> out(out_size, 0.0);

    for (std::size_t flat = 0; flat < probs.size(); ++flat) {
        std::size_t idx = 0;
        for (std::size_t v : subset)
            idx = idx * support_sizes[v] + (flat / strides[v]) % support_sizes[v];
        out[idx] += probs[flat];
    }
    return out;
}

double entropy(const JointDistribution& dist,
               const std::vector<std::size_t>& subset, EntropyBase base) {
    return entropy_of(dist.marginal(subset), base);
}

double mutual_information(const JointDistribution& dist, std::size_t i,
                          std::size_t j, EntropyBase base) {
    if (i == j)
        throw std::invalid_argument("mutual_information: i == j");
    double mi = entropy(dist, {i}, base) + entropy(dist, {j}, base) -
                entropy(dist, {i, j}, base);
    return std::max(mi, 0.0);
}

Theorem2Report verify_theorem2(const JointDistribution& dist,
                               double tolerance) {
    Theorem2Report r;
    std::vector<std::size_t> all(dist.variable_count());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
    r.joint = entropy(dist, all);
    for (std::size_t v = 0; v < all.size(); ++v) {
        double h = entropy(dist, {v});
        r.max_marginal = std::max(r.max_marginal, h);
        r.sum_marginals += h;
    }
    r.lower_ok = r.max_marginal <= r.joint + tolerance;
    r.upper_ok = r.joint <= r.sum_marginals + tolerance;
    r.lower_tight = std::fabs(r.joint - r.max_marginal) <= tolerance;
    r.upper_tight = std::fabs(r.joint - r.sum_marginals) <= tolerance;
    return r;
}

MaskEntropyReport empirical_mask_entropy(const MgrModel& model,
                                         const DatasetSplit& dataset,
                                         std::size_t max_tokens) {
    if (max_tokens == 0 || max_tokens > 16)
        throw std::invalid_argument(
            "empirical_mask_entropy: max_tokens must be in [1,16]");
    if (dataset.examples.empty())
        throw std::invalid_argument("empirical_mask_entropy: empty dataset");

    const std::size_t n = model.generators.size();
    std::vector<std::map<std::uint32_t, std::size_t>> marginal_counts(n);
    std::map<std::vector<std::uint32_t>, std::size_t> joint_counts;

    // Batched eval over the whole split.
    const std::size_t batch_size = 64;
    std::size_t total = 0;
    for (std::size_t start = 0; start < dataset.examples.size();
         start += batch_size) {
        std::vector<std::size_t> indices;
        for (std::size_t i = start;
             i < std::min(start + batch_size, dataset.examples.size()); ++i)
            indices.push_back(i);
        auto batch = encode_batch(dataset, indices);
        auto outputs = mgr_forward_eval(model, batch);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            std::vector<std::uint32_t> outcome(n, 0);
            for (std::size_t g = 0; g < n; ++g) {
                std::uint32_t bits = 0;
                const auto& hard = outputs[g].mask.hard;
                for (std::size_t t = 0;
                     t < std::min(max_tokens, batch.max_len); ++t)
                    if (hard->data[b * batch.max_len + t] > 0.5)
                        bits |= 1u << t;
                outcome[g] = bits;
                ++marginal_counts[g][bits];
            }
            ++joint_counts[outcome];
            ++total;
        }
    }

    auto plug_in = [total](const auto& counts) {
        std::vector<double> probs;
        probs.reserve(counts.size());
        for (const auto& [key, c] : counts)
            probs.push_back(static_cast<double>(c) /
                            static_cast<double>(total));
        return entropy_of(probs, EntropyBase::bits);
    };

    MaskEntropyReport report;
    for (std::size_t g = 0; g < n; ++g) {
        report.marginals.push_back(plug_in(marginal_counts[g]));
        report.sum_marginals += report.marginals.back();
    }
    report.joint = plug_in(joint_counts);
    return report;
}

}  // namespace mgr

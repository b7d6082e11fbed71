#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgr/tensor.hpp"

namespace mgr {

struct Vocabulary {
    static constexpr std::size_t kPadId = 0;
    static constexpr std::size_t kUnkId = 1;

    std::unordered_map<std::string, std::size_t> token_to_id;
    std::vector<std::string> id_to_token;
    std::size_t class_count = 2;

    Vocabulary();
    std::size_t size() const { return id_to_token.size(); }
    std::size_t add(const std::string& token);              // idempotent
    std::size_t lookup(const std::string& token) const;      // unk fallback
};

struct Example {
    std::vector<std::size_t> token_ids;
    std::size_t label = 0;
    std::optional<std::vector<std::uint8_t>> gold_mask;

    std::size_t length() const { return token_ids.size(); }
};

struct DatasetSplit {
    std::vector<Example> examples;
    std::shared_ptr<Vocabulary> vocab;
};

// --- corpus / embeddings ---------------------------------------------------

// Record format, one per line:
//   label<TAB>text<TAB>optional-JSON-array-of-[start,end)-token-spans
// Text is lowercased and whitespace-tokenized; sequences are truncated to
// max_len with gold masks truncated identically.
DatasetSplit load_dataset(const std::string& path,
                          std::shared_ptr<Vocabulary> vocab = nullptr,
                          std::size_t max_len = 256);
void save_dataset(const DatasetSplit& split, const std::string& path);

// Text-vector file "token v1 ... vd" per line. Vocabulary tokens absent from
// the file get a zero vector; the unknown-token row is the mean of all loaded
// vectors.
struct EmbeddingMatrix {
    TensorPtr weights;  // (vocab, dim)
    std::size_t dim = 0;
};
EmbeddingMatrix load_embeddings(const std::string& path,
                                const Vocabulary& vocab);

// Span helpers: a binary mask <-> list of [start,end) token spans.
std::vector<std::pair<std::size_t, std::size_t>> mask_to_spans(
    const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> spans_to_mask(
    const std::vector<std::pair<std::size_t, std::size_t>>& spans,
    std::size_t length);

// --- batching ---------------------------------------------------------------

// Per-epoch class-balanced sampling: every epoch draws min-class-count
// examples from each class without replacement (undersampling the majority),
// reshuffled per epoch, deterministic given (seed, epoch).
class BalancedBatcher {
public:
    BalancedBatcher(const DatasetSplit& split, std::size_t batch_size,
                    std::uint64_t seed);
    std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;
    std::size_t epoch_example_count() const;

private:
    std::vector<std::vector<std::size_t>> by_class_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

// --- synthetic corpus --------------------------------------------------------

struct SyntheticSpec {
    std::size_t vocab_size = 100;
    std::size_t train_size = 2000;
    std::size_t dev_size = 500;
    std::size_t test_size = 500;
    std::size_t seq_len = 40;
    std::size_t causal_len = 5;
    std::size_t spurious_len = 5;
    double rho = 0.8;              // correlation probability
    std::size_t cues_per_class = 4;
    // spurious cue-type count; 0 means "same as cues_per_class". A smaller
    // set makes the spurious feature easier to learn than the causal one.
    std::size_t spurious_cues_per_class = 0;
    bool spurious_first = false;   // pin the spurious span at offset 0
    std::uint64_t seed = 0;
};

struct SyntheticCorpus {
    DatasetSplit train, dev, test;
};

// Plants a causal span whose token identity determines the binary label plus,
// with probability rho, a label-consistent spurious span; gold_mask marks
// exactly the causal span.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace mgr

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mgr/data.hpp"
#include "mgr/tensor.hpp"

namespace mgr {

// --- building blocks ---------------------------------------------------------

struct GruCell {
    TensorPtr Wr, Wz, Wn;  // input -> hidden
    TensorPtr Ur, Uz, Un;  // hidden -> hidden
    TensorPtr br, bz, bn;  // (1, hidden)
};

struct BiGru {
    GruCell forward_cell, backward_cell;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;

    // inputs: one (batch, input_dim) tensor per position; returns one
    // (batch, 2*hidden) tensor per position.
    std::vector<TensorPtr> run(const std::vector<TensorPtr>& inputs) const;
};

struct GeneratorParams {
    BiGru encoder;
    TensorPtr head_w;  // (2*hidden, 1)
    TensorPtr head_b;  // (1, 1)
};

struct PredictorParams {
    BiGru encoder;
    TensorPtr head_w;  // (2*hidden, classes)
    TensorPtr head_b;  // (1, classes)
};

struct MaskSample {
    TensorPtr probs;    // (batch, len), padding pinned to 0
    TensorPtr relaxed;  // graph-connected relaxed values (train mode)
    TensorPtr hard;     // {0,1} forward values; straight-through in train mode
    double temperature = 1.0;
};

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t classes = 2;
    std::size_t embed_dim = 100;
    std::size_t hidden = 200;
    std::size_t n_generators = 3;
    bool share_encoder = false;
};

struct MgrModel {
    ModelConfig config;
    TensorPtr embedding;  // (vocab, embed_dim), shared by all components
    std::vector<GeneratorParams> generators;
    PredictorParams predictor;
    // Token mapping the embedding rows were trained against; carried through
    // checkpoints so evaluation encodes new text consistently.
    std::shared_ptr<Vocabulary> vocab;

    // Stable name -> tensor mapping; shared tensors appear once.
    std::vector<std::pair<std::string, TensorPtr>> named_params() const;
    void zero_grad() const;
};

MgrModel build_model(const ModelConfig& config, std::uint64_t seed);

// --- batched inputs ----------------------------------------------------------

struct EncodedBatch {
    std::vector<std::vector<std::size_t>> token_ids;  // padded to max_len
    std::vector<std::size_t> lengths;
    std::vector<std::size_t> labels;
    std::size_t max_len = 0;

    std::size_t size() const { return token_ids.size(); }
};

EncodedBatch encode_batch(const DatasetSplit& split,
                          const std::vector<std::size_t>& indices);

// --- forward passes ----------------------------------------------------------

// Per-token selection probabilities in (0,1); padding positions exactly 0.
TensorPtr generator_forward(const GeneratorParams& gen,
                            const TensorPtr& embedding,
                            const EncodedBatch& batch);

enum class SampleMode { train, eval };

// Train: binary-concrete relaxation with a straight-through hard threshold.
// Eval: deterministic threshold at 0.5.
MaskSample sample_mask(const TensorPtr& probs, double tau, SampleMode mode,
                       std::mt19937_64& rng);

struct PredictorOutput {
    TensorPtr logits;  // (batch, classes)
    TensorPtr probs;   // softmax of logits
};

// Classifies the masked text: embeddings scaled by the mask, mask-weighted
// mean pooling, linear head. Unselected tokens contribute zero vectors.
PredictorOutput predictor_forward(const PredictorParams& pred,
                                  const TensorPtr& embedding,
                                  const EncodedBatch& batch,
                                  const TensorPtr& mask);

struct GeneratorOutput {
    MaskSample mask;
    PredictorOutput prediction;
};

// One MaskSample + prediction per generator; generator i consumes its own
// sampling stream rngs[i]; all predictions come from the shared predictor.
std::vector<GeneratorOutput> mgr_forward(const MgrModel& model,
                                         const EncodedBatch& batch, double tau,
                                         SampleMode mode,
                                         std::vector<std::mt19937_64>& rngs);
std::vector<GeneratorOutput> mgr_forward_eval(const MgrModel& model,
                                              const EncodedBatch& batch);

// --- checkpoint --------------------------------------------------------------

// Versioned text container: config lines followed by named tensors with shape
// headers, values in hexfloat for exact round trips.
void save_checkpoint(const MgrModel& model, const std::string& path);
MgrModel load_checkpoint(const std::string& path);

}  // namespace mgr

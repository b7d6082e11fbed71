#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgr/adam.hpp"
#include "mgr/data.hpp"
#include "mgr/eval.hpp"
#include "mgr/model.hpp"

namespace mgr {

struct TrainConfig {
    std::size_t n = 3;          // generator count
    double eta = 0.001;         // base learning rate
    double lambda1 = 1.0;       // sparsity weight
    double lambda2 = 1.0;       // coherence weight
    double s = 0.125;           // target sparsity
    double tau = 1.0;           // sampling temperature
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 5;
    bool share_encoder = false;
    // model dimensions
    std::size_t embed_dim = 100;
    std::size_t hidden = 200;

    void validate() const;
};

TrainConfig load_config(const std::string& path);
void save_config(const TrainConfig& config, const std::string& path);
// Key-by-key override, rejecting unknown keys.
void apply_config_entry(TrainConfig& config, const std::string& key,
                        const std::string& value);

// Eq-style schedule: generator i trains at i * eta, the predictor at eta / n.
struct LrSchedule {
    std::vector<double> generator_rates;
    double predictor_rate = 0.0;

    static LrSchedule from(const TrainConfig& config);
};

// --- objective ---------------------------------------------------------------

// lambda1 * | ||M||_1 / l - s | + lambda2 * sum_t |m_t - m_{t-1}|, on the
// first l positions of a single mask.
double omega(const std::vector<double>& mask, std::size_t l, double lambda1,
             double lambda2, double s);

// Differentiable batch version over relaxed mask values (batch, len);
// averaged over the batch. Padding positions must already be 0.
TensorPtr omega_batch(const TensorPtr& relaxed,
                      const std::vector<std::size_t>& lengths, double lambda1,
                      double lambda2, double s);

struct LossResult {
    TensorPtr loss;  // scalar: sum_i [ H(Y, Y_i) + Omega(M_i) ], batch mean
    std::vector<double> ce;         // per generator
    std::vector<double> omega;      // per generator
    std::vector<double> sparsity;   // per generator, hard-mask mean
    std::vector<GeneratorOutput> outputs;
};

LossResult mgr_loss(const MgrModel& model, const EncodedBatch& batch,
                    const TrainConfig& config,
                    std::vector<std::mt19937_64>& sampling_rngs);

// --- optimization --------------------------------------------------------------

struct Optimizer {
    std::map<std::string, AdamState> states;
    LrSchedule schedule;

    static Optimizer create(const MgrModel& model, const TrainConfig& config);
    double rate_for(const std::string& param_name) const;
};

// One backward pass and one Adam update per parameter at its scheduled rate.
LossResult train_step(MgrModel& model, const EncodedBatch& batch,
                      const TrainConfig& config, Optimizer& opt,
                      std::vector<std::mt19937_64>& sampling_rngs);

// --- loop ----------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::vector<double> ce;
    std::vector<double> omega;
    double dev_acc = 0.0;
    double sparsity = 0.0;
    std::vector<double> overlaps;  // pairwise (i,j), i<j, row-major
};

struct TrainResult {
    MgrModel model;  // checkpoint with the best dev accuracy
    std::vector<EpochRecord> log;
    std::size_t best_epoch = 0;
    bool diverged = false;
};

TrainResult train_loop(MgrModel model, const DatasetSplit& train,
                       const DatasetSplit& dev, const TrainConfig& config);

void write_metric_log(const std::vector<EpochRecord>& log, std::size_t n,
                      const std::string& path);

// Trains the predictor alone on first-segment-only input for k_epochs,
// deliberately biasing it; generators are untouched.
void skew_pretrain(MgrModel& model, const DatasetSplit& train,
                   const TrainConfig& config, std::size_t k_epochs,
                   std::size_t segment_len);

// --- inference -------------------------------------------------------------------

struct InferenceResult {
    std::vector<Mask> masks;                       // trimmed to true length
    std::vector<std::vector<double>> predictions;  // class probabilities
};

// Deterministic eval-mode rationale + prediction from one generator
// (default: generator 1, the inference-time generator).
InferenceResult infer_split(const MgrModel& model, const DatasetSplit& split,
                            std::size_t generator_index = 0,
                            std::size_t batch_size = 64);

EvalReport evaluate_split(const MgrModel& model, const DatasetSplit& split,
                          std::size_t generator_index = 0);

MgrModel clone_model(const MgrModel& model);

}  // namespace mgr

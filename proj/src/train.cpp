#include "mgr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mgr/rng.hpp"

namespace mgr {

void TrainConfig::validate() const {
    if (n < 1) throw std::invalid_argument("config: n must be >= 1");
    if (eta <= 0.0) throw std::invalid_argument("config: eta must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw std::invalid_argument("config: lambdas must be non-negative");
    if (s <= 0.0 || s >= 1.0)
        throw std::invalid_argument("config: s must lie in (0,1)");
    if (tau <= 0.0) throw std::invalid_argument("config: tau must be positive");
    if (batch_size == 0)
        throw std::invalid_argument("config: batch_size must be > 0");
}

void apply_config_entry(TrainConfig& c, const std::string& key,
                        const std::string& value) {
    try {
        if (key == "n") c.n = std::stoul(value);
        else if (key == "eta") c.eta = std::stod(value);
        else if (key == "lambda1") c.lambda1 = std::stod(value);
        else if (key == "lambda2") c.lambda2 = std::stod(value);
        else if (key == "s") c.s = std::stod(value);
        else if (key == "tau") c.tau = std::stod(value);
        else if (key == "epochs") c.epochs = std::stoul(value);
        else if (key == "batch_size") c.batch_size = std::stoul(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key == "early_stop_patience")
            c.early_stop_patience = std::stoul(value);
        else if (key == "share_encoder")
            c.share_encoder = value == "1" || value == "true";
        else if (key == "embed_dim") c.embed_dim = std::stoul(value);
        else if (key == "hidden") c.hidden = std::stoul(value);
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (...) {
        throw std::invalid_argument("config: bad value for '" + key + "'");
    }
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open " + path);
    TrainConfig c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string key, value;
        is >> key >> value;
        apply_config_entry(c, key, value);
    }
    c.validate();
    return c;
}

void save_config(const TrainConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_config: cannot open " + path);
    out << "n " << c.n << "\n"
        << "eta " << c.eta << "\n"
        << "lambda1 " << c.lambda1 << "\n"
        << "lambda2 " << c.lambda2 << "\n"
        << "s " << c.s << "\n"
        << "tau " << c.tau << "\n"
        << "epochs " << c.epochs << "\n"
        << "batch_size " << c.batch_size << "\n"
        << "seed " << c.seed << "\n"
        << "early_stop_patience " << c.early_stop_patience << "\n"
        << "share_encoder " << (c.share_encoder ? 1 : 0) << "\n"
        << "embed_dim " << c.embed_dim << "\n"
        << "hidden " << c.hidden << "\n";
}

LrSchedule LrSchedule::from(const TrainConfig& config) {
    LrSchedule sched;
    for (std::size_t i = 1; i <= config.n; ++i)
        sched.generator_rates.push_back(static_cast<double>(i) * config.eta);
    sched.predictor_rate = config.eta / static_cast<double>(config.n);
    return sched;
}

double omega(const std::vector<double>& mask, std::size_t l, double lambda1,
             double lambda2, double s) {
    if (l == 0) throw std::invalid_argument("omega: zero length");
    if (l > mask.size()) throw std::invalid_argument("omega: l exceeds mask");
    double on = 0.0;
    for (std::size_t t = 0; t < l; ++t) on += mask[t];
    double transitions = 0.0;
    for (std::size_t t = 1; t < l; ++t)
        transitions += std::fabs(mask[t] - mask[t - 1]);
    return lambda1 * std::fabs(on / static_cast<double>(l) - s) +
           lambda2 * transitions;
}

TensorPtr omega_batch(const TensorPtr& relaxed,
                      const std::vector<std::size_t>& lengths, double lambda1,
                      double lambda2, double s) {
    if (relaxed->shape.size() != 2 || relaxed->shape[0] != lengths.size())
        throw std::invalid_argument("omega_batch: relaxed " +
                                    shape_str(*relaxed) + " vs " +
                                    std::to_string(lengths.size()) + " lengths");
    const std::size_t batch = relaxed->shape[0];
    const std::size_t len = relaxed->shape[1];
    for (std::size_t l : lengths)
        if (l == 0) throw std::invalid_argument("omega_batch: zero length");

    auto inv_len = tensor({batch, 1});
    for (std::size_t b = 0; b < batch; ++b)
        inv_len->data[b] = 1.0 / static_cast<double>(lengths[b]);

    // | ||M||_1 / l - s | per example
    auto frac = mul(sum_rows(relaxed), inv_len);
    auto sparse_term = abs_t(add_const(frac, -s));

    TensorPtr total = scale(sum_all(sparse_term), lambda1);
    if (len > 1) {
        // adjacent-position transitions, valid pairs only
        auto pair_mask = tensor({batch, len - 1});
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 1; t < lengths[b]; ++t)
                pair_mask->data[b * (len - 1) + (t - 1)] = 1.0;
        auto diffs = abs_t(sub(slice_cols(relaxed, 1, len - 1),
                               slice_cols(relaxed, 0, len - 1)));
        total = add(total, scale(sum_all(mul(diffs, pair_mask)), lambda2));
    }
    return scale(total, 1.0 / static_cast<double>(batch));
}

LossResult mgr_loss(const MgrModel& model, const EncodedBatch& batch,
                    const TrainConfig& config,
                    std::vector<std::mt19937_64>& sampling_rngs) {
    if (batch.size() == 0) throw std::invalid_argument("mgr_loss: empty batch");
    LossResult result;
    result.outputs = mgr_forward(model, batch, config.tau, SampleMode::train,
                                 sampling_rngs);
    TensorPtr total;
    for (std::size_t i = 0; i < result.outputs.size(); ++i) {
        auto& out = result.outputs[i];
        auto ce = cross_entropy_rows(out.prediction.logits, batch.labels);
        auto om = omega_batch(out.mask.relaxed, batch.lengths, config.lambda1,
                              config.lambda2, config.s);
        if (!std::isfinite(ce->item()))
            throw std::runtime_error("mgr_loss: non-finite cross entropy in "
                                     "generator " + std::to_string(i + 1));
        if (!std::isfinite(om->item()))
            throw std::runtime_error("mgr_loss: non-finite omega in generator " +
                                     std::to_string(i + 1));
        result.ce.push_back(ce->item());
        result.omega.push_back(om->item());
        double on = 0.0, tokens = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            for (std::size_t t = 0; t < batch.lengths[b]; ++t)
                on += out.mask.hard->data[b * batch.max_len + t];
            tokens += static_cast<double>(batch.lengths[b]);
        }
        result.sparsity.push_back(on / tokens);
        auto term = add(ce, om);
        total = total ? add(total, term) : term;
    }
    result.loss = total;
    return result;
}

Optimizer Optimizer::create(const MgrModel& model, const TrainConfig& config) {
    Optimizer opt;
    opt.schedule = LrSchedule::from(config);
    for (auto& [name, p] : model.named_params())
        opt.states.emplace(name, AdamState::for_param(*p));
    return opt;
}

double Optimizer::rate_for(const std::string& name) const {
    if (name.rfind("pred.", 0) == 0) return schedule.predictor_rate;
    if (name.rfind("gen", 0) == 0) {
        std::size_t dot = name.find('.');
        std::size_t i = std::stoul(name.substr(3, dot - 3));
        return schedule.generator_rates.at(i - 1);
    }
    // shared embedding trains at the base rate
    return schedule.generator_rates.at(0);
}

LossResult train_step(MgrModel& model, const EncodedBatch& batch,
                      const TrainConfig& config, Optimizer& opt,
                      std::vector<std::mt19937_64>& sampling_rngs) {
    auto result = mgr_loss(model, batch, config, sampling_rngs);
    model.zero_grad();
    result.loss->backward();
    for (auto& [name, p] : model.named_params()) {
        if (p->grad.empty()) p->grad.assign(p->size(), 0.0);
        adam_step(*p, p->grad, opt.states.at(name), opt.rate_for(name));
    }
    return result;
}

MgrModel clone_model(const MgrModel& model) {
    MgrModel copy = build_model(model.config, 0);
    copy.vocab = model.vocab;
    auto src = model.named_params();
    auto dst = copy.named_params();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second->data = src[i].second->data;
    return copy;
}

namespace {

std::vector<Mask> trim_masks(const std::vector<GeneratorOutput>& outputs,
                             std::size_t g, const EncodedBatch& batch) {
    std::vector<Mask> masks(batch.size());
    const auto& hard = outputs[g].mask.hard;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        masks[b].resize(batch.lengths[b]);
        for (std::size_t t = 0; t < batch.lengths[b]; ++t)
            masks[b][t] = hard->data[b * batch.max_len + t] > 0.5 ? 1 : 0;
    }
    return masks;
}

}  // namespace

InferenceResult infer_split(const MgrModel& model, const DatasetSplit& split,
                            std::size_t generator_index,
                            std::size_t batch_size) {
    InferenceResult result;
    for (std::size_t start = 0; start < split.examples.size();
         start += batch_size) {
        std::vector<std::size_t> indices;
        for (std::size_t i = start;
             i < std::min(start + batch_size, split.examples.size()); ++i)
            indices.push_back(i);
        auto batch = encode_batch(split, indices);
        auto probs =
            generator_forward(model.generators.at(generator_index),
                              model.embedding, batch);
        static std::mt19937_64 unused;
        auto mask = sample_mask(probs, 1.0, SampleMode::eval, unused);
        auto pred = predictor_forward(model.predictor, model.embedding, batch,
                                      mask.hard);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            Mask m(batch.lengths[b]);
            for (std::size_t t = 0; t < batch.lengths[b]; ++t)
                m[t] = mask.hard->data[b * batch.max_len + t] > 0.5 ? 1 : 0;
            result.masks.push_back(std::move(m));
            std::vector<double> p(model.config.classes);
            for (std::size_t c = 0; c < p.size(); ++c)
                p[c] = pred.probs->data[b * p.size() + c];
            result.predictions.push_back(std::move(p));
        }
    }
    return result;
}

EvalReport evaluate_split(const MgrModel& model, const DatasetSplit& split,
                          std::size_t generator_index) {
    auto inference = infer_split(model, split, generator_index);
    EvalReport report;
    report.total_examples = split.examples.size();
    std::vector<std::size_t> labels;
    for (const auto& ex : split.examples) labels.push_back(ex.label);
    report.accuracy = accuracy(inference.predictions, labels);
    report.sparsity_S = sparsity(inference.masks);

    std::vector<Mask> pred_annotated, gold;
    for (std::size_t i = 0; i < split.examples.size(); ++i) {
        if (!split.examples[i].gold_mask) continue;
        pred_annotated.push_back(inference.masks[i]);
        gold.push_back(*split.examples[i].gold_mask);
    }
    report.annotated_examples = gold.size();
    if (!gold.empty()) report.prf = token_prf1(pred_annotated, gold);
    return report;
}

TrainResult train_loop(MgrModel model, const DatasetSplit& train,
                       const DatasetSplit& dev, const TrainConfig& config) {
    config.validate();
    TrainResult result;
    result.model = clone_model(model);
    if (config.epochs == 0) return result;

    Optimizer opt = Optimizer::create(model, config);
    BalancedBatcher batcher(train, config.batch_size, config.seed);
    std::vector<std::mt19937_64> sampling_rngs;
    for (std::size_t i = 0; i < config.n; ++i)
        sampling_rngs.push_back(substream(config.seed, "mask-sampling", i + 1));

    double best_acc = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.ce.assign(config.n, 0.0);
        rec.omega.assign(config.n, 0.0);
        std::size_t steps = 0;
        try {
            for (const auto& indices : batcher.epoch_batches(epoch)) {
                auto batch = encode_batch(train, indices);
                auto step = train_step(model, batch, config, opt, sampling_rngs);
                rec.loss += step.loss->item();
                for (std::size_t i = 0; i < config.n; ++i) {
                    rec.ce[i] += step.ce[i];
                    rec.omega[i] += step.omega[i];
                }
                ++steps;
            }
        } catch (const std::runtime_error&) {
            result.diverged = true;  // keep the last good checkpoint
            break;
        }
        if (steps > 0) {
            rec.loss /= static_cast<double>(steps);
            for (std::size_t i = 0; i < config.n; ++i) {
                rec.ce[i] /= static_cast<double>(steps);
                rec.omega[i] /= static_cast<double>(steps);
            }
        }

        // dev metrics: generator-1 inference plus pairwise mask differences
        auto report = evaluate_split(model, dev, 0);
        rec.dev_acc = report.accuracy;
        rec.sparsity = report.sparsity_S;
        if (config.n > 1) {
            std::vector<std::vector<Mask>> dev_masks(config.n);
            for (std::size_t g = 0; g < config.n; ++g)
                dev_masks[g] = infer_split(model, dev, g).masks;
            for (std::size_t i = 0; i < config.n; ++i)
                for (std::size_t j = i + 1; j < config.n; ++j)
                    rec.overlaps.push_back(
                        generator_overlap_batch(dev_masks[i], dev_masks[j]));
        }
        result.log.push_back(rec);

        // Checkpoint on dev accuracy; accuracy ties go to the epoch with the
        // lower training loss, so the objective keeps improving the saved
        // model after accuracy saturates. Patience counts accuracy only.
        if (rec.dev_acc > best_acc ||
            (rec.dev_acc == best_acc && rec.loss < best_loss)) {
            result.best_epoch = epoch;
            result.model = clone_model(model);
            best_loss = rec.loss;
        }
        if (rec.dev_acc > best_acc) {
            best_acc = rec.dev_acc;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= config.early_stop_patience) break;
        }
    }
    return result;
}

void write_metric_log(const std::vector<EpochRecord>& log, std::size_t n,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metric_log: cannot open " + path);
    out << "epoch,loss";
    for (std::size_t i = 1; i <= n; ++i) out << ",ce_g" << i;
    for (std::size_t i = 1; i <= n; ++i) out << ",omega_g" << i;
    out << ",dev_acc,sparsity";
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = i + 1; j <= n; ++j) out << ",overlap_" << i << j;
    out << "\n";
    out.precision(10);
    for (const auto& rec : log) {
        out << rec.epoch << "," << rec.loss;
        for (double v : rec.ce) out << "," << v;
        for (double v : rec.omega) out << "," << v;
        out << "," << rec.dev_acc << "," << rec.sparsity;
        for (double v : rec.overlaps) out << "," << v;
        out << "\n";
    }
}

void skew_pretrain(MgrModel& model, const DatasetSplit& train,
                   const TrainConfig& config, std::size_t k_epochs,
                   std::size_t segment_len) {
    if (segment_len == 0)
        throw std::invalid_argument("skew_pretrain: segment_len must be > 0");
    if (k_epochs == 0) return;

    // Predictor-only Adam at the base rate.
    std::map<std::string, AdamState> states;
    std::vector<std::pair<std::string, TensorPtr>> pred_params;
    for (auto& [name, p] : model.named_params())
        if (name.rfind("pred.", 0) == 0) {
            pred_params.emplace_back(name, p);
            states.emplace(name, AdamState::for_param(*p));
        }

    BalancedBatcher batcher(train, config.batch_size,
                            derive_seed(config.seed, "skew-pretrain"));
    for (std::size_t epoch = 1; epoch <= k_epochs; ++epoch) {
        for (const auto& indices : batcher.epoch_batches(epoch)) {
            auto batch = encode_batch(train, indices);
            // first-segment-only input
            auto mask = tensor({batch.size(), batch.max_len});
            for (std::size_t b = 0; b < batch.size(); ++b)
                for (std::size_t t = 0;
                     t < std::min(segment_len, batch.lengths[b]); ++t)
                    mask->data[b * batch.max_len + t] = 1.0;
            auto pred = predictor_forward(model.predictor, model.embedding,
                                          batch, mask);
            auto loss = cross_entropy_rows(pred.logits, batch.labels);
            for (auto& [name, p] : pred_params) p->zero_grad();
            model.embedding->zero_grad();
            loss->backward();
            for (auto& [name, p] : pred_params) {
                if (p->grad.empty()) p->grad.assign(p->size(), 0.0);
                adam_step(*p, p->grad, states.at(name), config.eta);
            }
        }
    }
}

}  // namespace mgr

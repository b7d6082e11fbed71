#include "mgr/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mgr/rng.hpp"

namespace mgr {

namespace {

TensorPtr rand_uniform(std::vector<std::size_t> shape, double bound,
                       std::mt19937_64& rng) {
    auto t = tensor(std::move(shape), true);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t->data) v = dist(rng);
    return t;
}

GruCell make_cell(std::size_t input_dim, std::size_t hidden,
                  std::mt19937_64& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    GruCell c;
    c.Wr = rand_uniform({input_dim, hidden}, k, rng);
    c.Wz = rand_uniform({input_dim, hidden}, k, rng);
    c.Wn = rand_uniform({input_dim, hidden}, k, rng);
    c.Ur = rand_uniform({hidden, hidden}, k, rng);
    c.Uz = rand_uniform({hidden, hidden}, k, rng);
    c.Un = rand_uniform({hidden, hidden}, k, rng);
    c.br = rand_uniform({1, hidden}, k, rng);
    c.bz = rand_uniform({1, hidden}, k, rng);
    c.bn = rand_uniform({1, hidden}, k, rng);
    return c;
}

BiGru make_bigru(std::size_t input_dim, std::size_t hidden,
                 std::mt19937_64& rng) {
    BiGru g;
    g.input_dim = input_dim;
    g.hidden = hidden;
    g.forward_cell = make_cell(input_dim, hidden, rng);
    g.backward_cell = make_cell(input_dim, hidden, rng);
    return g;
}

TensorPtr gru_step(const GruCell& c, const TensorPtr& x, const TensorPtr& h) {
    auto r = sigmoid(add(add(matmul(x, c.Wr), matmul(h, c.Ur)), c.br));
    auto z = sigmoid(add(add(matmul(x, c.Wz), matmul(h, c.Uz)), c.bz));
    auto n = tanh_t(add(add(matmul(x, c.Wn), mul(matmul(h, c.Un), r)), c.bn));
    // h' = h + z * (n - h)
    return add(h, mul(sub(n, h), z));
}

std::vector<TensorPtr> run_direction(const GruCell& cell,
                                     const std::vector<TensorPtr>& inputs,
                                     std::size_t hidden, bool reverse) {
    const std::size_t L = inputs.size();
    const std::size_t batch = inputs[0]->rows();
    std::vector<TensorPtr> states(L);
    TensorPtr h = tensor({batch, hidden});
    for (std::size_t s = 0; s < L; ++s) {
        std::size_t t = reverse ? L - 1 - s : s;
        h = gru_step(cell, inputs[t], h);
        states[t] = h;
    }
    return states;
}

void append_cell(std::vector<std::pair<std::string, TensorPtr>>& out,
                 const std::string& prefix, const GruCell& c) {
    out.emplace_back(prefix + ".Wr", c.Wr);
    out.emplace_back(prefix + ".Wz", c.Wz);
    out.emplace_back(prefix + ".Wn", c.Wn);
    out.emplace_back(prefix + ".Ur", c.Ur);
    out.emplace_back(prefix + ".Uz", c.Uz);
    out.emplace_back(prefix + ".Un", c.Un);
    out.emplace_back(prefix + ".br", c.br);
    out.emplace_back(prefix + ".bz", c.bz);
    out.emplace_back(prefix + ".bn", c.bn);
}

void append_bigru(std::vector<std::pair<std::string, TensorPtr>>& out,
                  const std::string& prefix, const BiGru& g) {
    append_cell(out, prefix + ".fwd", g.forward_cell);
    append_cell(out, prefix + ".bwd", g.backward_cell);
}

}  // namespace

std::vector<TensorPtr> BiGru::run(const std::vector<TensorPtr>& inputs) const {
    if (inputs.empty()) throw std::invalid_argument("BiGru: empty input");
    auto fwd = run_direction(forward_cell, inputs, hidden, false);
    auto bwd = run_direction(backward_cell, inputs, hidden, true);
    std::vector<TensorPtr> out(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t)
        out[t] = concat_cols({fwd[t], bwd[t]});
    return out;
}

std::vector<std::pair<std::string, TensorPtr>> MgrModel::named_params() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("embedding", embedding);
    for (std::size_t i = 0; i < generators.size(); ++i) {
        const std::string prefix = "gen" + std::to_string(i + 1);
        if (i == 0 || !config.share_encoder)
            append_bigru(out, prefix + ".enc", generators[i].encoder);
        out.emplace_back(prefix + ".head.w", generators[i].head_w);
        out.emplace_back(prefix + ".head.b", generators[i].head_b);
    }
    append_bigru(out, "pred.enc", predictor.encoder);
    out.emplace_back("pred.head.w", predictor.head_w);
    out.emplace_back("pred.head.b", predictor.head_b);
    return out;
}

void MgrModel::zero_grad() const {
    for (auto& [name, p] : named_params()) p->zero_grad();
}

MgrModel build_model(const ModelConfig& config, std::uint64_t seed) {
    if (config.n_generators < 1)
        throw std::invalid_argument("build_model: need at least one generator");
    if (config.vocab_size == 0 || config.classes < 2)
        throw std::invalid_argument("build_model: invalid vocab/classes");

    MgrModel model;
    model.config = config;
    {
        auto rng = substream(seed, "embedding-init");
        model.embedding = randn({config.vocab_size, config.embed_dim}, 0.1, rng);
    }
    const double kh = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    for (std::size_t i = 0; i < config.n_generators; ++i) {
        auto rng = substream(seed, "generator-init", i + 1);
        GeneratorParams gen;
        if (config.share_encoder && i > 0)
            gen.encoder = model.generators[0].encoder;
        else
            gen.encoder = make_bigru(config.embed_dim, config.hidden, rng);
        gen.head_w = rand_uniform({2 * config.hidden, 1}, kh, rng);
        gen.head_b = rand_uniform({1, 1}, kh, rng);
        model.generators.push_back(std::move(gen));
    }
    {
        auto rng = substream(seed, "predictor-init");
        model.predictor.encoder =
            make_bigru(config.embed_dim, config.hidden, rng);
        model.predictor.head_w =
            rand_uniform({2 * config.hidden, config.classes}, kh, rng);
        model.predictor.head_b = rand_uniform({1, config.classes}, kh, rng);
    }
    return model;
}

EncodedBatch encode_batch(const DatasetSplit& split,
                          const std::vector<std::size_t>& indices) {
    if (indices.empty())
        throw std::invalid_argument("encode_batch: empty batch");
    EncodedBatch batch;
    for (std::size_t idx : indices)
        batch.max_len =
            std::max(batch.max_len, split.examples[idx].length());
    if (batch.max_len == 0)
        throw std::invalid_argument("encode_batch: empty examples");
    for (std::size_t idx : indices) {
        const Example& ex = split.examples[idx];
        std::vector<std::size_t> ids = ex.token_ids;
        ids.resize(batch.max_len, Vocabulary::kPadId);
        batch.token_ids.push_back(std::move(ids));
        batch.lengths.push_back(ex.length());
        batch.labels.push_back(ex.label);
    }
    return batch;
}

namespace {

// Column of token ids at position t across the batch.
std::vector<std::size_t> ids_at(const EncodedBatch& batch, std::size_t t) {
    std::vector<std::size_t> ids(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b)
        ids[b] = batch.token_ids[b][t];
    return ids;
}

// Constant {0,1} matrix marking non-padding positions.
TensorPtr valid_mask(const EncodedBatch& batch) {
    auto m = tensor({batch.size(), batch.max_len});
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (std::size_t t = 0; t < batch.lengths[b]; ++t)
            m->data[b * batch.max_len + t] = 1.0;
    return m;
}

}  // namespace

TensorPtr generator_forward(const GeneratorParams& gen,
                            const TensorPtr& embedding,
                            const EncodedBatch& batch) {
    if (batch.size() == 0 || batch.max_len == 0)
        throw std::invalid_argument("generator_forward: empty input");
    std::vector<TensorPtr> inputs(batch.max_len);
    for (std::size_t t = 0; t < batch.max_len; ++t)
        inputs[t] = embedding_rows(embedding, ids_at(batch, t));
    auto states = gen.encoder.run(inputs);
    std::vector<TensorPtr> logit_cols(batch.max_len);
    for (std::size_t t = 0; t < batch.max_len; ++t)
        logit_cols[t] = add(matmul(states[t], gen.head_w), gen.head_b);
    auto probs = sigmoid(concat_cols(logit_cols));
    return mul(probs, valid_mask(batch));  // pin padding to exactly 0
}

MaskSample sample_mask(const TensorPtr& probs, double tau, SampleMode mode,
                       std::mt19937_64& rng) {
    if (tau <= 0.0)
        throw std::invalid_argument("sample_mask: tau must be positive");
    MaskSample sample;
    sample.probs = probs;
    sample.temperature = tau;
    if (mode == SampleMode::train) {
        sample.relaxed = binary_concrete(probs, tau, rng);
        sample.hard = straight_through_threshold(sample.relaxed);
    } else {
        auto hard = tensor(probs->shape);
        for (std::size_t i = 0; i < probs->size(); ++i)
            hard->data[i] = probs->data[i] > 0.5 ? 1.0 : 0.0;
        sample.relaxed = hard;
        sample.hard = hard;
    }
    return sample;
}

PredictorOutput predictor_forward(const PredictorParams& pred,
                                  const TensorPtr& embedding,
                                  const EncodedBatch& batch,
                                  const TensorPtr& mask) {
    if (mask->shape != std::vector<std::size_t>{batch.size(), batch.max_len})
        throw std::invalid_argument("predictor_forward: mask " +
                                    shape_str(*mask) + " does not match batch");
    std::vector<TensorPtr> mask_cols(batch.max_len);
    std::vector<TensorPtr> inputs(batch.max_len);
    for (std::size_t t = 0; t < batch.max_len; ++t) {
        mask_cols[t] = slice_cols(mask, t, 1);
        auto emb_t = embedding_rows(embedding, ids_at(batch, t));
        inputs[t] = mul(emb_t, mask_cols[t]);  // Z = M (.) X
    }
    auto states = pred.encoder.run(inputs);

    // Mask-weighted mean pooling: unselected positions carry no weight.
    TensorPtr num = mul(states[0], mask_cols[0]);
    for (std::size_t t = 1; t < batch.max_len; ++t)
        num = add(num, mul(states[t], mask_cols[t]));
    auto den = add_const(sum_rows(mask), 1e-8);
    auto pooled = div(num, den);

    PredictorOutput out;
    out.logits = add(matmul(pooled, pred.head_w), pred.head_b);
    out.probs = softmax_rows(out.logits);
    return out;
}

std::vector<GeneratorOutput> mgr_forward(const MgrModel& model,
                                         const EncodedBatch& batch, double tau,
                                         SampleMode mode,
                                         std::vector<std::mt19937_64>& rngs) {
    if (mode == SampleMode::train && rngs.size() < model.generators.size())
        throw std::invalid_argument("mgr_forward: need one rng per generator");
    std::vector<GeneratorOutput> outputs;
    for (std::size_t i = 0; i < model.generators.size(); ++i) {
        GeneratorOutput out;
        auto probs =
            generator_forward(model.generators[i], model.embedding, batch);
        static std::mt19937_64 unused_rng;
        out.mask = sample_mask(probs, tau, mode,
                               mode == SampleMode::train ? rngs[i] : unused_rng);
        out.prediction = predictor_forward(model.predictor, model.embedding,
                                           batch, out.mask.hard);
        outputs.push_back(std::move(out));
    }
    return outputs;
}

std::vector<GeneratorOutput> mgr_forward_eval(const MgrModel& model,
                                              const EncodedBatch& batch) {
    std::vector<std::mt19937_64> none;
    return mgr_forward(model, batch, 1.0, SampleMode::eval, none);
}

// --- checkpoint --------------------------------------------------------------

void save_checkpoint(const MgrModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << "MGR-CKPT v1\n";
    out << "vocab_size " << model.config.vocab_size << "\n";
    out << "classes " << model.config.classes << "\n";
    out << "embed_dim " << model.config.embed_dim << "\n";
    out << "hidden " << model.config.hidden << "\n";
    out << "n_generators " << model.config.n_generators << "\n";
    out << "share_encoder " << (model.config.share_encoder ? 1 : 0) << "\n";
    if (model.vocab) {
        // tokens are whitespace-free by construction (whitespace tokenizer)
        out << "vocab " << model.vocab->id_to_token.size() << "\n";
        for (const auto& tok : model.vocab->id_to_token) out << tok << "\n";
    }
    auto params = model.named_params();
    out << "tensors " << params.size() << "\n";
    char buf[64];
    for (auto& [name, p] : params) {
        out << name;
        for (std::size_t d : p->shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < p->size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", p->data[i]);
            out << buf << (i + 1 == p->size() ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

MgrModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic, version;
    in >> magic >> version;
    if (magic != "MGR-CKPT" || version != "v1")
        throw std::runtime_error("load_checkpoint: unrecognized format");
    ModelConfig config;
    std::shared_ptr<Vocabulary> vocab;
    std::size_t n_tensors = 0;
    std::string key;
    while (in >> key && key != "tensors") {
        std::size_t value;
        in >> value;
        if (key == "vocab") {
            vocab = std::make_shared<Vocabulary>();
            vocab->id_to_token.resize(value);
            vocab->token_to_id.clear();
            for (std::size_t i = 0; i < value; ++i) {
                in >> vocab->id_to_token[i];
                vocab->token_to_id[vocab->id_to_token[i]] = i;
            }
            continue;
        }
        if (key == "vocab_size") config.vocab_size = value;
        else if (key == "classes") config.classes = value;
        else if (key == "embed_dim") config.embed_dim = value;
        else if (key == "hidden") config.hidden = value;
        else if (key == "n_generators") config.n_generators = value;
        else if (key == "share_encoder") config.share_encoder = value != 0;
        else throw std::runtime_error("load_checkpoint: unknown key " + key);
    }
    in >> n_tensors;

    MgrModel model = build_model(config, 0);
    model.vocab = std::move(vocab);
    auto params = model.named_params();
    if (params.size() != n_tensors)
        throw std::runtime_error("load_checkpoint: tensor count mismatch");
    std::unordered_map<std::string, TensorPtr> by_name(params.begin(),
                                                       params.end());
    for (std::size_t t = 0; t < n_tensors; ++t) {
        std::string name;
        in >> name;
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("load_checkpoint: unknown tensor " + name);
        TensorPtr p = it->second;
        for (std::size_t d = 0; d < p->shape.size(); ++d) {
            std::size_t dim;
            in >> dim;
            if (dim != p->shape[d])
                throw std::runtime_error("load_checkpoint: shape mismatch for " +
                                         name);
        }
        for (std::size_t i = 0; i < p->size(); ++i) {
            std::string tok;
            in >> tok;
            p->data[i] = std::strtod(tok.c_str(), nullptr);
        }
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file");
    return model;
}

}  // namespace mgr

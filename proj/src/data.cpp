#include "mgr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mgr/rng.hpp"

namespace mgr {

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
}

std::size_t Vocabulary::add(const std::string& token) {
    auto [it, inserted] = token_to_id.emplace(token, id_to_token.size());
    if (inserted) id_to_token.push_back(token);
    return it->second;
}

std::size_t Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnkId : it->second;
}

namespace {

std::vector<std::string> tokenize_lower(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(static_cast<char>(
                std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace

DatasetSplit load_dataset(const std::string& path,
                          std::shared_ptr<Vocabulary> vocab,
                          std::size_t max_len) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    const bool grow_vocab = vocab == nullptr;
    if (!vocab) vocab = std::make_shared<Vocabulary>();

    DatasetSplit split;
    split.vocab = vocab;
    std::string line;
    std::size_t record = 0;
    std::size_t max_label = 0;
    while (std::getline(in, line)) {
        ++record;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2)
            throw std::runtime_error("load_dataset: record " +
                                     std::to_string(record) +
                                     ": expected label<TAB>text");
        std::size_t label;
        try {
            std::size_t pos;
            long v = std::stol(fields[0], &pos);
            if (pos != fields[0].size() || v < 0) throw std::exception();
            label = static_cast<std::size_t>(v);
        } catch (...) {
            throw std::runtime_error("load_dataset: record " +
                                     std::to_string(record) +
                                     ": unknown label '" + fields[0] + "'");
        }
        auto tokens = tokenize_lower(fields[1]);
        Example ex;
        ex.label = label;
        max_label = std::max(max_label, label);
        for (const auto& t : tokens)
            ex.token_ids.push_back(grow_vocab ? vocab->add(t)
                                              : vocab->lookup(t));
        if (fields.size() >= 3 && !fields[2].empty()) {
            auto spans_json = nlohmann::json::parse(fields[2]);
            std::vector<std::pair<std::size_t, std::size_t>> spans;
            for (const auto& s : spans_json) {
                std::size_t b = s.at(0).get<std::size_t>();
                std::size_t e = s.at(1).get<std::size_t>();
                if (b >= e || e > tokens.size())
                    throw std::runtime_error(
                        "load_dataset: record " + std::to_string(record) +
                        ": span [" + std::to_string(b) + "," +
                        std::to_string(e) + ") outside text of length " +
                        std::to_string(tokens.size()));
                spans.emplace_back(b, e);
            }
            ex.gold_mask = spans_to_mask(spans, tokens.size());
        }
        if (ex.token_ids.size() > max_len) {
            ex.token_ids.resize(max_len);
            if (ex.gold_mask) ex.gold_mask->resize(max_len);
        }
        split.examples.push_back(std::move(ex));
    }
    vocab->class_count = std::max<std::size_t>(2, max_label + 1);
    return split;
}

void save_dataset(const DatasetSplit& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    for (const auto& ex : split.examples) {
        out << ex.label << '\t';
        for (std::size_t i = 0; i < ex.token_ids.size(); ++i)
            out << (i ? " " : "") << split.vocab->id_to_token[ex.token_ids[i]];
        if (ex.gold_mask) {
            nlohmann::json spans = nlohmann::json::array();
            for (auto [b, e] : mask_to_spans(*ex.gold_mask))
                spans.push_back({b, e});
            out << '\t' << spans.dump();
        }
        out << '\n';
    }
}

EmbeddingMatrix load_embeddings(const std::string& path,
                                const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_embeddings: cannot open " + path);
    std::string line;
    std::size_t dim = 0, line_no = 0, loaded = 0;
    std::unordered_map<std::string, std::vector<double>> vectors;
    std::vector<double> mean;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string token;
        is >> token;
        std::vector<double> v;
        double x;
        while (is >> x) v.push_back(x);
        if (v.empty())
            throw std::runtime_error("load_embeddings: line " +
                                     std::to_string(line_no) + ": no values");
        if (dim == 0) {
            dim = v.size();
            mean.assign(dim, 0.0);
        } else if (v.size() != dim) {
            throw std::runtime_error(
                "load_embeddings: line " + std::to_string(line_no) +
                ": dimension " + std::to_string(v.size()) + " != " +
                std::to_string(dim));
        }
        for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
        vectors.emplace(std::move(token), std::move(v));
        ++loaded;
    }
    if (loaded == 0) throw std::runtime_error("load_embeddings: no vectors");
    for (double& m : mean) m /= static_cast<double>(loaded);

    EmbeddingMatrix emb;
    emb.dim = dim;
    emb.weights = tensor({vocab.size(), dim}, true);
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        const std::vector<double>* row = nullptr;
        if (id == Vocabulary::kUnkId) {
            row = &mean;
        } else if (id != Vocabulary::kPadId) {
            auto it = vectors.find(vocab.id_to_token[id]);
            if (it != vectors.end()) row = &it->second;
        }
        if (row)
            std::copy(row->begin(), row->end(),
                      emb.weights->data.begin() + id * dim);
    }
    return emb;
}

std::vector<std::pair<std::size_t, std::size_t>> mask_to_spans(
    const std::vector<std::uint8_t>& mask) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::size_t i = 0;
    while (i < mask.size()) {
        if (mask[i]) {
            std::size_t b = i;
            while (i < mask.size() && mask[i]) ++i;
            spans.emplace_back(b, i);
        } else {
            ++i;
        }
    }
    return spans;
}

std::vector<std::uint8_t> spans_to_mask(
    const std::vector<std::pair<std::size_t, std::size_t>>& spans,
    std::size_t length) {
    std::vector<std::uint8_t> mask(length, 0);
    for (auto [b, e] : spans) {
        if (b >= e || e > length)
            throw std::invalid_argument("spans_to_mask: span out of range");
        std::fill(mask.begin() + b, mask.begin() + e, 1);
    }
    return mask;
}

BalancedBatcher::BalancedBatcher(const DatasetSplit& split,
                                 std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0)
        throw std::invalid_argument("BalancedBatcher: batch_size must be > 0");
    by_class_.resize(split.vocab->class_count);
    for (std::size_t i = 0; i < split.examples.size(); ++i)
        by_class_[split.examples[i].label].push_back(i);
    for (std::size_t c = 0; c < by_class_.size(); ++c)
        if (by_class_[c].empty())
            throw std::invalid_argument("BalancedBatcher: class " +
                                        std::to_string(c) + " has no examples");
}

std::size_t BalancedBatcher::epoch_example_count() const {
    std::size_t m = by_class_[0].size();
    for (const auto& cls : by_class_) m = std::min(m, cls.size());
    return m * by_class_.size();
}

std::vector<std::vector<std::size_t>> BalancedBatcher::epoch_batches(
    std::size_t epoch) const {
    auto rng = substream(seed_, "balanced-batches", epoch);
    std::size_t min_count = by_class_[0].size();
    for (const auto& cls : by_class_) min_count = std::min(min_count, cls.size());

    std::vector<std::size_t> pool;
    for (const auto& cls : by_class_) {
        std::vector<std::size_t> shuffled = cls;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        pool.insert(pool.end(), shuffled.begin(), shuffled.begin() + min_count);
    }
    std::shuffle(pool.begin(), pool.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < pool.size(); i += batch_size_) {
        std::size_t end = std::min(i + batch_size_, pool.size());
        batches.emplace_back(pool.begin() + i, pool.begin() + end);
    }
    return batches;
}

namespace {

struct CueSets {
    // [class][j] token ids, disjoint per class and per role
    std::vector<std::vector<std::size_t>> causal, spurious;
    std::vector<std::size_t> fillers;
};

CueSets layout_cues(Vocabulary& vocab, const SyntheticSpec& spec) {
    const std::size_t classes = 2;
    CueSets cues;
    cues.causal.resize(classes);
    cues.spurious.resize(classes);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < spec.cues_per_class; ++j)
            cues.causal[c].push_back(
                vocab.add("c" + std::to_string(c) + "_" + std::to_string(j)));
    const std::size_t spurious_cues = spec.spurious_cues_per_class
                                          ? spec.spurious_cues_per_class
                                          : spec.cues_per_class;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < spurious_cues; ++j)
            cues.spurious[c].push_back(
                vocab.add("s" + std::to_string(c) + "_" + std::to_string(j)));
    while (vocab.size() < spec.vocab_size)
        cues.fillers.push_back(vocab.add("w" + std::to_string(vocab.size())));
    if (cues.fillers.empty())
        throw std::invalid_argument(
            "generate_synthetic: vocab_size leaves no filler tokens");
    return cues;
}

Example make_example(const SyntheticSpec& spec, const CueSets& cues,
                     std::mt19937_64& rng) {
    const std::size_t L = spec.seq_len;
    std::uniform_int_distribution<std::size_t> pick_label(0, 1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    Example ex;
    ex.label = pick_label(rng);
    ex.token_ids.resize(L);
    std::uniform_int_distribution<std::size_t> pick_filler(
        0, cues.fillers.size() - 1);
    for (std::size_t t = 0; t < L; ++t)
        ex.token_ids[t] = cues.fillers[pick_filler(rng)];

    const bool has_spurious = uni(rng) < spec.rho;

    // Non-overlapping offsets; the spurious span may be pinned at 0.
    std::size_t causal_off, spurious_off = 0;
    std::uniform_int_distribution<std::size_t> pick_causal(
        0, L - spec.causal_len);
    if (has_spurious) {
        std::uniform_int_distribution<std::size_t> pick_spurious(
            0, L - spec.spurious_len);
        do {
            causal_off = pick_causal(rng);
            spurious_off = spec.spurious_first ? 0 : pick_spurious(rng);
        } while (causal_off < spurious_off + spec.spurious_len &&
                 spurious_off < causal_off + spec.causal_len);
    } else {
        causal_off = pick_causal(rng);
    }

    const auto& cset = cues.causal[ex.label];
    std::uniform_int_distribution<std::size_t> pick_cue(0, cset.size() - 1);
    for (std::size_t t = 0; t < spec.causal_len; ++t)
        ex.token_ids[causal_off + t] = cset[pick_cue(rng)];
    if (has_spurious) {
        const auto& sset = cues.spurious[ex.label];
        std::uniform_int_distribution<std::size_t> pick_s(0, sset.size() - 1);
        for (std::size_t t = 0; t < spec.spurious_len; ++t)
            ex.token_ids[spurious_off + t] = sset[pick_s(rng)];
    }

    ex.gold_mask = std::vector<std::uint8_t>(L, 0);
    std::fill(ex.gold_mask->begin() + causal_off,
              ex.gold_mask->begin() + causal_off + spec.causal_len, 1);
    return ex;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    if (spec.rho < 0.0 || spec.rho > 1.0)
        throw std::invalid_argument("generate_synthetic: rho outside [0,1]");
    if (spec.causal_len + spec.spurious_len > spec.seq_len)
        throw std::invalid_argument(
            "generate_synthetic: spans cannot fit inside seq_len");
    if (spec.causal_len == 0)
        throw std::invalid_argument("generate_synthetic: causal_len must be > 0");

    auto vocab = std::make_shared<Vocabulary>();
    vocab->class_count = 2;
    CueSets cues = layout_cues(*vocab, spec);

    SyntheticCorpus corpus;
    const std::pair<DatasetSplit*, std::pair<const char*, std::size_t>>
        splits[] = {{&corpus.train, {"train", spec.train_size}},
                    {&corpus.dev, {"dev", spec.dev_size}},
                    {&corpus.test, {"test", spec.test_size}}};
    for (auto& [split, info] : splits) {
        auto rng = substream(spec.seed, std::string("synthetic-") + info.first);
        split->vocab = vocab;
        split->examples.reserve(info.second);
        for (std::size_t i = 0; i < info.second; ++i)
            split->examples.push_back(make_example(spec, cues, rng));
    }
    return corpus;
}

}  // namespace mgr

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mgr/grad_check.hpp"
#include "mgr/model.hpp"
#include "mgr/rng.hpp"

using namespace mgr;

namespace {

ModelConfig tiny_config(std::size_t n = 2, bool share = false) {
    ModelConfig config;
    config.vocab_size = 20;
    config.classes = 2;
    config.embed_dim = 5;
    config.hidden = 4;
    config.n_generators = n;
    config.share_encoder = share;
    return config;
}

DatasetSplit tiny_split() {
    DatasetSplit split;
    split.vocab = std::make_shared<Vocabulary>();
    for (int i = 0; i < 18; ++i) split.vocab->add("t" + std::to_string(i));
    Example a;
    a.token_ids = {2, 3, 4, 5, 6};
    a.label = 0;
    Example b;
    b.token_ids = {7, 8, 9};
    b.label = 1;
    Example c;
    c.token_ids = {10, 11, 12, 13};
    c.label = 1;
    split.examples = {a, b, c};
    return split;
}

}  // namespace

TEST_CASE("model parameters have the declared shapes and unique names") {
    auto model = build_model(tiny_config(3), 1);
    CHECK(model.embedding->shape == std::vector<std::size_t>{20, 5});
    CHECK(model.generators.size() == 3);
    CHECK(model.generators[0].head_w->shape == std::vector<std::size_t>{8, 1});
    CHECK(model.predictor.head_w->shape == std::vector<std::size_t>{8, 2});
    auto params = model.named_params();
    std::set<std::string> names;
    std::set<const Tensor*> tensors;
    for (auto& [name, t] : params) {
        CHECK(names.insert(name).second);
        CHECK(tensors.insert(t.get()).second);  // shared tensors appear once
        CHECK(t->requires_grad);
    }
    // 1 embedding + 3 generators * (18 encoder + 2 head) + predictor (18 + 2)
    CHECK(params.size() == 1 + 3 * 20 + 20);
}

TEST_CASE("shared-encoder models expose one encoder") {
    auto model = build_model(tiny_config(3, true), 1);
    CHECK(model.generators[0].encoder.forward_cell.Wr.get() ==
          model.generators[2].encoder.forward_cell.Wr.get());
    // encoder listed once; per-generator heads stay separate
    CHECK(model.named_params().size() == 1 + 18 + 3 * 2 + 20);
    CHECK(model.generators[0].head_w.get() != model.generators[1].head_w.get());
}

TEST_CASE("initialization is seed-deterministic and seed-sensitive") {
    auto a = build_model(tiny_config(), 5);
    auto b = build_model(tiny_config(), 5);
    auto c = build_model(tiny_config(), 6);
    CHECK(a.embedding->data == b.embedding->data);
    CHECK(a.generators[0].head_w->data == b.generators[0].head_w->data);
    CHECK(a.embedding->data != c.embedding->data);
    // sibling generators must not be clones of each other
    CHECK(a.generators[0].encoder.forward_cell.Wr->data !=
          a.generators[1].encoder.forward_cell.Wr->data);
}

TEST_CASE("encode_batch pads to the longest sequence") {
    auto split = tiny_split();
    auto batch = encode_batch(split, {0, 1});
    CHECK(batch.max_len == 5);
    CHECK(batch.lengths == std::vector<std::size_t>{5, 3});
    CHECK(batch.labels == std::vector<std::size_t>{0, 1});
    CHECK(batch.token_ids[1][2] == 9);
    CHECK(batch.token_ids[1][3] == Vocabulary::kPadId);
    CHECK(batch.token_ids[1][4] == Vocabulary::kPadId);
}

TEST_CASE("generator probabilities are valid and zero on padding") {
    auto model = build_model(tiny_config(), 3);
    auto split = tiny_split();
    auto batch = encode_batch(split, {0, 1, 2});
    auto probs = generator_forward(model.generators[0], model.embedding, batch);
    REQUIRE(probs->shape == std::vector<std::size_t>{3, 5});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t t = 0; t < 5; ++t) {
            double p = probs->data[i * 5 + t];
            if (t < batch.lengths[i]) {
                CHECK(p > 0.0);
                CHECK(p < 1.0);
            } else {
                CHECK(p == 0.0);
            }
        }
    CHECK_THROWS_AS(generator_forward(model.generators[0], model.embedding,
                                      encode_batch(split, {})),
                    std::invalid_argument);
}

TEST_CASE("train-mode masks are binary with straight-through gradients") {
    auto model = build_model(tiny_config(), 4);
    auto batch = encode_batch(tiny_split(), {0, 1, 2});
    auto probs = generator_forward(model.generators[0], model.embedding, batch);
    auto rng = substream(0, "mask-sampling", 1);
    auto sample = sample_mask(probs, 1.0, SampleMode::train, rng);
    for (std::size_t i = 0; i < sample.hard->data.size(); ++i) {
        double h = sample.hard->data[i];
        CHECK((h == 0.0 || h == 1.0));
        double r = sample.relaxed->data[i];
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
        CHECK(h == (r > 0.5 ? 1.0 : 0.0));
    }
    // gradient reaches the generator through the hard mask (straight-through)
    model.zero_grad();
    sum_all(sample.hard)->backward();
    double total = 0.0;
    for (double g : model.generators[0].head_w->grad) total += std::fabs(g);
    CHECK(total > 0.0);
}

TEST_CASE("hard-threshold sampling preserves the Bernoulli marginal") {
    // empirical selection rate of a fixed-probability mask over many draws
    auto probs = tensor({1, 3}, {0.2, 0.5, 0.9});
    auto rng = substream(7, "mask-sampling", 0);
    std::vector<double> hits(3, 0.0);
    const int draws = 40000;
    for (int d = 0; d < draws; ++d) {
        auto sample = sample_mask(probs, 0.7, SampleMode::train, rng);
        for (std::size_t t = 0; t < 3; ++t) hits[t] += sample.hard->data[t];
    }
    CHECK(hits[0] / draws == doctest::Approx(0.2).epsilon(0.05));
    CHECK(hits[1] / draws == doctest::Approx(0.5).epsilon(0.05));
    CHECK(hits[2] / draws == doctest::Approx(0.9).epsilon(0.05));
}

TEST_CASE("eval-mode masks threshold deterministically") {
    auto probs = tensor({1, 4}, {0.2, 0.51, 0.5, 0.9});
    auto rng = substream(1, "mask-sampling", 0);
    auto sample = sample_mask(probs, 1.0, SampleMode::eval, rng);
    CHECK(sample.hard->data == std::vector<double>{0.0, 1.0, 0.0, 1.0});
    auto again = sample_mask(probs, 1.0, SampleMode::eval, rng);
    CHECK(again.hard->data == sample.hard->data);  // rng untouched in eval
}

TEST_CASE("predictor ignores every unselected token") {
    auto model = build_model(tiny_config(), 9);
    auto batch = encode_batch(tiny_split(), {0});
    auto mask = tensor({1, 5}, {1.0, 0.0, 1.0, 0.0, 1.0});
    auto out = predictor_forward(model.predictor, model.embedding, batch, mask);
    auto base = out.probs->data;
    CHECK(base[0] + base[1] == doctest::Approx(1.0));
    // perturb the embedding rows of the two unselected tokens (ids 3 and 5)
    for (std::size_t id : {3, 5})
        for (std::size_t j = 0; j < 5; ++j)
            model.embedding->data[id * 5 + j] += 10.0;
    auto perturbed =
        predictor_forward(model.predictor, model.embedding, batch, mask);
    CHECK(perturbed.probs->data[0] == doctest::Approx(base[0]).epsilon(1e-12));
    // perturbing a selected token (id 2) must change the prediction
    for (std::size_t j = 0; j < 5; ++j) model.embedding->data[2 * 5 + j] += 10.0;
    auto changed =
        predictor_forward(model.predictor, model.embedding, batch, mask);
    CHECK(changed.probs->data[0] != doctest::Approx(base[0]).epsilon(1e-12));
}

TEST_CASE("all-zero mask yields an input-independent prediction") {
    auto model = build_model(tiny_config(), 10);
    auto split = tiny_split();
    auto mask = tensor({1, 5}, {0.0, 0.0, 0.0, 0.0, 0.0});
    auto a = predictor_forward(model.predictor, model.embedding,
                               encode_batch(split, {0}), mask);
    auto mask3 = tensor({1, 3}, {0.0, 0.0, 0.0});
    auto b = predictor_forward(model.predictor, model.embedding,
                               encode_batch(split, {1}), mask3);
    CHECK(a.probs->data[0] == doctest::Approx(b.probs->data[0]).epsilon(1e-9));
}

TEST_CASE("mgr_forward produces one mask and prediction per generator") {
    auto model = build_model(tiny_config(3), 2);
    auto batch = encode_batch(tiny_split(), {0, 1, 2});
    std::vector<std::mt19937_64> rngs;
    for (std::size_t i = 0; i < 3; ++i)
        rngs.push_back(substream(2, "mask-sampling", i));
    auto outputs = mgr_forward(model, batch, 1.0, SampleMode::train, rngs);
    REQUIRE(outputs.size() == 3);
    for (auto& out : outputs) {
        CHECK(out.mask.hard->shape == std::vector<std::size_t>{3, 5});
        CHECK(out.prediction.probs->shape == std::vector<std::size_t>{3, 2});
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(out.prediction.probs->data[i * 2] +
                      out.prediction.probs->data[i * 2 + 1] ==
                  doctest::Approx(1.0));
    }
    // distinct sampling streams: generators do not draw identical masks
    CHECK(outputs[0].mask.hard->data != outputs[1].mask.hard->data);
}

TEST_CASE("eval forward is deterministic") {
    auto model = build_model(tiny_config(2), 8);
    auto batch = encode_batch(tiny_split(), {0, 2});
    auto a = mgr_forward_eval(model, batch);
    auto b = mgr_forward_eval(model, batch);
    REQUIRE(a.size() == 2);
    CHECK(a[0].mask.hard->data == b[0].mask.hard->data);
    CHECK(a[0].prediction.probs->data == b[0].prediction.probs->data);
}

TEST_CASE("end-to-end gradients match finite differences") {
    auto config = tiny_config(2);
    config.hidden = 3;
    config.embed_dim = 4;
    auto model = build_model(config, 6);
    auto batch = encode_batch(tiny_split(), {0, 1});
    auto forward = [&] {
        auto probs =
            generator_forward(model.generators[0], model.embedding, batch);
        auto rng = substream(3, "mask-sampling", 0);  // frozen per forward
        auto sample = sample_mask(probs, 1.0, SampleMode::train, rng);
        auto out = predictor_forward(model.predictor, model.embedding, batch,
                                     sample.relaxed);
        return cross_entropy_rows(out.logits, batch.labels);
    };
    auto report = grad_check(model.named_params(), forward, 2e-4, 1e-5, 16, 42);
    CHECK_MESSAGE(report.passed, format_report(report));
}

TEST_CASE("checkpoint round trip is bitwise exact") {
    auto model = build_model(tiny_config(3, true), 11);
    auto path =
        (std::filesystem::temp_directory_path() / "model_rt.ckpt").string();
    save_checkpoint(model, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.config.n_generators == 3);
    CHECK(loaded.config.share_encoder);
    auto a = model.named_params();
    auto b = loaded.named_params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->data == b[i].second->data);  // exact, via hexfloat
    }
    // loaded model behaves identically
    auto batch = encode_batch(tiny_split(), {0, 1, 2});
    auto x = mgr_forward_eval(model, batch);
    auto y = mgr_forward_eval(loaded, batch);
    CHECK(x[1].prediction.probs->data == y[1].prediction.probs->data);
}

TEST_CASE("checkpoint loader rejects junk") {
    auto path = (std::filesystem::temp_directory_path() / "junk.ckpt").string();
    {
        std::ofstream out(path);
        out << "not a checkpoint\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/q.ckpt"), std::runtime_error);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "mgr/entropy.hpp"

using namespace mgr;

namespace {

// Independent-coin joint over n fair bits.
JointDistribution fair_bits(std::size_t n) {
    std::size_t total = std::size_t{1} << n;
    return JointDistribution(std::vector<std::size_t>(n, 2),
                             std::vector<double>(total, 1.0 / total));
}

// Two perfectly correlated fair bits plus an independent third.
JointDistribution copy_pair_plus_coin() {
    // variables (z0, z1, z2), z1 = z0, z2 independent; last variable fastest
    std::vector<double> probs(8, 0.0);
    probs[0b000] = 0.25;
    probs[0b001] = 0.25;
    probs[0b110] = 0.25;
    probs[0b111] = 0.25;
    return JointDistribution({2, 2, 2}, probs);
}

JointDistribution random_joint(std::vector<std::size_t> sizes,
                               std::uint64_t seed) {
    std::size_t total = 1;
    for (auto s : sizes) total *= s;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    std::vector<double> probs(total);
    double sum = 0.0;
    for (auto& p : probs) {
        p = unif(rng);
        sum += p;
    }
    for (auto& p : probs) p /= sum;
    return JointDistribution(std::move(sizes), std::move(probs));
}

// Oracle entropy by direct summation over an explicit probability list.
double entropy_oracle(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

}  // namespace

TEST_CASE("joint distribution validates its probability table") {
    CHECK_THROWS_AS(JointDistribution({2, 2}, {0.5, 0.5, 0.5, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(JointDistribution({2, 2}, {0.5, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(JointDistribution({2, 2}, {0.7, 0.5, -0.1, -0.1}),
                    std::invalid_argument);
    CHECK_NOTHROW(JointDistribution({2, 2}, {0.25, 0.25, 0.25, 0.25}));
}

TEST_CASE("marginals of independent coins are fair") {
    auto dist = fair_bits(3);
    for (std::size_t v = 0; v < 3; ++v) {
        auto m = dist.marginal({v});
        REQUIRE(m.size() == 2);
        CHECK(m[0] == doctest::Approx(0.5));
        CHECK(m[1] == doctest::Approx(0.5));
    }
    auto pair = dist.marginal({0, 2});
    REQUIRE(pair.size() == 4);
    for (double p : pair) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("marginal over mixed support sizes") {
    // p(z0, z1) with supports (2, 3); hand-built table, last variable fastest
    JointDistribution dist({2, 3}, {0.1, 0.2, 0.1, 0.15, 0.25, 0.2});
    auto m0 = dist.marginal({0});
    CHECK(m0[0] == doctest::Approx(0.4));
    CHECK(m0[1] == doctest::Approx(0.6));
    auto m1 = dist.marginal({1});
    CHECK(m1[0] == doctest::Approx(0.25));
    CHECK(m1[1] == doctest::Approx(0.45));
    CHECK(m1[2] == doctest::Approx(0.3));
}

TEST_CASE("entropy of a uniform variable is log2 of its support") {
    for (std::size_t k : {2, 3, 5, 8}) {
        std::vector<double> probs(k, 1.0 / k);
        JointDistribution dist({k}, probs);
        CHECK(entropy(dist, {0}) == doctest::Approx(std::log2(double(k))));
    }
}

TEST_CASE("entropy handles zero-probability outcomes") {
    JointDistribution dist({3}, {0.5, 0.5, 0.0});
    CHECK(entropy(dist, {0}) == doctest::Approx(1.0));
}

TEST_CASE("bits and nats differ by ln 2") {
    auto dist = random_joint({2, 3}, 17);
    double bits = entropy(dist, {0, 1}, EntropyBase::bits);
    double nats = entropy(dist, {0, 1}, EntropyBase::nats);
    CHECK(nats == doctest::Approx(bits * std::log(2.0)));
}

TEST_CASE("entropy matches the direct-summation oracle on random joints") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        auto dist = random_joint({2, 3, 2}, seed);
        CHECK(entropy(dist, {0, 1, 2}) ==
              doctest::Approx(entropy_oracle(dist.probs)).epsilon(1e-12));
        CHECK(entropy(dist, {1}) ==
              doctest::Approx(entropy_oracle(dist.marginal({1}))).epsilon(1e-12));
    }
}

TEST_CASE("mutual information of independent variables is zero") {
    auto dist = fair_bits(3);
    CHECK(mutual_information(dist, 0, 1) == doctest::Approx(0.0));
    CHECK(mutual_information(dist, 0, 2) == doctest::Approx(0.0));
}

TEST_CASE("mutual information of a perfect copy equals the entropy") {
    auto dist = copy_pair_plus_coin();
    CHECK(mutual_information(dist, 0, 1) == doctest::Approx(1.0));
    CHECK(mutual_information(dist, 0, 2) == doctest::Approx(0.0));
}

TEST_CASE("mutual information is symmetric, non-negative, and self-rejecting") {
    auto dist = random_joint({3, 2, 4}, 42);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
            CHECK(mutual_information(dist, i, j) >= 0.0);
            CHECK(mutual_information(dist, i, j) ==
                  doctest::Approx(mutual_information(dist, j, i)));
        }
    CHECK_THROWS_AS(mutual_information(dist, 1, 1), std::invalid_argument);
}

TEST_CASE("entropy bounds: independence makes the upper bound tight") {
    auto report = verify_theorem2(fair_bits(4));
    CHECK(report.lower_ok);
    CHECK(report.upper_ok);
    CHECK(report.upper_tight);
    CHECK_FALSE(report.lower_tight);
    CHECK(report.joint == doctest::Approx(4.0));
    CHECK(report.sum_marginals == doctest::Approx(4.0));
    CHECK(report.max_marginal == doctest::Approx(1.0));
}

TEST_CASE("entropy bounds: perfect copies make the lower bound tight") {
    // z1 = z0 exactly: joint entropy collapses to one coin
    JointDistribution copies({2, 2}, {0.5, 0.0, 0.0, 0.5});
    auto report = verify_theorem2(copies);
    CHECK(report.lower_ok);
    CHECK(report.upper_ok);
    CHECK(report.lower_tight);
    CHECK_FALSE(report.upper_tight);
    CHECK(report.joint == doctest::Approx(1.0));
    CHECK(report.sum_marginals == doctest::Approx(2.0));
}

TEST_CASE("entropy bounds hold on randomized joints") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto report = verify_theorem2(random_joint({2, 2, 3}, seed));
        CAPTURE(seed);
        CHECK(report.lower_ok);
        CHECK(report.upper_ok);
        CHECK(report.max_marginal <= report.joint + 1e-9);
        CHECK(report.joint <= report.sum_marginals + 1e-9);
    }
}

TEST_CASE("empirical mask entropies obey the same bounds") {
    SyntheticSpec spec;
    spec.train_size = 60;
    spec.dev_size = 10;
    spec.test_size = 10;
    spec.seq_len = 12;
    spec.causal_len = 3;
    spec.spurious_len = 3;
    spec.vocab_size = 30;
    spec.seed = 3;
    auto corpus = generate_synthetic(spec);

    ModelConfig mc;
    mc.vocab_size = corpus.train.vocab->size();
    mc.embed_dim = 8;
    mc.hidden = 6;
    mc.n_generators = 3;
    auto model = build_model(mc, 7);

    auto report = empirical_mask_entropy(model, corpus.train, 8);
    REQUIRE(report.marginals.size() == 3);
    double max_marginal = 0.0;
    for (double h : report.marginals) {
        CHECK(h >= 0.0);
        max_marginal = std::max(max_marginal, h);
    }
    CHECK(report.sum_marginals ==
          doctest::Approx(report.marginals[0] + report.marginals[1] +
                          report.marginals[2]));
    CHECK(report.joint >= max_marginal - 1e-9);
    CHECK(report.joint <= report.sum_marginals + 1e-9);

    auto again = empirical_mask_entropy(model, corpus.train, 8);
    CHECK(again.joint == report.joint);  // eval mode: fully deterministic

    CHECK_THROWS_AS(empirical_mask_entropy(model, corpus.train, 17),
                    std::invalid_argument);
}

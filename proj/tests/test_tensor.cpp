#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mgr/adam.hpp"
#include "mgr/grad_check.hpp"
#include "mgr/tensor.hpp"

using namespace mgr;

TEST_CASE("sigmoid symmetry and tanh") {
    auto x = scalar(0.0);
    CHECK(sigmoid(x)->item() == doctest::Approx(0.5));
    CHECK(tanh_t(scalar(0.0))->item() == doctest::Approx(0.0));
}

TEST_CASE("softmax of uniform logits") {
    auto x = tensor({1, 2}, {0.0, 0.0});
    auto y = softmax_rows(x);
    CHECK(y->data[0] == doctest::Approx(0.5));
    CHECK(y->data[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax rows sum to 1 and are non-negative") {
    std::mt19937_64 rng(3);
    auto x = randn({7, 5}, 3.0, rng, false);
    auto y = softmax_rows(x);
    for (std::size_t i = 0; i < 7; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(y->data[i * 5 + j] >= 0.0);
            sum += y->data[i * 5 + j];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("matmul by the identity") {
    auto eye = tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    std::mt19937_64 rng(1);
    auto a = randn({3, 3}, 1.0, rng, false);
    auto out = matmul(eye, a);
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(out->data[i] == doctest::Approx(a->data[i]));
}

TEST_CASE("shape mismatch names both shapes") {
    auto a = tensor({2, 3});
    auto b = tensor({4, 2});
    CHECK_THROWS_WITH_AS(add(a, b), "add: shape mismatch (2,3) vs (4,2)",
                         std::invalid_argument);
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("backward of sum of squares") {
    auto x = tensor({1, 2}, {1.0, 2.0}, true);
    auto loss = sum_all(mul(x, x));
    loss->backward();
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("backward of sigmoid at zero") {
    auto w = scalar(0.0, true);
    auto loss = sum_all(sigmoid(w));
    loss->backward();
    CHECK(w->grad[0] == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = tensor({1, 2}, {1.0, 2.0}, true);
    auto y = mul(x, x);
    CHECK_THROWS_AS(y->backward(), std::invalid_argument);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
    auto x = tensor({1, 2}, {1.0, 2.0}, true);
    auto run = [&] {
        auto loss = sum_all(mul(x, x));
        loss->backward();
    };
    run();
    run();  // no zero_grad in between: accumulation is the documented semantics
    CHECK(x->grad[0] == doctest::Approx(4.0));
    CHECK(x->grad[1] == doctest::Approx(8.0));
    x->zero_grad();
    run();
    CHECK(x->grad[0] == doctest::Approx(2.0));
}

TEST_CASE("finite differences validate every differentiable primitive") {
    std::mt19937_64 rng(7);
    auto a = randn({3, 4}, 0.7, rng);
    auto b = randn({3, 4}, 0.7, rng);
    auto w = randn({4, 2}, 0.7, rng);
    auto bias = randn({1, 4}, 0.7, rng);
    auto col = randn({3, 1}, 0.7, rng);
    std::vector<std::size_t> ids{0, 2, 1, 2};
    std::vector<std::size_t> labels{0, 1, 1};

    std::vector<std::pair<std::string, std::function<TensorPtr()>>> cases = {
        {"add", [&] { return sum_all(mul(add(a, b), b)); }},
        {"add_row_bcast", [&] { return sum_all(mul(add(a, bias), a)); }},
        {"add_col_bcast", [&] { return sum_all(mul(add(a, col), a)); }},
        {"sub", [&] { return sum_all(mul(sub(a, b), a)); }},
        {"mul", [&] { return sum_all(mul(mul(a, b), a)); }},
        {"div", [&] { return sum_all(div(a, add_const(mul(b, b), 1.0))); }},
        {"scale", [&] { return sum_all(scale(mul(a, a), -1.7)); }},
        {"matmul", [&] { return sum_all(tanh_t(matmul(a, w))); }},
        {"sigmoid", [&] { return sum_all(mul(sigmoid(a), b)); }},
        {"tanh", [&] { return sum_all(mul(tanh_t(a), b)); }},
        {"abs", [&] { return sum_all(mul(abs_t(a), b)); }},
        {"softmax", [&] { return sum_all(mul(softmax_rows(a), b)); }},
        {"sum_rows", [&] { return sum_all(mul(sum_rows(a), col)); }},
        {"mean_all", [&] { return mean_all(mul(a, a)); }},
        {"concat", [&] { return sum_all(mul(concat_cols({a, b}),
                                            concat_cols({b, a}))); }},
        {"slice", [&] { return sum_all(mul(slice_cols(a, 1, 2),
                                           slice_cols(b, 0, 2))); }},
        {"embedding", [&] { return sum_all(tanh_t(embedding_rows(a, ids))); }},
        {"cross_entropy", [&] { return cross_entropy_rows(matmul(a, w), labels); }},
    };
    for (auto& [name, forward] : cases) {
        CAPTURE(name);
        auto report = grad_check({{"a", a}, {"b", b}, {"w", w},
                                  {"bias", bias}, {"col", col}},
                                 forward, 1e-4);
        CHECK_MESSAGE(report.passed, name, ": ", format_report(report));
    }
}

TEST_CASE("binary concrete relaxation matches finite differences") {
    std::mt19937_64 rng(13);
    auto logits = randn({2, 5}, 0.8, rng);
    auto weights = randn({2, 5}, 1.0, rng, false);
    auto forward = [&] {
        std::mt19937_64 noise(99);  // frozen noise: deterministic forward
        auto relaxed = binary_concrete(sigmoid(logits), 0.7, noise);
        return sum_all(mul(relaxed, weights));
    };
    auto report = grad_check({{"logits", logits}}, forward, 1e-4);
    CHECK_MESSAGE(report.passed, format_report(report));
}

TEST_CASE("two-layer recurrent fragment matches finite differences") {
    std::mt19937_64 rng(11);
    auto wx = randn({3, 4}, 0.5, rng);
    auto wh = randn({4, 4}, 0.5, rng);
    auto wo = randn({4, 1}, 0.5, rng);
    std::vector<TensorPtr> inputs;
    for (int t = 0; t < 5; ++t) inputs.push_back(randn({2, 3}, 1.0, rng, false));
    auto forward = [&] {
        TensorPtr h = tensor({2, 4});
        for (auto& x : inputs)
            h = tanh_t(add(matmul(x, wx), matmul(h, wh)));
        return mean_all(sigmoid(matmul(h, wo)));
    };
    auto report = grad_check({{"wx", wx}, {"wh", wh}, {"wo", wo}}, forward, 1e-4);
    CHECK_MESSAGE(report.passed, format_report(report));
}

TEST_CASE("grad_check flags a corrupted gradient") {
    std::mt19937_64 rng(5);
    auto w = randn({2, 2}, 1.0, rng);
    auto x = randn({3, 2}, 1.0, rng, false);
    // linear layer passes at 1e-4
    auto forward = [&] { return mean_all(matmul(x, w)); };
    CHECK(grad_check({{"w", w}}, forward, 1e-4).passed);
    // injected +0.1 fault: wrap forward so the analytic grad is corrupted
    auto corrupted = [&]() -> TensorPtr {
        auto out = mean_all(matmul(x, w));
        auto inner = out->backward_fn;
        out->backward_fn = [inner](Tensor& o) {
            inner(o);
            o.parents[0]->grad[0] += 0.1;
        };
        return out;
    };
    CHECK_FALSE(grad_check({{"w", w}}, corrupted, 1e-4).passed);
}

TEST_CASE("grad_check on a zero-parameter fragment passes vacuously") {
    auto report = grad_check({}, [] { return scalar(1.0); }, 1e-4);
    CHECK(report.passed);
    CHECK(report.entries.empty());
}

TEST_CASE("adam first step moves by approximately -lr") {
    auto p = scalar(0.0, true);
    auto state = AdamState::for_param(*p);
    adam_step(*p, {1.0}, state, 0.001);
    // mhat = 1, vhat = 1 on the first unit-gradient step
    CHECK(p->data[0] == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(state.step_count == 1);
}

TEST_CASE("adam with zero gradient leaves the parameter unchanged") {
    auto p = scalar(3.25, true);
    auto state = AdamState::for_param(*p);
    adam_step(*p, {0.0}, state, 0.1);
    CHECK(p->data[0] == 3.25);
}

TEST_CASE("first adam update is linear in the learning rate") {
    auto p1 = scalar(1.0, true);
    auto p2 = scalar(1.0, true);
    auto s1 = AdamState::for_param(*p1);
    auto s2 = AdamState::for_param(*p2);
    adam_step(*p1, {0.3}, s1, 0.01);
    adam_step(*p2, {0.3}, s2, 0.02);
    CHECK((p2->data[0] - 1.0) == doctest::Approx(2.0 * (p1->data[0] - 1.0)));
}

TEST_CASE("adam is bitwise deterministic") {
    auto run = [] {
        auto p = tensor({1, 3}, {0.1, -0.2, 0.4}, true);
        auto s = AdamState::for_param(*p);
        for (int i = 0; i < 10; ++i) adam_step(*p, {0.5, -0.1, 0.9}, s, 0.01);
        return p->data;
    };
    CHECK(run() == run());
}

TEST_CASE("adam rejects non-finite gradients without touching the parameter") {
    auto p = scalar(1.0, true);
    auto s = AdamState::for_param(*p);
    CHECK_THROWS_AS(adam_step(*p, {std::nan("")}, s, 0.01), std::runtime_error);
    CHECK(p->data[0] == 1.0);
    CHECK(s.step_count == 0);
}

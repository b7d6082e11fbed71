#pragma once

// Dense float64 tensors with reverse-mode differentiation at tensor
// granularity. Every op records its inputs and a backward closure; calling
// backward() on a scalar runs the tape in reverse topological order.
//
// Gradients accumulate with += across backward() calls; training code must
// zero them explicitly (zero_grad) before each pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mgr {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data when requires_grad
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;  // pushes grad into parents

    Tensor(std::vector<std::size_t> shape_, bool requires_grad_ = false);
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_,
           bool requires_grad_ = false);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    double item() const;

    void zero_grad();
    // Reverse-mode sweep from this tensor; requires a scalar (size 1).
    void backward();
};

TensorPtr tensor(std::vector<std::size_t> shape, bool requires_grad = false);
TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> data,
                 bool requires_grad = false);
TensorPtr scalar(double v, bool requires_grad = false);
TensorPtr full(std::vector<std::size_t> shape, double v,
               bool requires_grad = false);
TensorPtr randn(std::vector<std::size_t> shape, double stddev,
                std::mt19937_64& rng, bool requires_grad = true);

std::string shape_str(const Tensor& t);

// --- primitives -----------------------------------------------------------
// All binary elementwise ops support equal shapes plus two broadcasts over a
// 2-D left operand: a (1,k) row against (r,k), and a (r,1) column against
// (r,k). Shape mismatches throw std::invalid_argument naming both shapes.

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double k);
TensorPtr add_const(const TensorPtr& a, double k);

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh_t(const TensorPtr& a);
TensorPtr abs_t(const TensorPtr& a);
TensorPtr softmax_rows(const TensorPtr& a);

TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);
TensorPtr sum_rows(const TensorPtr& a);   // (r,k) -> (r,1)

TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_cols(const TensorPtr& a, std::size_t start, std::size_t len);

// Gather rows of table (one per id); backward scatter-adds into the table.
TensorPtr embedding_rows(const TensorPtr& table,
                         const std::vector<std::size_t>& ids);

// Mean over rows of the per-row cross entropy -log softmax(logits)[label].
TensorPtr cross_entropy_rows(const TensorPtr& logits,
                             const std::vector<std::size_t>& labels);

// Binary-concrete relaxation: sigmoid((log(p/(1-p)) + g) / tau) with
// g = log(u/(1-u)), u ~ Uniform(0,1) drawn from rng.
TensorPtr binary_concrete(const TensorPtr& probs, double tau,
                          std::mt19937_64& rng);

// Forward: 1[a > 0.5]; backward: identity pass-through to a.
TensorPtr straight_through_threshold(const TensorPtr& a);

// Forward copy with no gradient path.
TensorPtr detach(const TensorPtr& a);

}  // namespace mgr

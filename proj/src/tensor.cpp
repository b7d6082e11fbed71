#include "mgr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace mgr {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor: zero dimension");
        n *= d;
    }
    return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < t.shape.size(); ++i)
        os << (i ? "," : "") << t.shape[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape_, bool requires_grad_)
    : shape(std::move(shape_)), requires_grad(requires_grad_) {
    data.assign(shape_product(shape), 0.0);
    if (requires_grad) grad.assign(data.size(), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_,
               bool requires_grad_)
    : shape(std::move(shape_)), data(std::move(data_)),
      requires_grad(requires_grad_) {
    if (shape_product(shape) != data.size())
        throw std::invalid_argument("tensor: shape/data length mismatch");
    if (requires_grad) grad.assign(data.size(), 0.0);
}

double Tensor::item() const {
    if (data.size() != 1)
        throw std::invalid_argument("item: tensor " + shape_str(*this) +
                                    " is not scalar");
    return data[0];
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::backward() {
    if (data.size() != 1)
        throw std::invalid_argument("backward: loss " + shape_str(*this) +
                                    " is not scalar");
    // Topological order over the parent DAG, iterative DFS.
    std::vector<Tensor*> topo;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(this, 0);
    seen.insert(this);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Tensor* p = node->parents[idx++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    if (grad.empty()) grad.assign(1, 0.0);
    grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Tensor* t = *it;
        if (t->backward_fn) t->backward_fn(*t);
    }
}

TensorPtr tensor(std::vector<std::size_t> shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> data,
                 bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data),
                                    requires_grad);
}

TensorPtr scalar(double v, bool requires_grad) {
    return tensor({1}, {v}, requires_grad);
}

TensorPtr full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    auto t = tensor(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), v);
    return t;
}

TensorPtr randn(std::vector<std::size_t> shape, double stddev,
                std::mt19937_64& rng, bool requires_grad) {
    auto t = tensor(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t->data) v = dist(rng);
    return t;
}

namespace {

bool needs_graph(const TensorPtr& a) {
    return a->requires_grad || a->backward_fn || !a->parents.empty();
}

// Result carries gradient state if any input participates in the graph.
TensorPtr make_result(std::vector<std::size_t> shape,
                      std::vector<TensorPtr> parents) {
    bool track = false;
    for (const auto& p : parents) track = track || needs_graph(p);
    auto out = tensor(std::move(shape));
    if (track) {
        out->grad.assign(out->data.size(), 0.0);
        out->parents = std::move(parents);
    }
    return out;
}

void ensure_grad(Tensor& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
}

// Broadcast classification for binary elementwise ops.
enum class Bcast { same, row, col };

Bcast classify(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape == b.shape) return Bcast::same;
    if (a.shape.size() == 2 && b.shape.size() == 2) {
        if (b.shape[0] == 1 && b.shape[1] == a.shape[1]) return Bcast::row;
        if (b.shape[1] == 1 && b.shape[0] == a.shape[0]) return Bcast::col;
    }
    shape_error(op, a, b);
}

template <class Fwd, class Bwd>
TensorPtr binary_op(const char* name, const TensorPtr& a, const TensorPtr& b,
                    Fwd fwd, Bwd bwd) {
    Bcast bc = classify(name, *a, *b);
    auto out = make_result(a->shape, {a, b});
    const std::size_t r = a->rows(), c = a->cols();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            std::size_t ia = i * c + j;
            std::size_t ib = bc == Bcast::same ? ia
                           : bc == Bcast::row  ? j
                                               : i;
            out->data[ia] = fwd(a->data[ia], b->data[ib]);
        }
    if (!out->parents.empty()) {
        out->backward_fn = [bc, r, c, bwd](Tensor& o) {
            Tensor& A = *o.parents[0];
            Tensor& B = *o.parents[1];
            ensure_grad(A);
            ensure_grad(B);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    std::size_t ia = i * c + j;
                    std::size_t ib = bc == Bcast::same ? ia
                                   : bc == Bcast::row  ? j
                                                       : i;
                    auto [da, db] = bwd(A.data[ia], B.data[ib], o.data[ia]);
                    A.grad[ia] += da * o.grad[ia];
                    B.grad[ib] += db * o.grad[ia];
                }
        };
    }
    return out;
}

template <class Fwd, class Bwd>
TensorPtr unary_op(const TensorPtr& a, Fwd fwd, Bwd bwd) {
    auto out = make_result(a->shape, {a});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = fwd(a->data[i]);
    if (!out->parents.empty()) {
        out->backward_fn = [bwd](Tensor& o) {
            Tensor& A = *o.parents[0];
            ensure_grad(A);
            for (std::size_t i = 0; i < o.size(); ++i)
                A.grad[i] += bwd(A.data[i], o.data[i]) * o.grad[i];
        };
    }
    return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_op("add", a, b,
                     [](double x, double y) { return x + y; },
                     [](double, double, double) { return std::pair{1.0, 1.0}; });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_op("sub", a, b,
                     [](double x, double y) { return x - y; },
                     [](double, double, double) { return std::pair{1.0, -1.0}; });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_op("mul", a, b,
                     [](double x, double y) { return x * y; },
                     [](double x, double y, double) { return std::pair{y, x}; });
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    return binary_op("div", a, b,
                     [](double x, double y) { return x / y; },
                     [](double x, double y, double) {
                         return std::pair{1.0 / y, -x / (y * y)};
                     });
}

TensorPtr scale(const TensorPtr& a, double k) {
    return unary_op(a, [k](double x) { return k * x; },
                    [k](double, double) { return k; });
}

TensorPtr add_const(const TensorPtr& a, double k) {
    return unary_op(a, [k](double x) { return x + k; },
                    [](double, double) { return 1.0; });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 ||
        a->shape[1] != b->shape[0])
        shape_error("matmul", *a, *b);
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = make_result({m, n}, {a, b});
    const double* A = a->data.data();
    const double* B = b->data.data();
    double* C = out->data.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* Bp = B + p * n;
            double* Ci = C + i * n;
            for (std::size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
        }
    if (!out->parents.empty()) {
        out->backward_fn = [m, k, n](Tensor& o) {
            Tensor& A_ = *o.parents[0];
            Tensor& B_ = *o.parents[1];
            ensure_grad(A_);
            ensure_grad(B_);
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* Gi = o.grad.data() + i * n;
                    const double* Bp = B_.data.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) s += Gi[j] * Bp[j];
                    A_.grad[i * k + p] += s;
                }
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A_.data[i * k + p];
                    if (aip == 0.0) continue;
                    const double* Gi = o.grad.data() + i * n;
                    double* GBp = B_.grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) GBp[j] += aip * Gi[j];
                }
        };
    }
    return out;
}

TensorPtr sigmoid(const TensorPtr& a) {
    return unary_op(a,
                    [](double x) {
                        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                      : std::exp(x) / (1.0 + std::exp(x));
                    },
                    [](double, double y) { return y * (1.0 - y); });
}

TensorPtr tanh_t(const TensorPtr& a) {
    return unary_op(a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

TensorPtr abs_t(const TensorPtr& a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0 ? 1.0 : x < 0 ? -1.0 : 0.0; });
}

TensorPtr softmax_rows(const TensorPtr& a) {
    if (a->shape.size() != 2)
        throw std::invalid_argument("softmax_rows: need 2-D, got " +
                                    shape_str(*a));
    const std::size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result(a->shape, {a});
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = a->data.data() + i * c;
        double* y = out->data.data() + i * c;
        double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < c; ++j) y[j] /= z;
    }
    if (!out->parents.empty()) {
        out->backward_fn = [r, c](Tensor& o) {
            Tensor& A = *o.parents[0];
            ensure_grad(A);
            for (std::size_t i = 0; i < r; ++i) {
                const double* y = o.data.data() + i * c;
                const double* g = o.grad.data() + i * c;
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
                for (std::size_t j = 0; j < c; ++j)
                    A.grad[i * c + j] += y[j] * (g[j] - dot);
            }
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& a) {
    auto out = make_result({1}, {a});
    out->data[0] = std::accumulate(a->data.begin(), a->data.end(), 0.0);
    if (!out->parents.empty()) {
        out->backward_fn = [](Tensor& o) {
            Tensor& A = *o.parents[0];
            ensure_grad(A);
            for (double& g : A.grad) g += o.grad[0];
        };
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a->size()));
}

TensorPtr sum_rows(const TensorPtr& a) {
    if (a->shape.size() != 2)
        throw std::invalid_argument("sum_rows: need 2-D, got " + shape_str(*a));
    const std::size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result({r, 1}, {a});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a->data[i * c + j];
        out->data[i] = s;
    }
    if (!out->parents.empty()) {
        out->backward_fn = [r, c](Tensor& o) {
            Tensor& A = *o.parents[0];
            ensure_grad(A);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    A.grad[i * c + j] += o.grad[i];
        };
    }
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty())
        throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t r = parts[0]->rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != 2 || p->shape[0] != r)
            shape_error("concat_cols", *parts[0], *p);
        total += p->shape[1];
    }
    auto out = make_result({r, total}, parts);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p->shape[1];
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(p->data.data() + i * c, c,
                        out->data.data() + i * total + off);
        off += c;
    }
    if (!out->parents.empty()) {
        out->backward_fn = [r, total](Tensor& o) {
            std::size_t off = 0;
            for (auto& pp : o.parents) {
                Tensor& P = *pp;
                ensure_grad(P);
                const std::size_t c = P.shape[1];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        P.grad[i * c + j] += o.grad[i * total + off + j];
                off += c;
            }
        };
    }
    return out;
}

TensorPtr slice_cols(const TensorPtr& a, std::size_t start, std::size_t len) {
    if (a->shape.size() != 2 || start + len > a->shape[1])
        throw std::invalid_argument("slice_cols: [" + std::to_string(start) +
                                    "," + std::to_string(start + len) +
                                    ") out of " + shape_str(*a));
    const std::size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result({r, len}, {a});
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a->data.data() + i * c + start, len,
                    out->data.data() + i * len);
    if (!out->parents.empty()) {
        out->backward_fn = [r, c, start, len](Tensor& o) {
            Tensor& A = *o.parents[0];
            ensure_grad(A);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < len; ++j)
                    A.grad[i * c + start + j] += o.grad[i * len + j];
        };
    }
    return out;
}

TensorPtr embedding_rows(const TensorPtr& table,
                         const std::vector<std::size_t>& ids) {
    if (table->shape.size() != 2)
        throw std::invalid_argument("embedding_rows: table must be 2-D, got " +
                                    shape_str(*table));
    const std::size_t v = table->shape[0], d = table->shape[1];
    for (std::size_t id : ids)
        if (id >= v)
            throw std::invalid_argument("embedding_rows: id " +
                                        std::to_string(id) + " >= vocab " +
                                        std::to_string(v));
    auto out = make_result({ids.size(), d}, {table});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table->data.data() + ids[i] * d, d,
                    out->data.data() + i * d);
    if (!out->parents.empty()) {
        out->backward_fn = [ids, d](Tensor& o) {
            Tensor& T = *o.parents[0];
            ensure_grad(T);
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    T.grad[ids[i] * d + j] += o.grad[i * d + j];
        };
    }
    return out;
}

TensorPtr cross_entropy_rows(const TensorPtr& logits,
                             const std::vector<std::size_t>& labels) {
    if (logits->shape.size() != 2 || logits->shape[0] != labels.size())
        throw std::invalid_argument("cross_entropy_rows: logits " +
                                    shape_str(*logits) + " vs " +
                                    std::to_string(labels.size()) + " labels");
    const std::size_t r = logits->shape[0], c = logits->shape[1];
    for (std::size_t y : labels)
        if (y >= c)
            throw std::invalid_argument("cross_entropy_rows: label " +
                                        std::to_string(y) + " >= classes " +
                                        std::to_string(c));
    auto out = make_result({1}, {logits});
    // store softmax for the backward pass
    auto probs = std::make_shared<std::vector<double>>(r * c);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = logits->data.data() + i * c;
        double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            z += ((*probs)[i * c + j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= z;
        total += -(x[labels[i]] - mx - std::log(z));
    }
    out->data[0] = total / static_cast<double>(r);
    if (!out->parents.empty()) {
        out->backward_fn = [probs, labels, r, c](Tensor& o) {
            Tensor& L = *o.parents[0];
            ensure_grad(L);
            const double g = o.grad[0] / static_cast<double>(r);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    L.grad[i * c + j] +=
                        g * ((*probs)[i * c + j] - (j == labels[i] ? 1.0 : 0.0));
        };
    }
    return out;
}

TensorPtr binary_concrete(const TensorPtr& probs, double tau,
                          std::mt19937_64& rng) {
    if (tau <= 0.0)
        throw std::invalid_argument("binary_concrete: tau must be positive");
    const std::size_t n = probs->size();
    auto noise = std::make_shared<std::vector<double>>(n);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (double& g : *noise) {
        double u;
        do { u = uni(rng); } while (u <= 0.0 || u >= 1.0);
        g = std::log(u) - std::log1p(-u);  // logistic noise
    }
    auto out = make_result(probs->shape, {probs});
    for (std::size_t i = 0; i < n; ++i) {
        const double p = probs->data[i];
        if (p <= 0.0 || p >= 1.0) {  // saturated (e.g. pinned padding)
            out->data[i] = p <= 0.0 ? 0.0 : 1.0;
            continue;
        }
        const double logit = std::log(p) - std::log1p(-p);
        const double z = (logit + (*noise)[i]) / tau;
        out->data[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
    }
    if (!out->parents.empty()) {
        out->backward_fn = [tau](Tensor& o) {
            Tensor& P = *o.parents[0];
            ensure_grad(P);
            for (std::size_t i = 0; i < o.size(); ++i) {
                const double y = o.data[i], p = P.data[i];
                if (p <= 0.0 || p >= 1.0) continue;
                // dy/dp = y(1-y)/tau * d logit/dp, d logit/dp = 1/(p(1-p))
                P.grad[i] += o.grad[i] * y * (1.0 - y) / (tau * p * (1.0 - p));
            }
        };
    }
    return out;
}

TensorPtr straight_through_threshold(const TensorPtr& a) {
    auto out = make_result(a->shape, {a});
    for (std::size_t i = 0; i < a->size(); ++i)
        out->data[i] = a->data[i] > 0.5 ? 1.0 : 0.0;
    if (!out->parents.empty()) {
        out->backward_fn = [](Tensor& o) {
            Tensor& A = *o.parents[0];
            ensure_grad(A);
            for (std::size_t i = 0; i < o.size(); ++i)
                A.grad[i] += o.grad[i];
        };
    }
    return out;
}

TensorPtr detach(const TensorPtr& a) {
    return tensor(a->shape, a->data, false);
}

}  // namespace mgr

#include "mgr/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mgr {

AdamState AdamState::for_param(const Tensor& param, double beta1, double beta2,
                               double epsilon) {
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("AdamState: betas must lie in (0,1)");
    if (epsilon <= 0.0)
        throw std::invalid_argument("AdamState: epsilon must be positive");
    AdamState s;
    s.first_moment.assign(param.size(), 0.0);
    s.second_moment.assign(param.size(), 0.0);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    return s;
}

void adam_step(Tensor& param, const std::vector<double>& grad,
               AdamState& state, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
    if (grad.size() != param.size() ||
        state.first_moment.size() != param.size())
        throw std::invalid_argument("adam_step: size mismatch");
    for (double g : grad)
        if (!std::isfinite(g))
            throw std::runtime_error("adam_step: non-finite gradient");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
        v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param.data[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

}  // namespace mgr

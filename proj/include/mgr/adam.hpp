#pragma once

#include "mgr/tensor.hpp"

namespace mgr {

// Bias-corrected Adam, one state per parameter tensor.
struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::size_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_param(const Tensor& param, double beta1 = 0.9,
                               double beta2 = 0.999, double epsilon = 1e-8);
};

// In-place update of param.data from grad; rejects non-finite gradients
// without touching the parameter.
void adam_step(Tensor& param, const std::vector<double>& grad,
               AdamState& state, double lr);

}  // namespace mgr

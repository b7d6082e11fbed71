#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mgr/tensor.hpp"

namespace mgr {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked_coords = 0;
    bool passed = true;
    std::string note;  // set on non-finite values
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool passed = true;
    double max_rel_error = 0.0;
};

// Compares the analytic gradient of forward() against central finite
// differences for every named parameter. forward() must be deterministic and
// return a scalar loss built from the given parameter tensors. Tensors larger
// than max_coords_per_tensor are checked on a fixed random coordinate
// subsample.
GradCheckReport grad_check(
    const std::vector<std::pair<std::string, TensorPtr>>& params,
    const std::function<TensorPtr()>& forward, double tolerance,
    double step = 1e-5, std::size_t max_coords_per_tensor = 64,
    std::uint64_t subsample_seed = 0);

std::string format_report(const GradCheckReport& report);

}  // namespace mgr

#include "mgr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mgr {

GradCheckReport grad_check(
    const std::vector<std::pair<std::string, TensorPtr>>& params,
    const std::function<TensorPtr()>& forward, double tolerance, double step,
    std::size_t max_coords_per_tensor, std::uint64_t subsample_seed) {
    if (tolerance <= 0.0)
        throw std::invalid_argument("grad_check: tolerance must be positive");

    GradCheckReport report;
    if (params.empty()) return report;  // vacuous pass

    // Analytic pass.
    for (auto& [name, p] : params) p->zero_grad();
    auto loss = forward();
    loss->backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) {
        if (p->grad.empty())
            analytic.emplace_back(p->size(), 0.0);
        else
            analytic.push_back(p->grad);
    }

    std::mt19937_64 rng(subsample_seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& [name, p] = params[pi];
        GradCheckEntry entry;
        entry.name = name;

        std::vector<std::size_t> coords(p->size());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords_per_tensor);
        }

        for (std::size_t i : coords) {
            const double saved = p->data[i];
            p->data[i] = saved + step;
            const double up = forward()->item();
            p->data[i] = saved - step;
            const double down = forward()->item();
            p->data[i] = saved;

            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi][i];
            if (!std::isfinite(a) || !std::isfinite(numeric)) {
                entry.passed = false;
                entry.note = "non-finite value at coord " + std::to_string(i);
                entry.worst_index = i;
                entry.max_rel_error = std::numeric_limits<double>::infinity();
                break;
            }
            // Central differences carry O(step^2) truncation plus roundoff
            // noise of roughly eps/step; differences below that floor are
            // indistinguishable from FD error, not gradient bugs.
            const double noise_floor = 10.0 * (step * step + 1e-16 / step);
            const double abs_err = std::fabs(a - numeric);
            const double rel =
                abs_err <= noise_floor
                    ? 0.0
                    : abs_err /
                          std::max(std::fabs(a) + std::fabs(numeric), 1e-8);
            if (rel > entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.worst_index = i;
            }
            ++entry.checked_coords;
        }
        if (entry.note.empty()) entry.passed = entry.max_rel_error <= tolerance;
        report.passed = report.passed && entry.passed;
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

std::string format_report(const GradCheckReport& report) {
    std::ostringstream os;
    for (const auto& e : report.entries) {
        os << (e.passed ? "PASS " : "FAIL ") << e.name
           << " max_rel_error=" << e.max_rel_error
           << " coords=" << e.checked_coords;
        if (!e.note.empty()) os << " (" << e.note << ")";
        os << "\n";
    }
    os << (report.passed ? "PASS" : "FAIL")
       << " overall max_rel_error=" << report.max_rel_error << "\n";
    return os.str();
}

}  // namespace mgr

#include "mgr/game.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mgr/rng.hpp"

namespace mgr {

void GameSpec::validate() const {
    if (n < 1) throw std::invalid_argument("GameSpec: n must be >= 1");
    if (k > n) throw std::invalid_argument("GameSpec: k must be <= n");
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("GameSpec: alpha outside [0,1]");
    if (a <= b) throw std::invalid_argument("GameSpec: requires a > b");
    if (p_causal <= 0.0 || p_causal >= 1.0)
        throw std::invalid_argument("GameSpec: p_causal outside (0,1)");
    if (p_spurious_bound <= 0.0 || p_spurious_bound >= 1.0)
        throw std::invalid_argument("GameSpec: p_spurious_bound outside (0,1)");
}

double predictor_payoff(const GameSpec& spec) {
    spec.validate();
    const double k = static_cast<double>(spec.k);
    const double rest = static_cast<double>(spec.n - spec.k);
    return k * spec.alpha * spec.a + k * (1.0 - spec.alpha) * spec.b +
           rest * (1.0 - spec.alpha) * spec.a + rest * spec.alpha * spec.b;
}

double payoff_gradient(const GameSpec& spec) {
    spec.validate();
    return (spec.a - spec.b) *
           (2.0 * static_cast<double>(spec.k) - static_cast<double>(spec.n));
}

double p_spurious(std::size_t n, double p_causal) {
    if (n < 1) throw std::invalid_argument("p_spurious: n must be >= 1");
    if (p_causal <= 0.0 || p_causal >= 1.0)
        throw std::invalid_argument("p_spurious: p_causal outside (0,1)");
    // Upper limit (n-1)/2 for odd n, n/2 - 1 for even n; both are the largest
    // k with k < n - k, and integer division gives (n-1)/2 in either case.
    const std::size_t k_max = (n - 1) / 2;
    const double log_p = std::log(p_causal);
    const double log_q = std::log1p(-p_causal);
    double total = 0.0;
    for (std::size_t k = 0; k <= k_max; ++k) {
        const double log_binom = std::lgamma(static_cast<double>(n) + 1.0) -
                                 std::lgamma(static_cast<double>(k) + 1.0) -
                                 std::lgamma(static_cast<double>(n - k) + 1.0);
        total += std::exp(log_binom + static_cast<double>(k) * log_p +
                          static_cast<double>(n - k) * log_q);
    }
    return total;
}

std::size_t min_generators(double p_bound, double p_causal, bool odd_only) {
    if (p_causal <= 0.5)
        throw std::invalid_argument(
            "min_generators: requires p_causal > 0.5");
    if (p_causal >= 1.0 || p_bound <= 0.0 || p_bound >= 1.0)
        throw std::invalid_argument("min_generators: arguments out of range");
    for (std::size_t n = 1;; n += odd_only ? 2 : 1)
        if (p_spurious(n, p_causal) < p_bound) return n;
}

MonteCarloResult monte_carlo_spurious(std::size_t n, double p_causal,
                                      std::size_t trials, std::uint64_t seed) {
    if (trials < 1)
        throw std::invalid_argument("monte_carlo_spurious: trials must be >= 1");
    auto rng = substream(seed, "monte-carlo-spurious");
    std::binomial_distribution<std::size_t> binom(n, p_causal);
    std::size_t spurious = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::size_t k = binom(rng);
        if (k < n - k) ++spurious;
    }
    MonteCarloResult r;
    r.trials = trials;
    r.estimate = static_cast<double>(spurious) / static_cast<double>(trials);
    r.std_error =
        std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(trials));
    return r;
}

double estimate_pc(std::size_t correlated_count,
                   std::size_t decorrelated_count) {
    if (correlated_count == 0 && decorrelated_count == 0)
        throw std::invalid_argument("estimate_pc: both counts are zero");
    const double corr = static_cast<double>(correlated_count);
    const double decorr = static_cast<double>(decorrelated_count);
    return 1.0 - corr / (2.0 * corr + decorr);
}

}  // namespace mgr

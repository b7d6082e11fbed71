#pragma once

#include <cstdint>
#include <cstddef>

namespace mgr {

// Cooperative payoff game between k causal-selecting generators out of n and
// a predictor interpolated by alpha between fitting the spurious feature
// (alpha = 0) and the causal feature (alpha = 1).
struct GameSpec {
    std::size_t n = 3;    // generator count
    std::size_t k = 2;    // generators selecting the causal feature
    double alpha = 0.5;   // predictor tendency toward the causal feature
    double a = 2.0;       // payoff when predictor fits the selected feature
    double b = 1.0;       // payoff otherwise; requires a > b
    double p_causal = 0.67;
    double p_spurious_bound = 0.2;

    void validate() const;
};

// Expected predictor payoff R_P(alpha).
double predictor_payoff(const GameSpec& spec);

// dR_P/dalpha = (a - b) * (2k - n); positive iff the causal majority holds.
double payoff_gradient(const GameSpec& spec);

// P(k < n - k) for k ~ Binomial(n, p_causal): summation up to (n-1)/2 for odd
// n and n/2 - 1 for even n (ties count as non-spurious). Log-space binomials.
double p_spurious(std::size_t n, double p_causal);

// Smallest n with p_spurious(n, p_causal) < p_bound; odd_only restricts the
// search to odd n where the majority argument has no tie states.
std::size_t min_generators(double p_bound, double p_causal,
                           bool odd_only = true);

struct MonteCarloResult {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t trials = 0;
};

MonteCarloResult monte_carlo_spurious(std::size_t n, double p_causal,
                                      std::size_t trials, std::uint64_t seed);

// P_c approximated from corpus statistics:
// 1 - correlated / (2 * correlated + decorrelated).
double estimate_pc(std::size_t correlated_count, std::size_t decorrelated_count);

}  // namespace mgr

#pragma once

// Preference confidence: Gaussian approximation, paired bootstrap, and the
// parametric confidence interval of a mean score.

#include <cstdint>
#include <span>
#include <utility>

#include "ckpt_arbiter/aggregate.hpp"

namespace ckpt_arbiter {

// Moments of one checkpoint's per-sample scores.
struct MomentSummary {
    double mean = 0.0;
    double std_dev = 0.0;  // sample standard deviation
    std::size_t n = 1;

    void validate() const;
    // Standard error of the mean, std_dev / sqrt(n).
    double standard_error() const;
    bool operator==(const MomentSummary&) const = default;
};

MomentSummary summarize(std::span<const double> scores);

struct ResampleConfig {
    std::size_t n_resamples = 2000;
    std::size_t subsample_size = 600;
    std::uint64_t seed = 0;
    bool replacement = true;
    bool operator==(const ResampleConfig&) const = default;
};

// Standard normal CDF.
double normal_cdf(double x);
// Two-sided critical value for a confidence level, e.g. 0.95 -> 1.95996.
double normal_two_sided_quantile(double level);

// Phi((mu_a - mu_b) / sqrt(se_a^2 + se_b^2)) with se = std_dev / sqrt(n).
// Throws std::domain_error when both spreads are zero and the means are equal.
double gaussian_preference(const MomentSummary& a, const MomentSummary& b);

struct BootstrapResult {
    double probability = 0.5;  // P(A > B); zero differences count one half
    double mean_difference = 0.0;
    double std_difference = 0.0;
    std::size_t n_resamples = 0;
};

// Paired bootstrap: each draw resamples sample indices with replacement and
// applies the same indices to both lists.
BootstrapResult bootstrap_difference(std::span<const double> scores_a, std::span<const double> scores_b,
                                     const ResampleConfig& config, const Aggregator& aggregator);
double bootstrap_preference(std::span<const double> scores_a, std::span<const double> scores_b,
                            const ResampleConfig& config, const Aggregator& aggregator);

// mu +- z * sigma / sqrt(n).
std::pair<double, double> parametric_ci(const MomentSummary& summary, double level);

}  // namespace ckpt_arbiter

#include "ckpt_arbiter/confidence.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

#include "ckpt_arbiter/kernels.hpp"

namespace ckpt_arbiter {

void MomentSummary::validate() const {
    if (n < 1) throw std::invalid_argument("moment summary needs n >= 1");
    if (!std::isfinite(std_dev) || std_dev < 0.0)
        throw std::invalid_argument("moment summary std_dev must be finite and >= 0");
    if (!std::isfinite(mean)) throw std::invalid_argument("moment summary mean must be finite");
}

double MomentSummary::standard_error() const { return std_dev / std::sqrt(static_cast<double>(n)); }

MomentSummary summarize(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("cannot summarize an empty list");
    const double mean = mean_of(scores);
    double ss = 0.0;
    for (double s : scores) ss += (s - mean) * (s - mean);
    const double sd = scores.size() > 1 ? std::sqrt(ss / static_cast<double>(scores.size() - 1)) : 0.0;
    return {mean, sd, scores.size()};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_two_sided_quantile(double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0,1)");
    return std::sqrt(2.0) * boost::math::erf_inv(level);
}

double gaussian_preference(const MomentSummary& a, const MomentSummary& b) {
    a.validate();
    b.validate();
    const double se_a = a.standard_error();
    const double se_b = b.standard_error();
    const double spread = std::sqrt(se_a * se_a + se_b * se_b);
    const double gap = a.mean - b.mean;
    if (spread == 0.0) {
        if (gap == 0.0) throw std::domain_error("degenerate comparison: zero variance and equal means");
        return gap > 0.0 ? 1.0 : 0.0;
    }
    return normal_cdf(gap / spread);
}

BootstrapResult bootstrap_difference(std::span<const double> scores_a, std::span<const double> scores_b,
                                     const ResampleConfig& config, const Aggregator& aggregator) {
    if (scores_a.size() != scores_b.size()) throw std::invalid_argument("bootstrap: score lists differ in length");
    if (scores_a.size() < 2) throw std::invalid_argument("bootstrap: need at least 2 paired samples");
    if (config.n_resamples < 1) throw std::invalid_argument("bootstrap: n_resamples must be >= 1");
    if (!config.replacement) throw std::invalid_argument("bootstrap requires sampling with replacement");

    const auto diffs =
        kernels::bootstrap_differences_parallel(scores_a, scores_b, config.n_resamples, config.seed, aggregator);

    // Twice the count keeps half-credit for zero differences in integers.
    std::size_t doubled = 0;
    double sum = 0.0;
    for (double d : diffs) {
        doubled += d > 0.0 ? 2 : (d == 0.0 ? 1 : 0);
        sum += d;
    }
    const double r = static_cast<double>(diffs.size());
    const double mean = sum / r;
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);

    BootstrapResult out;
    out.probability = static_cast<double>(doubled) / (2.0 * r);
    out.mean_difference = mean;
    out.std_difference = diffs.size() > 1 ? std::sqrt(ss / (r - 1.0)) : 0.0;
    out.n_resamples = diffs.size();
    return out;
}

double bootstrap_preference(std::span<const double> scores_a, std::span<const double> scores_b,
                            const ResampleConfig& config, const Aggregator& aggregator) {
    return bootstrap_difference(scores_a, scores_b, config, aggregator).probability;
}

std::pair<double, double> parametric_ci(const MomentSummary& summary, double level) {
    summary.validate();
    if (summary.n < 2) throw std::invalid_argument("parametric CI needs n >= 2");
    const double half = normal_two_sided_quantile(level) * summary.std_dev / std::sqrt(static_cast<double>(summary.n));
    return {summary.mean - half, summary.mean + half};
}

}  // namespace ckpt_arbiter

#include "ckpt_arbiter/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ckpt_arbiter/rng.hpp"

namespace ckpt_arbiter::kernels {

std::vector<std::size_t> draw_with_replacement(std::size_t n, std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.index(n);
    return idx;
}

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, std::uint64_t stream_seed) {
    if (k > n) throw std::invalid_argument("subset larger than population");
    Rng rng(stream_seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

void check_paired(std::span<const double> a, std::span<const double> b, std::size_t n_resamples) {
    if (a.size() != b.size()) throw std::invalid_argument("paired score lists differ in length");
    if (a.empty()) throw std::invalid_argument("paired score lists are empty");
    if (n_resamples < 1) throw std::invalid_argument("n_resamples must be >= 1");
}

double one_draw(std::span<const double> a, std::span<const double> b, std::uint64_t stream_seed,
                const Aggregator& aggregator, std::vector<double>& buf_a, std::vector<double>& buf_b) {
    const auto n = a.size();
    Rng rng(stream_seed);
    buf_a.resize(n);
    buf_b.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = rng.index(n);
        buf_a[i] = a[j];
        buf_b[i] = b[j];
    }
    return aggregator(buf_a) - aggregator(buf_b);
}

// Returns NaN for a row with no observed cells in the subset.
void one_subset(const ScoreMatrix& m, std::size_t subset_size, std::uint64_t stream_seed,
                const Aggregator& aggregator, std::vector<double>& out, std::vector<double>& buf) {
    const auto cols = draw_without_replacement(m.n_samples(), subset_size, stream_seed);
    out.assign(m.n_checkpoints(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < m.n_checkpoints(); ++r) {
        buf.clear();
        for (auto c : cols)
            if (!m.missing(r, c)) buf.push_back(m.value(r, c));
        if (!buf.empty()) out[r] = aggregator(buf);
    }
}

void check_subsets(const ScoreMatrix& m, std::size_t subset_size, std::size_t n_runs) {
    if (subset_size < 1 || subset_size > m.n_samples())
        throw std::invalid_argument("subsample_size " + std::to_string(subset_size) + " exceeds " +
                                    std::to_string(m.n_samples()) + " available samples");
    if (n_runs < 1) throw std::invalid_argument("n_runs must be >= 1");
}

void check_no_empty_rows(const RunScores& runs) {
    for (const auto& run : runs)
        for (double v : run)
            if (std::isnan(v)) throw std::invalid_argument("a checkpoint has no observed scores in some subset");
}

}  // namespace

std::vector<double> bootstrap_differences_serial(std::span<const double> a, std::span<const double> b,
                                                 std::size_t n_resamples, std::uint64_t seed,
                                                 const Aggregator& aggregator) {
    check_paired(a, b, n_resamples);
    std::vector<double> diffs(n_resamples);
    std::vector<double> buf_a, buf_b;
    for (std::size_t r = 0; r < n_resamples; ++r)
        diffs[r] = one_draw(a, b, derive_seed(seed, r), aggregator, buf_a, buf_b);
    return diffs;
}

std::vector<double> bootstrap_differences_parallel(std::span<const double> a, std::span<const double> b,
                                                   std::size_t n_resamples, std::uint64_t seed,
                                                   const Aggregator& aggregator) {
    check_paired(a, b, n_resamples);
    std::vector<double> diffs(n_resamples);
    const auto n = static_cast<long long>(n_resamples);
#pragma omp parallel
    {
        std::vector<double> buf_a, buf_b;
#pragma omp for schedule(static)
        for (long long r = 0; r < n; ++r)
            diffs[r] = one_draw(a, b, derive_seed(seed, static_cast<std::uint64_t>(r)), aggregator, buf_a, buf_b);
    }
    return diffs;
}

RunScores subsample_aggregates_serial(const ScoreMatrix& matrix, std::size_t subset_size, std::size_t n_runs,
                                      std::uint64_t seed, const Aggregator& aggregator) {
    check_subsets(matrix, subset_size, n_runs);
    RunScores runs(n_runs);
    std::vector<double> buf;
    for (std::size_t r = 0; r < n_runs; ++r) one_subset(matrix, subset_size, derive_seed(seed, r), aggregator, runs[r], buf);
    check_no_empty_rows(runs);
    return runs;
}

RunScores subsample_aggregates_parallel(const ScoreMatrix& matrix, std::size_t subset_size, std::size_t n_runs,
                                        std::uint64_t seed, const Aggregator& aggregator) {
    check_subsets(matrix, subset_size, n_runs);
    RunScores runs(n_runs);
    const auto n = static_cast<long long>(n_runs);
#pragma omp parallel
    {
        std::vector<double> buf;
#pragma omp for schedule(static)
        for (long long r = 0; r < n; ++r)
            one_subset(matrix, subset_size, derive_seed(seed, static_cast<std::uint64_t>(r)), aggregator, runs[r], buf);
    }
    check_no_empty_rows(runs);
    return runs;
}

}  // namespace ckpt_arbiter::kernels

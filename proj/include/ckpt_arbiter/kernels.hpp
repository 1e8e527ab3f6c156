#pragma once

// Resampling kernels. Each has an OpenMP version and a serial reference that
// must produce identical output; draw r always uses stream derive_seed(seed, r).

#include <cstdint>
#include <span>
#include <vector>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/types.hpp"

namespace ckpt_arbiter::kernels {

// n indices drawn uniformly with replacement from [0, n).
std::vector<std::size_t> draw_with_replacement(std::size_t n, std::uint64_t stream_seed);
// k distinct indices from [0, n), returned ascending.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, std::uint64_t stream_seed);

// D[r] = agg(a[idx_r]) - agg(b[idx_r]) over paired bootstrap draws.
std::vector<double> bootstrap_differences_serial(std::span<const double> a, std::span<const double> b,
                                                 std::size_t n_resamples, std::uint64_t seed,
                                                 const Aggregator& aggregator);
std::vector<double> bootstrap_differences_parallel(std::span<const double> a, std::span<const double> b,
                                                   std::size_t n_resamples, std::uint64_t seed,
                                                   const Aggregator& aggregator);

// out[r][c] = aggregate of checkpoint row c over the r-th subset of `subset_size`
// sample columns (missing cells skipped). Throws if some row is empty in a subset.
using RunScores = std::vector<std::vector<double>>;
RunScores subsample_aggregates_serial(const ScoreMatrix& matrix, std::size_t subset_size, std::size_t n_runs,
                                      std::uint64_t seed, const Aggregator& aggregator);
RunScores subsample_aggregates_parallel(const ScoreMatrix& matrix, std::size_t subset_size, std::size_t n_runs,
                                        std::uint64_t seed, const Aggregator& aggregator);

}  // namespace ckpt_arbiter::kernels

// Serial vs OpenMP timings for the resampling kernels.
//
//   bench_resample [n_samples] [n_resamples]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <omp.h>
#include <string>

#include "ckpt_arbiter/aggregate.hpp"
#include "ckpt_arbiter/kernels.hpp"
#include "ckpt_arbiter/rng.hpp"

using namespace ckpt_arbiter;

template <class Fn>
double time_ms(Fn&& fn, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const std::string& name, double serial, double parallel, bool identical) {
    std::printf("%-34s%10.2f ms%10.2f ms%8.2fx  %s\n", name.c_str(), serial, parallel, serial / parallel,
                identical ? "identical" : "MISMATCH");
}

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 600;
    const std::size_t r = argc > 2 ? std::stoul(argv[2]) : 2000;

    Rng rng(7);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::clamp(rng.normal(0.70, 0.15), 0.0, 1.0);
        b[i] = std::clamp(rng.normal(0.68, 0.15), 0.0, 1.0);
    }
    std::vector<CheckpointId> ckpts;
    for (int c = 0; c < 6; ++c) ckpts.emplace_back("ckpt_" + std::to_string(c));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
    ScoreMatrix m(ckpts, ids);
    for (std::size_t c = 0; c < ckpts.size(); ++c)
        for (std::size_t i = 0; i < n; ++i) m.set(c, i, std::clamp(rng.normal(0.6 + 0.01 * c, 0.15), 0.0, 1.0));

    std::printf("threads: %d, samples: %zu, resamples: %zu\n\n", omp_get_max_threads(), n, r);
    std::printf("%-34s%13s%13s%9s\n", "kernel", "serial", "parallel", "speedup");

    for (auto kind : {AggregatorKind::mean, AggregatorKind::percentile}) {
        const auto agg = make_aggregator(kind);
        std::vector<double> s, p;
        const double ts = time_ms([&] { s = kernels::bootstrap_differences_serial(a, b, r, 42, agg); });
        const double tp = time_ms([&] { p = kernels::bootstrap_differences_parallel(a, b, r, 42, agg); });
        report("bootstrap (" + to_string(kind) + ")", ts, tp, s == p);
    }
    for (auto kind : {AggregatorKind::mean, AggregatorKind::percentile}) {
        const auto agg = make_aggregator(kind);
        kernels::RunScores s, p;
        const double ts = time_ms([&] { s = kernels::subsample_aggregates_serial(m, n / 2, r / 10, 42, agg); });
        const double tp = time_ms([&] { p = kernels::subsample_aggregates_parallel(m, n / 2, r / 10, 42, agg); });
        report("subsample trials (" + to_string(kind) + ")", ts, tp, s == p);
    }
    return 0;
}

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "qcomb/counts.hpp"
#include "qcomb/fit.hpp"
#include "qcomb/franson.hpp"
#include "qcomb/random.hpp"
#include "qcomb/timestamps.hpp"
#include "qcomb/units.hpp"

using namespace qcomb;

namespace {

// Homogeneous Poisson process: exponential gaps keep the stream sorted by
// construction, so setup cost stays linear.
ts::TimestampStream poisson_stream(std::uint16_t channel, std::uint64_t seed,
                                   std::size_t n, double rate_hz) {
    rng::Xoshiro256pp gen(seed);
    const double mean_gap_ps = 1e12 / rate_hz;
    ts::TimestampStream s;
    s.channel_id = channel;
    s.seed = seed;
    s.times_ps.reserve(n);
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t += gen.exponential(mean_gap_ps);
        s.times_ps.push_back(static_cast<std::uint64_t>(t));
    }
    s.duration_ps = static_cast<std::uint64_t>(t) + 1;
    return s;
}

counts::ChannelPair bench_pair() {
    counts::ChannelPair pair;
    pair.lambda_signal_nm = 1542.9360;
    pair.lambda_idler_nm = 1549.3150;
    pair.eta_signal = 0.01;
    pair.eta_idler = 0.01;
    pair.raman_signal_hz_per_mw = 1e4;
    pair.raman_idler_hz_per_mw = 1e4;
    return pair;
}

counts::DetectorModel bench_detector() {
    counts::DetectorModel det;
    det.efficiency = 0.25;
    det.dark_rate_hz = 1600.0;
    det.dead_time_s = 1e-7;
    det.jitter_sigma_ps = 50.0;
    return det;
}

}  // namespace

static void BM_CountCoincidences(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = poisson_stream(0, 11, n, 1e5);
    const auto b = poisson_stream(1, 12, n, 1e5);
    for (auto _ : state) {
        auto r = ts::count_coincidences(a, b, 1000.0, 0.0);
        benchmark::DoNotOptimize(r.cc);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n));
}
BENCHMARK(BM_CountCoincidences)->Range(1 << 14, 1 << 20);

static void BM_BuildHistogram(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = poisson_stream(0, 21, n, 1e5);
    const auto b = poisson_stream(1, 22, n, 1e5);
    for (auto _ : state) {
        auto h = ts::build_histogram(a, b, 10.0, 5000.0);
        benchmark::DoNotOptimize(h.counts.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n));
}
BENCHMARK(BM_BuildHistogram)->Range(1 << 14, 1 << 20);

static void BM_SimulatePairStreams(benchmark::State& state) {
    const auto pair = bench_pair();
    const auto det = bench_detector();
    std::size_t events = 0;
    for (auto _ : state) {
        auto [sig, idl] = ts::simulate_pair_streams(pair, det, 5e7, 0.18, 60.0, 1.0, 31);
        events = sig.times_ps.size() + idl.times_ps.size();
        benchmark::DoNotOptimize(events);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * events));
}
BENCHMARK(BM_SimulatePairStreams);

static void BM_FitCoherenceTime(benchmark::State& state) {
    const auto pair = bench_pair();
    const auto det = bench_detector();
    const auto [sig, idl] = ts::simulate_pair_streams(pair, det, 5e7, 0.3, 60.0, 20.0, 32);
    const auto hist = ts::build_histogram(sig, idl, 10.0, 5000.0);
    for (auto _ : state) {
        auto cf = ts::fit_coherence_time(hist, std::hypot(50.0, 50.0));
        benchmark::DoNotOptimize(cf.tau_c_ps);
    }
}
BENCHMARK(BM_FitCoherenceTime);

static void BM_FitFringe(benchmark::State& state) {
    franson::FringeScan scan;
    for (int i = 0; i < 13; ++i) {
        const double phi = 2.0 * units::pi * i / 12.0;
        scan.phases.push_back(phi);
        scan.cc.push_back(std::round(4e4 * (1.0 + 0.93 * std::cos(phi)) + 500.0));
        scan.acc.push_back(500.0);
        scan.singles_s.push_back(3e6);
        scan.singles_i.push_back(3e6);
        scan.duration_s.push_back(60.0);
    }
    for (auto _ : state) {
        auto vis = franson::visibility_from_scan(scan, true);
        benchmark::DoNotOptimize(vis.v);
    }
}
BENCHMARK(BM_FitFringe);

static void BM_ExpGaussDensity(benchmark::State& state) {
    double t = -2500.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(ts::exp_gauss_density(t, 67.5, 70.7));
        t = t < 2500.0 ? t + 1.0 : -2500.0;
    }
}
BENCHMARK(BM_ExpGaussDensity);

BENCHMARK_MAIN();

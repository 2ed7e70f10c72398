#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qcomb/counts.hpp"
#include "qcomb/fit.hpp"

// Photon timestamp simulation and analysis: Poisson pair/noise stream
// generation with detector response, exact integer coincidence counting,
// delay histograms, and the coherence-time fit against the two-sided
// exponential convolved with the Gaussian timing response.

namespace qcomb::ts {

struct TimestampStream {
    std::uint16_t channel_id = 0;
    std::vector<std::uint64_t> times_ps;  // non-decreasing, all < duration_ps
    std::uint64_t duration_ps = 0;
    std::uint64_t seed = 0;  // generator seed when simulated, 0 for real data

    void validate() const;

    // Binary layout, little-endian: "QTS1", channel u16, count u64,
    // duration_ps u64, seed u64, then count delta-encoded u64 stamps
    // (first stamp absolute, the rest differences).
    void write_qts(const std::filesystem::path& path) const;
    void write_csv(const std::filesystem::path& path) const;  // channel,time_ps
    // Dispatches on the magic bytes: QTS binary or the CSV fallback.
    static TimestampStream read_file(const std::filesystem::path& path);
};

struct CorrelationHistogram {
    double bin_width_ps = 0.0;
    std::vector<double> delay_ps;  // bin centers, signed
    std::vector<std::uint64_t> counts;

    void to_csv(const std::filesystem::path& path) const;  // delay_ps,counts
    static CorrelationHistogram from_csv(const std::filesystem::path& path);
};

class EmptyStream : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InvalidSeed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class FitDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class JitterDominates : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reusing a seed with different simulation parameters silently breaks
// reproducibility audits, so simulators register (seed, parameter hash)
// here and throw InvalidSeed on a mismatch. Tests may reset it.
void seed_ledger_reset();

namespace detail {
std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v);
std::uint64_t hash_mix(std::uint64_t h, double v);
void register_seed(std::uint64_t seed, std::uint64_t params_hash);
}  // namespace detail

// Pair emissions are Poisson at R_PG P^2; the idler lags by a two-sided
// exponential of scale tau_c; each photon survives its arm's end-to-end
// efficiency independently; per-detector Gaussian jitter is added and a
// non-paralyzable dead time is applied last. One detector model serves
// both arms. Streams: first = signal (channel 0), second = idler (1).
std::pair<TimestampStream, TimestampStream> simulate_pair_streams(
    const counts::ChannelPair& pair, const counts::DetectorModel& det,
    double rpg_hz_per_mw2, double power_mw, double tau_c_ps, double duration_s,
    std::uint64_t seed);

struct CoincidenceResult {
    std::uint64_t cc = 0;       // pairs with |t_b - t_a - center| <= window/2
    double acc = 0.0;           // mean count over the displaced windows
    double car = 0.0;           // (cc - acc) / acc
    int n_side_windows = 0;
};

// Single pass over both sorted streams, O(n_a + n_b). All comparisons are
// exact 64-bit integer arithmetic: a pair lands in the window when
// 2|dt - center| <= window (ps, rounded once at entry). Accidentals are
// the mean over 10 windows displaced by +/-{3,5,7,9,11} window widths;
// displaced windows overlapping |offset| = exclude_delay_ps are skipped
// (franson side peaks sit there).
CoincidenceResult count_coincidences(const TimestampStream& a, const TimestampStream& b,
                                     double window_ps, double center_delay_ps,
                                     double exclude_delay_ps = 0.0);

// Delay histogram of t_b - t_a over [-span/2, +span/2], same pair walk.
// bin_width_ps must divide span_ps; the last bin is closed so the total
// equals count_coincidences(window = span).
CorrelationHistogram build_histogram(const TimestampStream& a, const TimestampStream& b,
                                     double bin_width_ps, double span_ps);

struct CoherenceFit {
    double tau_c_ps = 0.0;
    double tau_c_err_ps = 0.0;
    double t0_ps = 0.0;
    double background = 0.0;
    fit::FitResult fit;
};

// Fits amplitude * (two-sided exp ** gauss)(dt - t0) + background with the
// response sigma held fixed. Throws JitterDominates when sigma exceeds
// 5 * fitted tau_c.
CoherenceFit fit_coherence_time(const CorrelationHistogram& h, double sigma_jitter_ps);

// Unit-area convolution density of Laplace(tau) with a zero-mean Gaussian
// of width sigma, evaluated in closed form via scaled complementary error
// functions; exposed so tests can pit it against direct quadrature.
double exp_gauss_density(double dt_ps, double tau_ps, double sigma_ps);

}  // namespace qcomb::ts

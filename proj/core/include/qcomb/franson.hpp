#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qcomb/counts.hpp"
#include "qcomb/fit.hpp"
#include "qcomb/timestamps.hpp"

// Energy-time entanglement through a folded interferometer with a long/
// short path imbalance: fringe prediction, visibility and CHSH statistics
// from scans, and the Monte Carlo scan generator whose central coincidence
// peak carries the fringe while singles stay flat.

namespace qcomb::franson {

struct FransonConfig {
    double path_imbalance_ns = 7.0;
    double phase_total_rad = 0.0;   // phi_i + phi_s
    double splitter_ratio = 0.5;    // power transmission of each splitter pass
    double visibility_true = 1.0;   // simulation input

    void validate() const;
    // The two-photon regime needs the path imbalance to dwarf the single
    // photon coherence time; returns false when it does not.
    bool imbalance_exceeds_coherence(double tau_c_ps) const;
};

struct FringeScan {
    std::vector<double> phases;      // radians, or raw shifter voltage
    std::vector<double> cc;          // central-window counts per point
    std::vector<double> acc;         // displaced-window mean per point
    std::vector<double> singles_s;   // clicks per point
    std::vector<double> singles_i;
    std::vector<double> duration_s;

    void validate() const;
    // CSV columns: phase_rad_or_voltage,cc,acc,singles_s,singles_i,duration_s
    static FringeScan from_csv(const std::filesystem::path& path);
    void to_csv(const std::filesystem::path& path) const;
};

class InsufficientPhaseCoverage : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class ZeroTotalCounts : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Relative coincidence rate 1 + V cos(phase), unit phase average.
double predict_fringe(const FransonConfig& cfg, double phase_rad);

struct Visibility {
    double v = 0.0;
    double sigma = 0.0;
    bool flipped = false;  // fit found V < 0; reported positive with phase flip
    fit::FitResult fit;
};

// Fits A (1 + V cos(k phase + phi0)) with Poisson weights; the affine
// (k, phi0) calibration absorbs voltage-scaled abscissas. With
// subtract_background the per-point accidental mean is removed first.
Visibility visibility_from_scan(const FringeScan& scan, bool subtract_background);

// Two-point estimate from fringe extrema: V = (M - m)/(M + m) with the
// Poisson-propagated sigma (sigma_CC = sqrt(CC)).
Visibility visibility_two_point(double cc_max, double cc_min);

struct ChshResult {
    double s_max = 0.0;
    double sigma_s = 0.0;
    double n_sigma = 0.0;
};

// S_max = 2 sqrt(2) V, sigma_S = 2 sqrt(2) sigma_V, n_sigma = (S_max-2)/sigma_S.
ChshResult chsh_from_visibility(double v, double sigma_v);

// Violation strength as printed in summaries (nearest integer).
long n_sigma_std(double n_sigma);

// E = sum_ij ij CC_ij / sum CC_ij over ports i,j in {+,-}; cc[0][*] is the
// + port of the signal analyzer.
double correlation_coefficient(const std::array<std::array<double, 2>, 2>& cc_by_port);

// CHSH combination matched to analyzer phases (0, +-pi/4) and (pi/2, +-pi/4):
// S = E(a,b) + E(a,b') - E(a',b) + E(a',b').
double chsh_s(double e_ab, double e_ab2, double e_a2b, double e_a2b2);

struct EntanglementReport {
    int channel_index = 0;
    double v_raw = 0.0, v_raw_err = 0.0;
    double v_net = 0.0, v_net_err = 0.0;
    double s_max = 0.0, s_max_err = 0.0;  // from the net visibility
    double n_sigma = 0.0;
    bool flipped = false;

    void validate() const;  // definitional identities to 1e-9
};

EntanglementReport make_entanglement_report(int channel_index, const Visibility& raw,
                                            const Visibility& net);

struct ScanParams {
    FransonConfig cfg;
    counts::ChannelPair pair;
    counts::DetectorModel det;
    double rpg_hz_per_mw2 = 0.0;
    double power_mw = 0.0;
    double tau_c_ps = 0.0;
    std::vector<double> phases_rad;
    double duration_per_point_s = 0.0;
    double window_ps = 1000.0;  // central coincidence window
};

// Streams behind the interferometer for one phase setting. Per pair that
// survives both arms, the path outcomes split into a central (same-path)
// category whose probability carries 1 + V cos(phase) and two side
// categories offset by the path imbalance; single-arm remainders are
// weighted so each arm's click rate is exactly phase-independent.
std::pair<ts::TimestampStream, ts::TimestampStream> simulate_franson_streams(
    const ScanParams& sp, double phase_rad, std::uint64_t seed);

// Full fringe: one stream simulation and window count per phase point,
// point seeds derived from (seed, point index).
FringeScan simulate_franson_scan(const ScanParams& sp, std::uint64_t seed);

}  // namespace qcomb::franson

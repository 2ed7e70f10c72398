#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcomb/fit.hpp"

// Count-rate algebra for a photon-pair source behind lossy collection:
// singles and coincidence prediction, dead-time saturation and its
// inverse, and extraction of the pair generation rate from a power sweep
// by the singles-product-over-coincidences estimator, which cancels the
// arm efficiencies.

namespace qcomb::counts {

struct DetectorModel {
    double efficiency = 0.25;     // folded into the arm's loss chain, kept for bookkeeping
    double dark_rate_hz = 0.0;
    double dead_time_s = 0.0;
    double jitter_sigma_ps = 0.0;

    void validate() const;
};

struct LossComponent {
    std::string name;
    double loss_db = 0.0;
};

struct LossChain {
    std::vector<LossComponent> components;

    double total_db() const;
    double transmittance() const;
};

struct LossBudget {
    double total_db;
    double transmittance;
};
LossBudget loss_budget(const LossChain& chain);

struct ChannelPair {
    double lambda_signal_nm = 0.0;
    double lambda_idler_nm = 0.0;
    double eta_signal = 1.0;  // end-to-end, detector efficiency included
    double eta_idler = 1.0;
    double raman_signal_hz_per_mw = 0.0;
    double raman_idler_hz_per_mw = 0.0;
    double bandwidth_pm = 15.0;

    // Signal and idler must straddle the pump symmetrically in frequency,
    // within one FSR.
    void validate(double pump_wavelength_nm, double fsr_ghz) const;
};

struct PowerSweep {
    std::vector<double> powers_mw;
    std::vector<double> singles_s_hz;   // measured (saturated) rates
    std::vector<double> singles_i_hz;
    std::vector<double> cc_counts;      // window counts over duration, accidentals included
    std::vector<double> durations_s;
    double window_s = 0.5e-9;

    // CSV columns: power_mW,singles_s_Hz,singles_i_Hz,cc_counts,duration_s
    static PowerSweep from_csv(const std::filesystem::path& path, double window_s);
    void to_csv(const std::filesystem::path& path) const;
    void validate() const;
};

enum class Arm { signal, idler };

// Measured singles rate: eta R_PG P^2 + R_raman P + dark, saturated by the
// non-paralyzable dead time, SC = N / (1 + tau N).
double predict_singles_hz(const ChannelPair& pair, const DetectorModel& det,
                          double rpg_hz_per_mw2, double power_mw, Arm arm);

double dead_time_saturate_hz(double true_rate_hz, double dead_time_s);

class SaturationExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inverse of the saturation map; throws SaturationExceeded for
// measured_hz >= 1/tau.
double correct_dead_time_hz(double measured_hz, double dead_time_s);

struct CoincidencePrediction {
    double cc_hz;
    double acc_hz;
    double car;
};

// CC = eta_s eta_i R_PG P^2 + ACC with ACC = SC_s SC_i t_window.
CoincidencePrediction predict_coincidences(const ChannelPair& pair,
                                           const DetectorModel& det,
                                           double rpg_hz_per_mw2, double power_mw,
                                           double window_s);

class NegativeQuadraticTerm : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RpgExtraction {
    double r_s_hz_per_mw2 = 0.0;   // quadratic coefficient of corrected signal singles
    double r_i_hz_per_mw2 = 0.0;
    double r_cc_hz_per_mw2 = 0.0;  // quadratic coefficient of accidental-subtracted CC
    double rpg_hz_per_mw2 = 0.0;   // R_s R_i / R_CC
    double r_s_err = 0.0;
    double r_i_err = 0.0;
    double r_cc_err = 0.0;
    double rpg_err = 0.0;
    // Singles fits are full quadratics (params: offset, linear, quadratic);
    // the CC fit is offset plus quadratic only (params: offset, quadratic).
    fit::FitResult fit_s, fit_i, fit_cc;
};

// Pair generation rate from a power sweep. Singles are dead-time corrected
// and fitted quadratically with Poisson weights; coincidence rates get the
// modeled accidentals subtracted and are fitted as offset plus quadratic.
// The ratio R_s R_i / R_CC cancels both arm efficiencies.
RpgExtraction extract_rpg(const PowerSweep& sweep, const DetectorModel& det);

// B in GHz/(mW^2 nm) from R_PG in Hz/mW^2 and the channel bandwidth in pm.
double brightness_ghz_per_mw2_nm(double rpg_hz_per_mw2, double bandwidth_pm);

}  // namespace qcomb::counts

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcomb/fit.hpp"

// Resonator spectroscopy: locate resonance dips in a transmission trace,
// fit each to a Lorentzian, split loaded Q into intrinsic/external parts,
// and fit the integrated dispersion across a resonance comb.

namespace qcomb::spectra {

struct TransmissionSpectrum {
    std::vector<double> wavelength_nm;   // strictly increasing
    std::vector<double> transmission_db; // <= 0, 0 = full transmission

    // CSV columns: wavelength_nm,transmission_dB
    static TransmissionSpectrum from_csv(const std::filesystem::path& path);
    void to_csv(const std::filesystem::path& path) const;
    void validate() const;
};

enum class Coupling { under, over };

struct Resonance {
    double lambda0_nm = 0.0;
    double fwhm_pm = 0.0;
    double extinction_db = 0.0;
    double q_loaded = 0.0;
    double q_intrinsic = 0.0;
    double q_external = 0.0;
    int mode_index_mu = 0;  // relative to the pump resonance; set by fit_dispersion
};

// 1/Q_L = 1/Q_i + 1/Q_e
double loaded_q(double q_intrinsic, double q_external);

// Splits Q_L using the dip floor: sqrt(T_min) = |Q_i - Q_e|/(Q_i + Q_e).
// The sign ambiguity needs the coupling regime; over-coupled means
// Q_e < Q_i (dip floor approaches 0 from the over side as Q_e -> Q_i).
struct QSplit {
    double q_intrinsic;
    double q_external;
};
QSplit split_loaded_q(double q_loaded, double t_min, Coupling coupling);

// A candidate dip: the samples handed to the Lorentzian fit, plus crude
// estimates used as initial parameters.
struct ResonanceWindow {
    std::vector<double> wavelength_nm;
    std::vector<double> transmission_linear;
    double lambda_center_est = 0.0;
    double fwhm_est_pm = 0.0;
    double t_min_est = 1.0;
    double depth_db_est = 0.0;
};

// Dips at least min_depth_db deep, each with a local fitting window.
std::vector<ResonanceWindow> find_resonances(const TransmissionSpectrum& spectrum,
                                             double min_depth_db);

// Fits 1 - d / (1 + (2 (lambda - lambda0) / fwhm)^2) after normalizing the
// window edges to unit baseline. coupling resolves the Q split; nullopt is
// accepted only for deep dips (T_min <= 0.02) where the split is near
// degenerate and critical coupling is assumed.
Resonance fit_lorentzian(const ResonanceWindow& window,
                         std::optional<Coupling> coupling);

std::vector<Resonance> analyze_spectrum(const TransmissionSpectrum& spectrum,
                                        double min_depth_db,
                                        std::optional<Coupling> coupling);

struct DispersionFit {
    double omega0_rad_s = 0.0;
    double d1_rad_s = 0.0;
    double d2_rad_s = 0.0;
    double d1_over_2pi_ghz = 0.0;
    double d2_over_2pi_mhz = 0.0;
    std::vector<int> mode_index;
    std::vector<double> dint_rad_s;  // omega_mu - omega0 - D1 mu per resonance
    fit::FitResult fit;
};

// Quadratic fit of resonance frequency vs relative mode number. pump_index
// addresses the resonance list (wavelength-ascending); bluer resonances get
// positive mu. Needs at least 3 resonances.
DispersionFit fit_dispersion(std::vector<Resonance>& resonances, std::size_t pump_index);

// beta2 = -n_group * D2 / (c * D1^2); negative = anomalous.
double gvd_beta2_s2_per_m(double d2_rad_s, double d1_rad_s, double n_group);

class NoResonancesFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class AmbiguousCoupling : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class FitDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InsufficientModes : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qcomb::spectra

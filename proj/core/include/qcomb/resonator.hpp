#pragma once

#include <stdexcept>

// Ring geometry and the spontaneous four-wave-mixing pair rate: forward
// prediction from the nonlinear coefficient, inverse extraction of the
// coefficient from a measured rate, Q/radius scaling, and the pulley
// coupler model.

namespace qcomb::resonator {

struct RingResonator {
    double radius_um = 0.0;
    double n_group = 0.0;
    double gamma_per_w_m = 0.0;       // effective nonlinearity, 1/(W m)
    double pump_wavelength_nm = 0.0;  // pump resonance center
    double d1_rad_s = 0.0;            // FSR as angular frequency
    double d2_rad_s = 0.0;
    double q_loaded = 0.0;
    double q_external = 0.0;

    double roundtrip_m() const;
    double fsr_hz() const;           // D1 / 2 pi
    double group_velocity_m_s() const;

    // Geometry and dispersion must agree: FSR from n_group/roundtrip vs
    // D1/2pi within 1 part in 1e6. Throws std::invalid_argument.
    void validate() const;

    RingResonator with_q(double ql, double qe) const;
};

// Builds the ring with n_group derived from a measured FSR, so the
// FSR/D1 consistency holds by construction.
RingResonator ring_from_fsr(double radius_um, double fsr_ghz, double gamma_per_w_m,
                            double pump_wavelength_nm, double d2_rad_s,
                            double q_loaded, double q_external);

// Pair generation rate inside the ring (before any collection loss),
// quadratic in pump power, with the phase-mismatch sinc^2 factor.
double pair_generation_rate_hz(const RingResonator& ring, double pump_power_w,
                               double delta_kappa_per_m = 0.0);

// Inverse of the rate formula at sinc^2 = 1: measured R_PG in Hz/W^2
// determines gamma up to sign.
double extract_gamma_per_w_m(const RingResonator& ring, double rpg_hz_per_w2);

// Rate after scaling loaded/external Q by factor_q (same factor on both,
// preserving the coupling ratio) and the radius by factor_r, relative to
// the unscaled ring. Equals factor_q^3 / factor_r^2 for fixed gamma and
// n_group: Q^8/Q_e^5 contributes the cube, v_g^4/L^2 with v_g independent
// of R contributes 1/R^2.
double rate_scaling(const RingResonator& ring, double factor_q, double factor_r);

struct CouplerDesign {
    double delta_n_eff = 0.0;        // bus/ring effective index mismatch
    double wavelength_nm = 0.0;
    double coupling_length_um = 0.0;
};

// C = pi * delta_n_eff / lambda, in 1/um.
double coupling_coefficient_per_um(const CouplerDesign& d);

// sin^2(C * L_c): fraction of power transferred over the coupling length.
double coupling_efficiency(const CouplerDesign& d);

}  // namespace qcomb::resonator

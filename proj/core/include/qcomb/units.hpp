#pragma once

#include <cmath>
#include <stdexcept>

// Physical constants and unit conversions shared by every module.
// Conventions: wavelengths in nm, loss in positive dB, angular
// frequencies in rad/s, plain frequencies in Hz.

namespace qcomb::units {

inline constexpr double c_m_per_s = 299792458.0;
inline constexpr double pi = 3.141592653589793238462643383279502884;

inline double omega_from_wavelength_nm(double lambda_nm) {
    if (!(lambda_nm > 0.0))
        throw std::domain_error("wavelength must be positive");
    return 2.0 * pi * c_m_per_s / (lambda_nm * 1e-9);
}

inline double wavelength_nm_from_omega(double omega_rad_s) {
    if (!(omega_rad_s > 0.0))
        throw std::domain_error("angular frequency must be positive");
    return 2.0 * pi * c_m_per_s / omega_rad_s * 1e9;
}

inline double frequency_hz_from_wavelength_nm(double lambda_nm) {
    if (!(lambda_nm > 0.0))
        throw std::domain_error("wavelength must be positive");
    return c_m_per_s / (lambda_nm * 1e-9);
}

inline double wavelength_nm_from_frequency_hz(double f_hz) {
    if (!(f_hz > 0.0))
        throw std::domain_error("frequency must be positive");
    return c_m_per_s / f_hz * 1e9;
}

// Positive dB means attenuation: 3.01 dB -> 0.5.
inline double db_to_linear(double loss_db) {
    return std::pow(10.0, -loss_db / 10.0);
}

inline double linear_to_db(double transmittance) {
    if (!(transmittance > 0.0))
        throw std::domain_error("transmittance must be positive");
    return -10.0 * std::log10(transmittance);
}

}  // namespace qcomb::units

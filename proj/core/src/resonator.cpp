#include "qcomb/resonator.hpp"

#include <cmath>

#include "qcomb/units.hpp"

namespace qcomb::resonator {

namespace {

double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

}  // namespace

double RingResonator::roundtrip_m() const {
    return 2.0 * units::pi * radius_um * 1e-6;
}

double RingResonator::fsr_hz() const {
    return d1_rad_s / (2.0 * units::pi);
}

double RingResonator::group_velocity_m_s() const {
    return units::c_m_per_s / n_group;
}

void RingResonator::validate() const {
    if (!(radius_um > 0.0)) throw std::invalid_argument("ring: radius must be positive");
    if (!(n_group > 0.0)) throw std::invalid_argument("ring: n_group must be positive");
    if (!(gamma_per_w_m >= 0.0)) throw std::invalid_argument("ring: gamma must be non-negative");
    if (!(pump_wavelength_nm > 0.0))
        throw std::invalid_argument("ring: pump wavelength must be positive");
    if (!(d1_rad_s > 0.0)) throw std::invalid_argument("ring: D1 must be positive");
    if (!(q_loaded > 0.0) || !(q_external > 0.0))
        throw std::invalid_argument("ring: Q factors must be positive");
    if (q_external < q_loaded)
        throw std::invalid_argument("ring: Q_external below Q_loaded is unphysical");
    double fsr_geom = units::c_m_per_s / (n_group * roundtrip_m());
    double rel = std::abs(fsr_geom - fsr_hz()) / fsr_hz();
    if (rel > 1e-6)
        throw std::invalid_argument("ring: FSR from geometry disagrees with D1");
}

RingResonator RingResonator::with_q(double ql, double qe) const {
    RingResonator r = *this;
    r.q_loaded = ql;
    r.q_external = qe;
    return r;
}

RingResonator ring_from_fsr(double radius_um, double fsr_ghz, double gamma_per_w_m,
                            double pump_wavelength_nm, double d2_rad_s,
                            double q_loaded, double q_external) {
    RingResonator r;
    r.radius_um = radius_um;
    r.gamma_per_w_m = gamma_per_w_m;
    r.pump_wavelength_nm = pump_wavelength_nm;
    r.d1_rad_s = 2.0 * units::pi * fsr_ghz * 1e9;
    r.d2_rad_s = d2_rad_s;
    r.q_loaded = q_loaded;
    r.q_external = q_external;
    r.n_group = units::c_m_per_s / (fsr_ghz * 1e9 * r.roundtrip_m());
    r.validate();
    return r;
}

double pair_generation_rate_hz(const RingResonator& ring, double pump_power_w,
                               double delta_kappa_per_m) {
    ring.validate();
    if (!(pump_power_w >= 0.0))
        throw std::domain_error("pump power must be non-negative");
    const double vg = ring.group_velocity_m_s();
    const double l = ring.roundtrip_m();
    const double w0 = units::omega_from_wavelength_nm(ring.pump_wavelength_nm);
    const double q = ring.q_loaded;
    const double qe = ring.q_external;
    const double s = sinc(l * delta_kappa_per_m / 2.0);
    return 32.0 * ring.gamma_per_w_m * ring.gamma_per_w_m * std::pow(vg, 4) *
           pump_power_w * pump_power_w * std::pow(q, 8) /
           (std::pow(w0, 3) * l * l * std::pow(qe, 5)) * (s * s);
}

double extract_gamma_per_w_m(const RingResonator& ring, double rpg_hz_per_w2) {
    if (!(rpg_hz_per_w2 > 0.0))
        throw std::domain_error("measured rate must be positive");
    RingResonator unit = ring;
    unit.gamma_per_w_m = 1.0;
    double k = pair_generation_rate_hz(unit, 1.0);  // rate per W^2 at gamma = 1
    return std::sqrt(rpg_hz_per_w2 / k);
}

double rate_scaling(const RingResonator& ring, double factor_q, double factor_r) {
    if (!(factor_q > 0.0) || !(factor_r > 0.0))
        throw std::domain_error("scale factors must be positive");
    RingResonator scaled = ring;
    scaled.radius_um = ring.radius_um * factor_r;
    scaled.q_loaded = ring.q_loaded * factor_q;
    scaled.q_external = ring.q_external * factor_q;
    // Keep geometry/D1 consistent: FSR shrinks as the ring grows.
    scaled.d1_rad_s = ring.d1_rad_s / factor_r;
    double base = pair_generation_rate_hz(ring, 1.0);
    return pair_generation_rate_hz(scaled, 1.0) / base;
}

double coupling_coefficient_per_um(const CouplerDesign& d) {
    if (!(d.wavelength_nm > 0.0))
        throw std::domain_error("coupler: wavelength must be positive");
    return units::pi * d.delta_n_eff / (d.wavelength_nm * 1e-3);
}

double coupling_efficiency(const CouplerDesign& d) {
    double c = coupling_coefficient_per_um(d);
    double s = std::sin(c * d.coupling_length_um);
    return s * s;
}

}  // namespace qcomb::resonator

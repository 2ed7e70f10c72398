#include <doctest.h>

#include <cmath>

#include "qcomb/resonator.hpp"
#include "qcomb/units.hpp"

#include "helpers.hpp"

using namespace qcomb;

namespace {

resonator::RingResonator reference_ring(double gamma = 550.0, double ql = 8.3e4,
                                        double qe = 1.2e5) {
    const double d2 = 2.0 * units::pi * 32.4e6;
    return resonator::ring_from_fsr(58.6, 202.8, gamma, 1546.58, d2, ql, qe);
}

}  // namespace

TEST_CASE("ring built from FSR has consistent derived geometry") {
    const auto ring = reference_ring();
    CHECK(ring.roundtrip_m() == doctest::Approx(2.0 * units::pi * 58.6e-6).epsilon(1e-12));
    CHECK(ring.fsr_hz() == doctest::Approx(202.8e9).epsilon(1e-12));
    // n_g = c / (FSR * 2 pi R) evaluated by hand for 58.6 um / 202.8 GHz.
    CHECK(ring.n_group == doctest::Approx(4.0149049478).epsilon(1e-9));
    CHECK(ring.group_velocity_m_s() == doctest::Approx(7.46699e7).epsilon(1e-5));
    CHECK(ring.group_velocity_m_s() * ring.n_group ==
          doctest::Approx(units::c_m_per_s).epsilon(1e-12));
}

TEST_CASE("pair generation rate at the reference point") {
    const auto ring = reference_ring();
    // Frozen from an explicit evaluation of the closed-form rate at 1 W.
    CHECK(resonator::pair_generation_rate_hz(ring, 1.0) ==
          doctest::Approx(1.11203e14).epsilon(1e-3));
}

TEST_CASE("pair rate is quadratic in pump power") {
    const auto ring = reference_ring();
    const double r1 = resonator::pair_generation_rate_hz(ring, 0.25e-3);
    const double r2 = resonator::pair_generation_rate_hz(ring, 0.50e-3);
    CHECK(r2 == doctest::Approx(4.0 * r1).epsilon(1e-12));
    CHECK(resonator::pair_generation_rate_hz(ring, 0.0) == 0.0);
}

TEST_CASE("phase mismatch rolls the rate off as sinc squared") {
    const auto ring = reference_ring();
    const double l = ring.roundtrip_m();
    const double r0 = resonator::pair_generation_rate_hz(ring, 1e-3, 0.0);

    // First sinc zero at L dk / 2 = pi.
    const double dk_zero = 2.0 * units::pi / l;
    CHECK(resonator::pair_generation_rate_hz(ring, 1e-3, dk_zero) < 1e-12 * r0);

    // Small mismatch: 1 - (L dk / 2)^2 / 3 to leading order.
    const double dk_small = 0.02 * 2.0 / l;
    const double expect = 1.0 - 0.02 * 0.02 / 3.0;
    CHECK(resonator::pair_generation_rate_hz(ring, 1e-3, dk_small) / r0 ==
          doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("nonlinearity extraction inverts the rate prediction") {
    const auto ring = reference_ring();
    const double rate = resonator::pair_generation_rate_hz(ring, 1.0);
    CHECK(resonator::extract_gamma_per_w_m(ring, rate) == doctest::Approx(550.0).epsilon(1e-12));
    // The stored gamma plays no role in the inversion.
    const auto blank = reference_ring(0.0);
    CHECK(resonator::extract_gamma_per_w_m(blank, rate) == doctest::Approx(550.0).epsilon(1e-12));
}

TEST_CASE("extraction from the measured per-channel rate lands near design gamma") {
    // Band-average loaded and intrinsic Q with the strongest channel's
    // fitted rate; the inferred gamma must sit within 50% of design.
    const double ql = 7.8e4, qi = 2.2e5;
    const double qe = 1.0 / (1.0 / ql - 1.0 / qi);
    CHECK(qe == doctest::Approx(120845.07).epsilon(1e-6));
    const double d2 = 2.0 * units::pi * 32.4e6;
    const auto ring = resonator::ring_from_fsr(58.6, 202.8, 0.0, 1546.58, d2, ql, qe);
    const double rate_hz_per_w2 = 65.1e6 * 1e6;  // MHz/mW^2 to Hz/W^2
    const double gamma = resonator::extract_gamma_per_w_m(ring, rate_hz_per_w2);
    // The inversion must close: a ring carrying the inferred gamma has to
    // reproduce the measured rate exactly.
    auto check_ring = ring;
    check_ring.gamma_per_w_m = gamma;
    CHECK(resonator::pair_generation_rate_hz(check_ring, 1.0) ==
          doctest::Approx(rate_hz_per_w2).epsilon(1e-12));
    CHECK(gamma == doctest::Approx(549.083).epsilon(1e-4));
    CHECK(std::max(gamma / 550.0, 550.0 / gamma) < 1.5);
}

TEST_CASE("rate scaling isolates the Q and radius exponents") {
    const auto ring = reference_ring();
    CHECK(resonator::rate_scaling(ring, 2.0, 1.0) == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(resonator::rate_scaling(ring, 1.0, 2.0) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(resonator::rate_scaling(ring, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(resonator::rate_scaling(ring, 0.0, 1.0), std::domain_error);
}

TEST_CASE("pulley coupler strength and transfer") {
    resonator::CouplerDesign d;
    d.delta_n_eff = 0.0012;
    d.wavelength_nm = 1550.0;
    const double c = resonator::coupling_coefficient_per_um(d);
    CHECK(c == doctest::Approx(units::pi * 0.0012 / 1.55).epsilon(1e-12));

    // Full transfer at a quarter beat length, quadratic onset from zero.
    d.coupling_length_um = 0.5 * units::pi / c;
    CHECK(resonator::coupling_efficiency(d) == doctest::Approx(1.0).epsilon(1e-12));
    d.coupling_length_um = 1e-3;
    CHECK(resonator::coupling_efficiency(d) ==
          doctest::Approx(c * 1e-3 * c * 1e-3).epsilon(1e-5));
    d.coupling_length_um = 0.0;
    CHECK(resonator::coupling_efficiency(d) == 0.0);
}

TEST_CASE("unphysical ring parameters are rejected") {
    const double d2 = 2.0 * units::pi * 32.4e6;
    CHECK_THROWS_AS(resonator::ring_from_fsr(-1.0, 202.8, 550, 1546.58, d2, 8.3e4, 1.2e5),
                    std::invalid_argument);
    CHECK_THROWS_AS(resonator::ring_from_fsr(58.6, 0.0, 550, 1546.58, d2, 8.3e4, 1.2e5),
                    std::invalid_argument);
    // Loaded Q above external Q implies a negative intrinsic loss rate.
    CHECK_THROWS_AS(resonator::ring_from_fsr(58.6, 202.8, 550, 1546.58, d2, 1.3e5, 1.2e5),
                    std::invalid_argument);
    const auto ring = reference_ring();
    CHECK_THROWS_AS(resonator::pair_generation_rate_hz(ring, -1.0), std::domain_error);
    CHECK_THROWS_AS(resonator::extract_gamma_per_w_m(ring, 0.0), std::domain_error);
}

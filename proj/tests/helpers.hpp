#pragma once

// Shared fixtures and independent oracles for the test binaries. Everything
// here is deliberately naive (all-pairs loops, adaptive quadrature) so a
// disagreement points at the library, not at the test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "qcomb/spectra.hpp"
#include "qcomb/units.hpp"

namespace testutil {

// ---------------------------------------------------------------- temp dirs

class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int i = 0; i < 100; ++i) {
            auto cand = base / ("qcomb_test_" + std::to_string(rd()));
            std::error_code ec;
            if (std::filesystem::create_directory(cand, ec)) {
                path_ = cand;
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create a unique directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// ----------------------------------------------------------------- numerics

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
    double m = mean(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ------------------------------------------------------ quadrature oracle

namespace detail {

inline double simpson_rec(const std::function<double(double)>& f, double a, double b,
                          double fa, double fm, double fb, double whole, double tol,
                          int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double both = left + right;
    if (depth <= 0 || std::abs(both - whole) < 15.0 * tol)
        return both + (both - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol) {
    const double fa = f(a), fb = f(b);
    const double m = 0.5 * (a + b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 36);
}

}  // namespace detail

// Laplace(tau) convolved with Gauss(sigma), integrated numerically over the
// Gaussian variable with a panel split at the kink s = t.
inline double laplace_gauss_conv_quad(double t_ps, double tau_ps, double sigma_ps) {
    const double inv_norm_g = 1.0 / (sigma_ps * std::sqrt(2.0 * qcomb::units::pi));
    auto f = [&](double s) {
        const double g = inv_norm_g * std::exp(-0.5 * s * s / (sigma_ps * sigma_ps));
        const double l = std::exp(-std::abs(t_ps - s) / tau_ps) / (2.0 * tau_ps);
        return g * l;
    };
    const double lo = -12.0 * sigma_ps, hi = 12.0 * sigma_ps;
    const double tol = 1e-13;
    if (t_ps > lo && t_ps < hi)
        return detail::adaptive_simpson(f, lo, t_ps, tol) +
               detail::adaptive_simpson(f, t_ps, hi, tol);
    return detail::adaptive_simpson(f, lo, hi, tol);
}

// ------------------------------------------------- brute-force coincidences

// All-pairs counter with the same rounding and the same integer predicate
// as the production counter: 2|dt - center| <= window, everything in ps.
inline std::uint64_t brute_force_cc(const std::vector<std::uint64_t>& a,
                                    const std::vector<std::uint64_t>& b, double window_ps,
                                    double center_ps = 0.0) {
    const std::int64_t w = std::llround(window_ps);
    const std::int64_t c = std::llround(center_ps);
    std::uint64_t total = 0;
    for (std::uint64_t ta : a)
        for (std::uint64_t tb : b) {
            const std::int64_t dt =
                static_cast<std::int64_t>(tb) - static_cast<std::int64_t>(ta);
            if (std::llabs(2 * (dt - c)) <= w) ++total;
        }
    return total;
}

// --------------------------------------------------- synthetic spectrum

struct SyntheticCombSpec {
    double pump_nm = 1546.58;
    double d1_ghz = 202.8;        // mode spacing at the pump
    double d2_mhz = 32.4;         // spacing walk-off per mode
    int n_side = 11;              // modes each side of the pump
    double q_loaded = 8.3e4;
    double t_min = 0.05;          // linear transmission floor of each dip
    int points_per_window = 241;  // samples across +/-10 linewidths
    double baseline_db = 0.0;     // flat offset applied on top of the dips
};

// Lorentzian dips on a quadratically detuned frequency comb. Mode centers
// follow omega_mu = omega_p + D1 mu + D2 mu^2 / 2 exactly, so a dispersion
// fit on the result has a known answer.
inline qcomb::spectra::TransmissionSpectrum synthetic_comb(const SyntheticCombSpec& sc) {
    using qcomb::units::omega_from_wavelength_nm;
    using qcomb::units::wavelength_nm_from_omega;
    const double omega_p = omega_from_wavelength_nm(sc.pump_nm);
    const double d1 = 2.0 * qcomb::units::pi * sc.d1_ghz * 1e9;
    const double d2 = 2.0 * qcomb::units::pi * sc.d2_mhz * 1e6;

    struct Dip {
        double lambda0_nm, width_nm;
    };
    std::vector<Dip> dips;
    for (int mu = -sc.n_side; mu <= sc.n_side; ++mu) {
        const double omega = omega_p + d1 * mu + 0.5 * d2 * mu * mu;
        const double l0 = wavelength_nm_from_omega(omega);
        dips.push_back({l0, l0 / sc.q_loaded});
    }

    std::vector<double> grid;
    for (const Dip& d : dips) {
        auto w = linspace(d.lambda0_nm - 10.0 * d.width_nm, d.lambda0_nm + 10.0 * d.width_nm,
                          static_cast<std::size_t>(sc.points_per_window));
        grid.insert(grid.end(), w.begin(), w.end());
    }
    const double lo = dips.back().lambda0_nm - 0.4;  // dips are in descending lambda order
    const double hi = dips.front().lambda0_nm + 0.4;
    auto base = linspace(lo, hi, 400);
    grid.insert(grid.end(), base.begin(), base.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               grid.end());

    qcomb::spectra::TransmissionSpectrum sp;
    const double depth = 1.0 - sc.t_min;
    for (double lambda : grid) {
        double t = 1.0;
        for (const Dip& d : dips) {
            const double x = 2.0 * (lambda - d.lambda0_nm) / d.width_nm;
            t -= depth / (1.0 + x * x);
        }
        if (t < 1e-6) t = 1e-6;
        sp.wavelength_nm.push_back(lambda);
        sp.transmission_db.push_back(10.0 * std::log10(t) + sc.baseline_db);
    }
    return sp;
}

// ------------------------------------------------------- reference fixtures

// Frozen reference values for the eleven-channel device: exact grid
// wavelengths, fitted pair rates (MHz/mW^2), printed brightness, coherence
// times, raw and background-corrected visibilities, CHSH S and the printed
// violation significance.
struct ReferenceChannel {
    int index;
    double lambda_s_nm, lambda_i_nm;
    double rpg_mhz_per_mw2;
    double brightness;
    double tau_c_ps;
    double v_raw, v_raw_err;
    double v_net, v_net_err;
    double s_max, s_max_err;
    int n_sigma_printed;
};

inline constexpr ReferenceChannel kReference[11] = {
    {1, 1544.5258, 1547.7153, 66.1, 4.41, 61.87, 0.9664, 0.0226, 0.9936, 0.0100, 2.810, 0.028, 29},
    {2, 1542.9360, 1549.3150, 65.1, 4.34, 87.60, 0.9636, 0.0217, 0.9731, 0.0188, 2.752, 0.053, 14},
    {3, 1541.3494, 1550.9180, 68.5, 4.57, 69.33, 0.9285, 0.0330, 0.9374, 0.0311, 2.651, 0.088, 7},
    {4, 1539.7661, 1552.5244, 41.5, 2.76, 73.26, 0.8863, 0.0460, 0.8971, 0.0442, 2.537, 0.125, 4},
    {5, 1538.1860, 1554.1340, 49.3, 3.28, 58.56, 0.9271, 0.0335, 0.9381, 0.0312, 2.653, 0.088, 7},
    {6, 1536.6092, 1555.7471, 40.6, 2.71, 49.08, 0.9207, 0.0353, 0.9312, 0.0332, 2.634, 0.094, 7},
    {7, 1535.0356, 1557.3634, 43.1, 2.88, 67.45, 0.8946, 0.0373, 0.9098, 0.0350, 2.573, 0.099, 6},
    {8, 1533.4653, 1558.9831, 29.3, 1.95, 35.58, 0.9640, 0.0232, 0.9765, 0.0189, 2.762, 0.053, 14},
    {9, 1531.8981, 1560.6062, 11.9, 0.79, 84.06, 0.9109, 0.0466, 0.9239, 0.0435, 2.613, 0.123, 5},
    {10, 1530.3341, 1562.2327, 10.7, 0.72, 68.95, 0.8855, 0.0454, 0.8962, 0.0436, 2.535, 0.123, 4},
    {11, 1528.7734, 1563.8626, 8.8, 0.59, 86.36, 0.8500, 0.0549, 0.8623, 0.0531, 2.439, 0.150, 3},
};

inline constexpr double kMeanBrightness = 2.64;
inline constexpr double kMeanCoherencePs = 67.5;
inline constexpr double kMeanVisibilityNet = 0.931;
inline constexpr double kChannelBandwidthPm = 15.0;

// Fringe extremum counts consistent with a two-point visibility estimate:
// V = (M - m)/(M + m) and sigma_V = 2 sqrt(Mm/(M+m)^3) invert to
// M + m = (1 - V^2)/sigma_V^2.
struct TwoPointCounts {
    double cc_max, cc_min;
};

inline TwoPointCounts two_point_counts(double v, double sigma_v) {
    const double total = (1.0 - v * v) / (sigma_v * sigma_v);
    return {0.5 * total * (1.0 + v), 0.5 * total * (1.0 - v)};
}

// ------------------------------------------------------------ subprocesses

struct CommandResult {
    int status = -1;       // exit code, or -1 when the child did not exit cleanly
    std::string output;    // stdout and stderr interleaved
};

inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* p = popen((cmd + " 2>&1").c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
    const int wait_status = pclose(p);
    if (WIFEXITED(wait_status)) r.status = WEXITSTATUS(wait_status);
    return r;
}

}  // namespace testutil

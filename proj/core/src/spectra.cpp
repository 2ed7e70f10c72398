#include "qcomb/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "qcomb/io.hpp"
#include "qcomb/units.hpp"

namespace qcomb::spectra {

TransmissionSpectrum TransmissionSpectrum::from_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(path, {"wavelength_nm", "transmission_dB"});
    TransmissionSpectrum s;
    s.wavelength_nm.reserve(table.rows.size());
    s.transmission_db.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        std::size_t line = table.row_lines[i];
        if (row.size() != 2)
            throw FormatError(path.string(), line, "expected 2 fields");
        s.wavelength_nm.push_back(io::parse_double(row[0], path.string(), line, "wavelength_nm"));
        s.transmission_db.push_back(io::parse_double(row[1], path.string(), line, "transmission_dB"));
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(path.string(), 0, e.what());
    }
    return s;
}

void TransmissionSpectrum::to_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << "wavelength_nm,transmission_dB\n";
    for (std::size_t i = 0; i < wavelength_nm.size(); ++i)
        out << io::format_double(wavelength_nm[i]) << ','
            << io::format_double(transmission_db[i]) << '\n';
}

void TransmissionSpectrum::validate() const {
    if (wavelength_nm.size() != transmission_db.size())
        throw std::invalid_argument("spectrum: column length mismatch");
    if (wavelength_nm.size() < 2)
        throw std::invalid_argument("spectrum: needs at least 2 samples");
    for (std::size_t i = 1; i < wavelength_nm.size(); ++i)
        if (!(wavelength_nm[i] > wavelength_nm[i - 1]))
            throw std::invalid_argument("spectrum: wavelengths must be strictly increasing");
    for (double t : transmission_db)
        if (t > 0.5)  // small positive excursions are measurement noise; 0.5 dB is not
            throw std::invalid_argument("spectrum: transmission above 0 dB");
}

double loaded_q(double q_intrinsic, double q_external) {
    if (!(q_intrinsic > 0.0) || !(q_external > 0.0))
        throw std::domain_error("Q factors must be positive");
    return 1.0 / (1.0 / q_intrinsic + 1.0 / q_external);
}

QSplit split_loaded_q(double q_loaded, double t_min, Coupling coupling) {
    if (!(q_loaded > 0.0))
        throw std::domain_error("Q_loaded must be positive");
    if (!(t_min >= 0.0) || t_min >= 1.0)
        throw std::domain_error("T_min must be in [0, 1)");
    double r = std::sqrt(t_min);
    // sqrt(T_min) = (Q_i - Q_e)/(Q_i + Q_e) over-coupled, negated under-coupled;
    // with 1/Q_L = 1/Q_i + 1/Q_e this inverts to the pair below.
    QSplit s{};
    if (coupling == Coupling::over) {
        s.q_external = q_loaded * 2.0 / (1.0 + r);
        s.q_intrinsic = q_loaded * 2.0 / (1.0 - r);
    } else {
        s.q_intrinsic = q_loaded * 2.0 / (1.0 + r);
        s.q_external = q_loaded * 2.0 / (1.0 - r);
    }
    return s;
}

std::vector<ResonanceWindow> find_resonances(const TransmissionSpectrum& spectrum,
                                             double min_depth_db) {
    spectrum.validate();
    const auto& wl = spectrum.wavelength_nm;
    const std::size_t n = wl.size();
    std::vector<double> lin(n);
    for (std::size_t i = 0; i < n; ++i)
        lin[i] = std::pow(10.0, spectrum.transmission_db[i] / 10.0);

    const double t_thresh = std::pow(10.0, -min_depth_db / 10.0);

    // Local minima below threshold; runs of equal values count once.
    std::vector<std::size_t> minima;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (lin[i] > t_thresh) continue;
        if (lin[i] <= lin[i - 1] && lin[i] < lin[i + 1])
            minima.push_back(i);
    }
    if (minima.empty())
        throw NoResonancesFound("no dip deeper than threshold");

    std::vector<ResonanceWindow> windows;
    for (std::size_t k = 0; k < minima.size(); ++k) {
        std::size_t c = minima[k];
        double t_min = lin[c];
        double half = (1.0 + t_min) / 2.0;

        // Half-depth crossings give the FWHM estimate and anchor the window.
        std::size_t left = c;
        while (left > 0 && lin[left] < half) --left;
        std::size_t right = c;
        while (right + 1 < n && lin[right] < half) ++right;
        if (left == c || right == c) continue;  // dip too narrow to resolve

        double fwhm_nm = wl[right] - wl[left];
        // Window spans several linewidths but never crosses the midpoint to
        // a neighboring detected dip.
        double lo = wl[c] - 6.0 * fwhm_nm;
        double hi = wl[c] + 6.0 * fwhm_nm;
        if (k > 0) lo = std::max(lo, (wl[minima[k - 1]] + wl[c]) / 2.0);
        if (k + 1 < minima.size()) hi = std::min(hi, (wl[c] + wl[minima[k + 1]]) / 2.0);

        ResonanceWindow w;
        for (std::size_t i = 0; i < n; ++i) {
            if (wl[i] < lo || wl[i] > hi) continue;
            w.wavelength_nm.push_back(wl[i]);
            w.transmission_linear.push_back(lin[i]);
        }
        if (w.wavelength_nm.size() < 7) continue;
        w.lambda_center_est = wl[c];
        w.fwhm_est_pm = fwhm_nm * 1e3;
        w.t_min_est = t_min;
        w.depth_db_est = -10.0 * std::log10(std::max(t_min, 1e-12));
        windows.push_back(std::move(w));
    }
    if (windows.empty())
        throw NoResonancesFound("dips detected but none resolvable");
    return windows;
}

Resonance fit_lorentzian(const ResonanceWindow& window, std::optional<Coupling> coupling) {
    const std::size_t n = window.wavelength_nm.size();
    if (n < 7)
        throw std::invalid_argument("fit_lorentzian: window too small");

    // Edge average seeds the baseline parameter. Fixing the baseline to it
    // would bias the width: at the window edge the dip still depresses the
    // signal by ~d/(1+(12)^2), so the baseline must float in the fit.
    std::size_t edge = std::max<std::size_t>(1, n / 7);
    double baseline0 = 0.0;
    for (std::size_t i = 0; i < edge; ++i)
        baseline0 += window.transmission_linear[i] + window.transmission_linear[n - 1 - i];
    baseline0 /= static_cast<double>(2 * edge);
    if (!(baseline0 > 0.0))
        throw std::invalid_argument("fit_lorentzian: nonpositive baseline");

    fit::FitProblem problem;
    problem.x = window.wavelength_nm;
    problem.y = window.transmission_linear;

    // params: [lambda0_nm, fwhm_nm, depth d, baseline b],
    // T = b (1 - d / (1 + (2 dl/w)^2))
    problem.model = [](std::span<const double> p, std::span<const double> x) {
        std::vector<double> out(x.size());
        double l0 = p[0], w = p[1], d = p[2], b = p[3];
        for (std::size_t i = 0; i < x.size(); ++i) {
            double u = 2.0 * (x[i] - l0) / w;
            out[i] = b * (1.0 - d / (1.0 + u * u));
        }
        return out;
    };
    problem.initial_params = {window.lambda_center_est, window.fwhm_est_pm * 1e-3,
                              1.0 - window.t_min_est, baseline0};

    fit::FitResult res = fit::fit_nlls(problem);
    if (!res.converged)
        throw FitDiverged("lorentzian fit did not converge");
    double lambda0 = res.params[0];
    double fwhm_nm = std::abs(res.params[1]);
    double depth = res.params[2];
    double baseline = res.params[3];
    if (!(fwhm_nm > 0.0) || depth <= 0.0 || depth >= 1.0 || !(baseline > 0.0))
        throw FitDiverged("lorentzian fit left the physical domain");

    double t_min = 1.0 - depth;
    Coupling cpl;
    if (coupling.has_value()) {
        cpl = *coupling;
    } else if (t_min <= 0.02) {
        // Dip essentially at the floor: Q_i and Q_e are within 33% of each
        // other whichever side is true, so assume critical and carry on.
        cpl = Coupling::over;
    } else {
        throw AmbiguousCoupling("coupling regime required for shallow dip");
    }

    Resonance r;
    r.lambda0_nm = lambda0;
    r.fwhm_pm = fwhm_nm * 1e3;
    r.extinction_db = -10.0 * std::log10(t_min > 0.0 ? t_min : 1e-12);
    r.q_loaded = lambda0 / fwhm_nm;
    QSplit split = split_loaded_q(r.q_loaded, t_min, cpl);
    r.q_intrinsic = split.q_intrinsic;
    r.q_external = split.q_external;
    return r;
}

std::vector<Resonance> analyze_spectrum(const TransmissionSpectrum& spectrum,
                                        double min_depth_db,
                                        std::optional<Coupling> coupling) {
    std::vector<Resonance> out;
    for (const auto& w : find_resonances(spectrum, min_depth_db))
        out.push_back(fit_lorentzian(w, coupling));
    return out;
}

DispersionFit fit_dispersion(std::vector<Resonance>& resonances, std::size_t pump_index) {
    if (resonances.size() < 3)
        throw InsufficientModes("dispersion fit needs at least 3 resonances");
    if (pump_index >= resonances.size())
        throw std::out_of_range("pump_index outside resonance list");
    for (std::size_t i = 1; i < resonances.size(); ++i)
        if (!(resonances[i].lambda0_nm > resonances[i - 1].lambda0_nm))
            throw std::invalid_argument("resonances must be wavelength-ascending");

    const std::size_t n = resonances.size();
    std::vector<double> mu(n), omega(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Wavelength ascending means frequency descending; bluer modes get
        // positive mu so D1 comes out positive.
        int m = static_cast<int>(pump_index) - static_cast<int>(i);
        mu[i] = m;
        omega[i] = units::omega_from_wavelength_nm(resonances[i].lambda0_nm);
        resonances[i].mode_index_mu = m;
    }

    fit::FitResult poly = fit::fit_polynomial(mu, omega, {}, 2);

    DispersionFit d;
    d.omega0_rad_s = poly.params[0];
    d.d1_rad_s = poly.params[1];
    d.d2_rad_s = 2.0 * poly.params[2];
    d.d1_over_2pi_ghz = d.d1_rad_s / (2.0 * units::pi) * 1e-9;
    d.d2_over_2pi_mhz = d.d2_rad_s / (2.0 * units::pi) * 1e-6;
    d.mode_index.resize(n);
    d.dint_rad_s.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.mode_index[i] = resonances[i].mode_index_mu;
        d.dint_rad_s[i] = omega[i] - d.omega0_rad_s - d.d1_rad_s * mu[i];
    }
    d.fit = std::move(poly);
    return d;
}

double gvd_beta2_s2_per_m(double d2_rad_s, double d1_rad_s, double n_group) {
    if (!(d1_rad_s > 0.0))
        throw std::domain_error("D1 must be positive");
    if (!(n_group > 0.0))
        throw std::domain_error("n_group must be positive");
    return -n_group * d2_rad_s / (units::c_m_per_s * d1_rad_s * d1_rad_s);
}

}  // namespace qcomb::spectra

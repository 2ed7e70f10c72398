#include "qcomb/counts.hpp"

#include <cmath>
#include <fstream>

#include "qcomb/io.hpp"
#include "qcomb/units.hpp"

namespace qcomb::counts {

void DetectorModel::validate() const {
    if (!(efficiency > 0.0) || efficiency > 1.0)
        throw std::invalid_argument("detector: efficiency must be in (0, 1]");
    if (!(dark_rate_hz >= 0.0) || !(dead_time_s >= 0.0) || !(jitter_sigma_ps >= 0.0))
        throw std::invalid_argument("detector: rates and durations must be non-negative");
}

double LossChain::total_db() const {
    double sum = 0.0;
    for (const auto& c : components) {
        if (!(c.loss_db >= 0.0))
            throw std::invalid_argument("loss chain: component '" + c.name + "' has negative loss");
        sum += c.loss_db;
    }
    return sum;
}

double LossChain::transmittance() const {
    return units::db_to_linear(total_db());
}

LossBudget loss_budget(const LossChain& chain) {
    if (chain.components.empty())
        throw std::invalid_argument("loss chain: empty");
    double total = chain.total_db();
    return {total, units::db_to_linear(total)};
}

void ChannelPair::validate(double pump_wavelength_nm, double fsr_ghz) const {
    if (!(eta_signal > 0.0) || eta_signal > 1.0 || !(eta_idler > 0.0) || eta_idler > 1.0)
        throw std::invalid_argument("channel pair: eta must be in (0, 1]");
    if (!(raman_signal_hz_per_mw >= 0.0) || !(raman_idler_hz_per_mw >= 0.0))
        throw std::invalid_argument("channel pair: raman rates must be non-negative");
    if (!(bandwidth_pm > 0.0))
        throw std::invalid_argument("channel pair: bandwidth must be positive");
    double fs = units::frequency_hz_from_wavelength_nm(lambda_signal_nm);
    double fi = units::frequency_hz_from_wavelength_nm(lambda_idler_nm);
    double fp = units::frequency_hz_from_wavelength_nm(pump_wavelength_nm);
    if (!(fs > fp && fi < fp) && !(fs < fp && fi > fp))
        throw std::invalid_argument("channel pair: wavelengths must straddle the pump");
    // Energy conservation: offsets mirror about the pump, slack of one FSR
    // absorbs tabulation rounding.
    if (std::abs((fs - fp) + (fi - fp)) > fsr_ghz * 1e9)
        throw std::invalid_argument("channel pair: not symmetric about the pump");
}

PowerSweep PowerSweep::from_csv(const std::filesystem::path& path, double window_s) {
    auto table = io::read_csv(
        path, {"power_mW", "singles_s_Hz", "singles_i_Hz", "cc_counts", "duration_s"});
    PowerSweep sw;
    sw.window_s = window_s;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        std::size_t line = table.row_lines[i];
        if (row.size() != 5)
            throw FormatError(path.string(), line, "expected 5 fields");
        sw.powers_mw.push_back(io::parse_double(row[0], path.string(), line, "power_mW"));
        sw.singles_s_hz.push_back(io::parse_double(row[1], path.string(), line, "singles_s_Hz"));
        sw.singles_i_hz.push_back(io::parse_double(row[2], path.string(), line, "singles_i_Hz"));
        sw.cc_counts.push_back(io::parse_double(row[3], path.string(), line, "cc_counts"));
        sw.durations_s.push_back(io::parse_double(row[4], path.string(), line, "duration_s"));
    }
    try {
        sw.validate();
    } catch (const std::invalid_argument& e) {
        // File-sourced invariant breaks are format errors.
        throw FormatError(path.string(), 0, e.what());
    }
    return sw;
}

void PowerSweep::to_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << "power_mW,singles_s_Hz,singles_i_Hz,cc_counts,duration_s\n";
    for (std::size_t i = 0; i < powers_mw.size(); ++i)
        out << io::format_double(powers_mw[i]) << ',' << io::format_double(singles_s_hz[i])
            << ',' << io::format_double(singles_i_hz[i]) << ','
            << io::format_double(cc_counts[i]) << ',' << io::format_double(durations_s[i])
            << '\n';
}

void PowerSweep::validate() const {
    const std::size_t n = powers_mw.size();
    if (singles_s_hz.size() != n || singles_i_hz.size() != n || cc_counts.size() != n ||
        durations_s.size() != n)
        throw std::invalid_argument("power sweep: column length mismatch");
    if (n == 0)
        throw std::invalid_argument("power sweep: empty");
    for (std::size_t i = 1; i < n; ++i)
        if (!(powers_mw[i] > powers_mw[i - 1]))
            throw std::invalid_argument("power sweep: powers must be strictly increasing");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(powers_mw[i] >= 0.0) || !(singles_s_hz[i] >= 0.0) || !(singles_i_hz[i] >= 0.0) ||
            !(cc_counts[i] >= 0.0) || !(durations_s[i] > 0.0))
            throw std::invalid_argument("power sweep: negative rate or nonpositive duration");
    }
    if (!(window_s > 0.0))
        throw std::invalid_argument("power sweep: window must be positive");
}

double dead_time_saturate_hz(double true_rate_hz, double dead_time_s) {
    if (!(true_rate_hz >= 0.0) || !(dead_time_s >= 0.0))
        throw std::domain_error("rates and dead time must be non-negative");
    return true_rate_hz / (1.0 + dead_time_s * true_rate_hz);
}

double correct_dead_time_hz(double measured_hz, double dead_time_s) {
    if (!(measured_hz >= 0.0) || !(dead_time_s >= 0.0))
        throw std::domain_error("rates and dead time must be non-negative");
    // Compare against 1/tau directly: the product form rounds 1.0/tau * tau
    // below one and lets the exact boundary through.
    if (dead_time_s > 0.0 && measured_hz >= 1.0 / dead_time_s)
        throw SaturationExceeded("measured rate at or beyond 1/dead_time");
    return measured_hz / (1.0 - dead_time_s * measured_hz);
}

namespace {

double true_singles_hz(const ChannelPair& pair, const DetectorModel& det,
                       double rpg_hz_per_mw2, double power_mw, Arm arm) {
    double eta = arm == Arm::signal ? pair.eta_signal : pair.eta_idler;
    double raman = arm == Arm::signal ? pair.raman_signal_hz_per_mw : pair.raman_idler_hz_per_mw;
    return eta * rpg_hz_per_mw2 * power_mw * power_mw + raman * power_mw + det.dark_rate_hz;
}

}  // namespace

double predict_singles_hz(const ChannelPair& pair, const DetectorModel& det,
                          double rpg_hz_per_mw2, double power_mw, Arm arm) {
    if (!(power_mw >= 0.0))
        throw std::domain_error("power must be non-negative");
    double n = true_singles_hz(pair, det, rpg_hz_per_mw2, power_mw, arm);
    return dead_time_saturate_hz(n, det.dead_time_s);
}

CoincidencePrediction predict_coincidences(const ChannelPair& pair, const DetectorModel& det,
                                           double rpg_hz_per_mw2, double power_mw,
                                           double window_s) {
    if (!(window_s > 0.0))
        throw std::domain_error("window must be positive");
    double sc_s = predict_singles_hz(pair, det, rpg_hz_per_mw2, power_mw, Arm::signal);
    double sc_i = predict_singles_hz(pair, det, rpg_hz_per_mw2, power_mw, Arm::idler);
    double acc = sc_s * sc_i * window_s;
    double cc = pair.eta_signal * pair.eta_idler * rpg_hz_per_mw2 * power_mw * power_mw + acc;
    double car = acc > 0.0 ? (cc - acc) / acc : 0.0;
    return {cc, acc, car};
}

RpgExtraction extract_rpg(const PowerSweep& sweep, const DetectorModel& det) {
    sweep.validate();
    det.validate();
    const std::size_t n = sweep.powers_mw.size();
    if (n < 4)
        throw std::invalid_argument("extract_rpg: needs at least 4 power points");

    std::vector<double> ns(n), ni(n), w_s(n), w_i(n), cc_net(n), w_cc(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = sweep.durations_s[i];
        double sc_s = sweep.singles_s_hz[i];
        double sc_i = sweep.singles_i_hz[i];
        ns[i] = correct_dead_time_hz(sc_s, det.dead_time_s);
        ni[i] = correct_dead_time_hz(sc_i, det.dead_time_s);
        // Poisson sigma on the counted total, mapped through the correction:
        // dN/dSC = 1/(1 - tau SC)^2.
        double dsat_s = 1.0 - det.dead_time_s * sc_s;
        double dsat_i = 1.0 - det.dead_time_s * sc_i;
        double var_ns = std::max(sc_s, 1.0 / t) / t / std::pow(dsat_s, 4);
        double var_ni = std::max(sc_i, 1.0 / t) / t / std::pow(dsat_i, 4);
        w_s[i] = 1.0 / var_ns;
        w_i[i] = 1.0 / var_ni;

        double cc_rate = sweep.cc_counts[i] / t;
        double acc = sc_s * sc_i * sweep.window_s;
        cc_net[i] = cc_rate - acc;
        double var_cc = std::max(sweep.cc_counts[i], 1.0) / (t * t);
        w_cc[i] = 1.0 / var_cc;
    }

    RpgExtraction out;
    out.fit_s = fit::fit_polynomial(sweep.powers_mw, ns, w_s, 2);
    out.fit_i = fit::fit_polynomial(sweep.powers_mw, ni, w_i, 2);
    // Accidental-subtracted coincidences carry no linear component; a free
    // linear term is nearly collinear with P^2 over a narrow sweep and
    // inflates the quadratic coefficient's variance several-fold. The
    // offset stays as the lone nuisance term so baseline garbage is still
    // caught by the curvature sign check.
    const int cc_powers[] = {0, 2};
    out.fit_cc = fit::fit_power_basis(sweep.powers_mw, cc_net, w_cc, cc_powers);

    out.r_s_hz_per_mw2 = out.fit_s.params[2];
    out.r_i_hz_per_mw2 = out.fit_i.params[2];
    out.r_cc_hz_per_mw2 = out.fit_cc.params[1];
    out.r_s_err = out.fit_s.param_error(2);
    out.r_i_err = out.fit_i.param_error(2);
    out.r_cc_err = out.fit_cc.param_error(1);

    if (out.r_s_hz_per_mw2 <= 0.0 || out.r_i_hz_per_mw2 <= 0.0 || out.r_cc_hz_per_mw2 <= 0.0)
        throw NegativeQuadraticTerm("quadratic coefficient came out non-positive");

    out.rpg_hz_per_mw2 = out.r_s_hz_per_mw2 * out.r_i_hz_per_mw2 / out.r_cc_hz_per_mw2;
    double rel2 = std::pow(out.r_s_err / out.r_s_hz_per_mw2, 2) +
                  std::pow(out.r_i_err / out.r_i_hz_per_mw2, 2) +
                  std::pow(out.r_cc_err / out.r_cc_hz_per_mw2, 2);
    out.rpg_err = out.rpg_hz_per_mw2 * std::sqrt(rel2);
    return out;
}

double brightness_ghz_per_mw2_nm(double rpg_hz_per_mw2, double bandwidth_pm) {
    if (!(bandwidth_pm > 0.0))
        throw std::domain_error("bandwidth must be positive");
    // Hz/mW^2 over pm -> GHz/(mW^2 nm) carries a net 1e-6.
    return rpg_hz_per_mw2 * 1e-6 / bandwidth_pm;
}

}  // namespace qcomb::counts

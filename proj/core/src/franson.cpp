#include "qcomb/franson.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "qcomb/io.hpp"
#include "qcomb/random.hpp"
#include "qcomb/units.hpp"

namespace qcomb::franson {

void FransonConfig::validate() const {
    if (!(path_imbalance_ns > 0.0))
        throw std::invalid_argument("franson: path imbalance must be positive");
    if (!(splitter_ratio > 0.0) || !(splitter_ratio < 1.0))
        throw std::invalid_argument("franson: splitter ratio must be in (0, 1)");
    if (!(visibility_true >= 0.0) || visibility_true > 1.0)
        throw std::invalid_argument("franson: visibility must be in [0, 1]");
}

bool FransonConfig::imbalance_exceeds_coherence(double tau_c_ps) const {
    return path_imbalance_ns * 1e3 > tau_c_ps;
}

void FringeScan::validate() const {
    const std::size_t n = phases.size();
    if (n == 0)
        throw std::invalid_argument("fringe scan: empty");
    if (cc.size() != n || acc.size() != n || singles_s.size() != n || singles_i.size() != n ||
        duration_s.size() != n)
        throw std::invalid_argument("fringe scan: column length mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!(cc[i] >= 0.0) || !(acc[i] >= 0.0) || !(singles_s[i] >= 0.0) ||
            !(singles_i[i] >= 0.0) || !(duration_s[i] > 0.0))
            throw std::invalid_argument("fringe scan: negative count or nonpositive duration");
}

FringeScan FringeScan::from_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(
        path, {"phase_rad_or_voltage", "cc", "acc", "singles_s", "singles_i", "duration_s"});
    FringeScan s;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        std::size_t line = table.row_lines[i];
        if (row.size() != 6)
            throw FormatError(path.string(), line, "expected 6 fields");
        s.phases.push_back(io::parse_double(row[0], path.string(), line, "phase_rad_or_voltage"));
        s.cc.push_back(io::parse_double(row[1], path.string(), line, "cc"));
        s.acc.push_back(io::parse_double(row[2], path.string(), line, "acc"));
        s.singles_s.push_back(io::parse_double(row[3], path.string(), line, "singles_s"));
        s.singles_i.push_back(io::parse_double(row[4], path.string(), line, "singles_i"));
        s.duration_s.push_back(io::parse_double(row[5], path.string(), line, "duration_s"));
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(path.string(), 0, e.what());
    }
    return s;
}

void FringeScan::to_csv(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path);
    if (!out) throw FormatError(path.string(), 0, "cannot open for writing");
    out << "phase_rad_or_voltage,cc,acc,singles_s,singles_i,duration_s\n";
    for (std::size_t i = 0; i < phases.size(); ++i)
        out << io::format_double(phases[i]) << ',' << io::format_double(cc[i]) << ','
            << io::format_double(acc[i]) << ',' << io::format_double(singles_s[i]) << ','
            << io::format_double(singles_i[i]) << ',' << io::format_double(duration_s[i])
            << '\n';
}

double predict_fringe(const FransonConfig& cfg, double phase_rad) {
    cfg.validate();
    return 1.0 + cfg.visibility_true * std::cos(phase_rad);
}

namespace {

Visibility fit_fringe(const std::vector<double>& phases, const std::vector<double>& y,
                      const std::vector<double>& w, const std::vector<double>& base) {
    double ymax = *std::max_element(y.begin(), y.end());
    double ymin = *std::min_element(y.begin(), y.end());
    double a0 = (ymax + ymin) / 2.0;
    double v0 = a0 > 0.0 ? (ymax - ymin) / (ymax + ymin) : 0.5;
    v0 = std::clamp(v0, 0.05, 0.95);
    double span = *std::max_element(phases.begin(), phases.end()) -
                  *std::min_element(phases.begin(), phases.end());
    if (!(span > 0.0))
        throw InsufficientPhaseCoverage("fringe fit: zero phase span");

    fit::FitProblem problem;
    problem.x = phases;
    problem.y = y;
    problem.weights = w;
    // params: [A, V, k, phi0]
    problem.model = [](std::span<const double> p, std::span<const double> x) {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = p[0] * (1.0 + p[1] * std::cos(p[2] * x[i] + p[3]));
        return out;
    };

    // The abscissa may be volts with an unknown scale; try the radians
    // reading and the one-fringe-per-span reading, keep the better fit.
    fit::FitResult best;
    bool have = false;
    for (double k0 : {1.0, 2.0 * units::pi / span}) {
        for (double phi0 : {0.0, units::pi / 2.0, units::pi}) {
            problem.initial_params = {std::max(a0, 1e-9), v0, k0, phi0};
            try {
                fit::FitResult r = fit::fit_nlls(problem);
                if (!r.converged) continue;
                if (!have || r.chi2 < best.chi2) {
                    best = std::move(r);
                    have = true;
                }
            } catch (const fit::SingularJacobian&) {
            } catch (const fit::IllConditioned&) {
            } catch (const fit::NonFiniteModel&) {
            }
        }
    }
    if (!have)
        throw fit::NonFiniteModel("fringe fit: no converging start");

    // Weights taken from the observed counts overweight downward
    // fluctuations and pull the amplitude low at few counts per point.
    // Reweighting from the model mean (plus the background that was
    // subtracted out of y but still fluctuates in the raw count) and
    // refitting walks to the Poisson maximum-likelihood solution.
    for (int round = 0; round < 3; ++round) {
        std::vector<double> mu = problem.model(best.params, problem.x);
        for (std::size_t i = 0; i < mu.size(); ++i)
            problem.weights[i] = 1.0 / std::max(mu[i] + base[i], 1.0);
        problem.initial_params = best.params;
        try {
            fit::FitResult r = fit::fit_nlls(problem);
            if (!r.converged) break;
            best = std::move(r);
        } catch (const fit::SingularJacobian&) {
            break;
        } catch (const fit::IllConditioned&) {
            break;
        } catch (const fit::NonFiniteModel&) {
            break;
        }
    }

    // (A, V, k, phi0) and (A, -V, k, phi0 + pi) describe the same curve, as
    // do (k, phi0) and (-k, -phi0); fold onto V >= 0, k >= 0 before reading
    // anything off the parameters.
    if (best.params[1] < 0.0) {
        best.params[1] = -best.params[1];
        best.params[3] += units::pi;
    }
    if (best.params[2] < 0.0) {
        best.params[2] = -best.params[2];
        best.params[3] = -best.params[3];
    }

    // The fitted frequency on a faint one-period scan scatters by several
    // percent, so demand only three quarters of a period; a half-period
    // scan fits k * span = pi and still lands well below the cut.
    if (best.params[2] * span < 0.75 * 2.0 * units::pi)
        throw InsufficientPhaseCoverage("fringe fit: scan covers less than one period");

    Visibility out;
    out.v = best.params[1];
    out.sigma = best.param_error(1);
    // With V and k folded positive, an inverted fringe is a phase offset
    // nearer to pi than to zero.
    out.flipped = std::abs(std::remainder(best.params[3], 2.0 * units::pi)) > units::pi / 2.0;
    if (out.v > 1.5)
        throw fit::NonFiniteModel("fringe fit: unphysical visibility");
    out.fit = std::move(best);
    return out;
}

}  // namespace

Visibility visibility_from_scan(const FringeScan& scan, bool subtract_background) {
    scan.validate();
    if (scan.phases.size() < 5)
        throw InsufficientPhaseCoverage("fringe fit: fewer than 5 points");
    const std::size_t n = scan.phases.size();
    std::vector<double> y(n), w(n), base(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = subtract_background ? scan.cc[i] - scan.acc[i] : scan.cc[i];
        // Starting weights from the observed window counts; fit_fringe
        // reweights from the model mean once it has one.
        w[i] = 1.0 / std::max(scan.cc[i], 1.0);
        base[i] = subtract_background ? scan.acc[i] : 0.0;
    }
    return fit_fringe(scan.phases, y, w, base);
}

Visibility visibility_two_point(double cc_max, double cc_min) {
    if (!(cc_max >= 0.0) || !(cc_min >= 0.0))
        throw std::domain_error("visibility_two_point: negative counts");
    double total = cc_max + cc_min;
    if (!(total > 0.0))
        throw ZeroTotalCounts("visibility_two_point: zero total counts");
    Visibility v;
    v.v = (cc_max - cc_min) / total;
    // sigma_CC = sqrt(CC) propagated through (M - m)/(M + m).
    v.sigma = 2.0 * std::sqrt(cc_max * cc_min / std::pow(total, 3));
    if (v.v < 0.0) {
        v.v = -v.v;
        v.flipped = true;
    }
    return v;
}

ChshResult chsh_from_visibility(double v, double sigma_v) {
    if (!(v >= 0.0) || v > 1.0)
        throw std::domain_error("chsh_from_visibility: V must be in [0, 1]");
    if (!(sigma_v >= 0.0))
        throw std::domain_error("chsh_from_visibility: sigma must be non-negative");
    const double k = 2.0 * std::sqrt(2.0);
    ChshResult r;
    r.s_max = k * v;
    r.sigma_s = k * sigma_v;
    r.n_sigma = r.sigma_s > 0.0 ? (r.s_max - 2.0) / r.sigma_s : 0.0;
    return r;
}

long n_sigma_std(double n_sigma) {
    return std::lround(n_sigma);
}

double correlation_coefficient(const std::array<std::array<double, 2>, 2>& cc_by_port) {
    double total = 0.0, signed_sum = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            double c = cc_by_port[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (!(c >= 0.0))
                throw std::domain_error("correlation_coefficient: negative count");
            total += c;
            signed_sum += (i == j ? 1.0 : -1.0) * c;
        }
    }
    if (!(total > 0.0))
        throw ZeroTotalCounts("correlation_coefficient: zero total counts");
    return signed_sum / total;
}

double chsh_s(double e_ab, double e_ab2, double e_a2b, double e_a2b2) {
    return std::abs(e_ab + e_ab2 - e_a2b + e_a2b2);
}

void EntanglementReport::validate() const {
    const double k = 2.0 * std::sqrt(2.0);
    if (std::abs(s_max - k * v_net) > 1e-9)
        throw std::logic_error("entanglement report: S_max != 2 sqrt(2) V_net");
    if (s_max_err > 0.0) {
        double n = (s_max - 2.0) / s_max_err;
        if (std::abs(n - n_sigma) > 1e-9)
            throw std::logic_error("entanglement report: n_sigma inconsistent");
    }
}

EntanglementReport make_entanglement_report(int channel_index, const Visibility& raw,
                                            const Visibility& net) {
    EntanglementReport r;
    r.channel_index = channel_index;
    r.v_raw = raw.v;
    r.v_raw_err = raw.sigma;
    r.v_net = net.v;
    r.v_net_err = net.sigma;
    ChshResult c = chsh_from_visibility(std::min(net.v, 1.0), net.sigma);
    r.s_max = c.s_max;
    r.s_max_err = c.sigma_s;
    r.n_sigma = c.n_sigma;
    r.flipped = raw.flipped || net.flipped;
    return r;
}

// --- simulation --------------------------------------------------------------

std::pair<ts::TimestampStream, ts::TimestampStream> simulate_franson_streams(
    const ScanParams& sp, double phase_rad, std::uint64_t seed) {
    sp.cfg.validate();
    sp.det.validate();
    if (!(sp.power_mw >= 0.0) || !(sp.duration_per_point_s >= 0.0) || !(sp.tau_c_ps >= 0.0))
        throw std::domain_error("simulate_franson_streams: bad physical parameter");

    std::uint64_t ph = 0xf4a2;
    ph = ts::detail::hash_mix(ph, sp.pair.eta_signal);
    ph = ts::detail::hash_mix(ph, sp.pair.eta_idler);
    ph = ts::detail::hash_mix(ph, sp.pair.raman_signal_hz_per_mw);
    ph = ts::detail::hash_mix(ph, sp.pair.raman_idler_hz_per_mw);
    ph = ts::detail::hash_mix(ph, sp.det.dark_rate_hz);
    ph = ts::detail::hash_mix(ph, sp.det.dead_time_s);
    ph = ts::detail::hash_mix(ph, sp.det.jitter_sigma_ps);
    ph = ts::detail::hash_mix(ph, sp.rpg_hz_per_mw2);
    ph = ts::detail::hash_mix(ph, sp.power_mw);
    ph = ts::detail::hash_mix(ph, sp.tau_c_ps);
    ph = ts::detail::hash_mix(ph, sp.duration_per_point_s);
    ph = ts::detail::hash_mix(ph, sp.cfg.path_imbalance_ns);
    ph = ts::detail::hash_mix(ph, sp.cfg.splitter_ratio);
    ph = ts::detail::hash_mix(ph, sp.cfg.visibility_true);
    ph = ts::detail::hash_mix(ph, phase_rad);
    ts::detail::register_seed(seed, ph);

    const double duration_s = sp.duration_per_point_s;
    const auto duration_ps = static_cast<std::uint64_t>(std::llround(duration_s * 1e12));
    const double sigma_s = sp.det.jitter_sigma_ps * 1e-12;
    const double tau_s = sp.tau_c_ps * 1e-12;
    const double dt_s = sp.cfg.path_imbalance_ns * 1e-9;

    // Per-photon short/long powers through the interferometer; the rest
    // exits the unused port.
    const double r = sp.cfg.splitter_ratio;
    const double a2 = r * r;                  // short-path power to detector
    const double b2 = (1.0 - r) * (1.0 - r);  // long-path power to detector
    const double q = a2 + b2;                 // marginal detection share
    const double vis = sp.cfg.visibility_true;

    const double p_central =
        a2 * a2 + b2 * b2 + 2.0 * a2 * b2 * vis * std::cos(phase_rad);
    const double p_side = a2 * b2;  // each of short/long and long/short
    const double p_res = q - p_central - 2.0 * p_side;  // detected alone, by algebra >= 0

    const double r_pair = sp.rpg_hz_per_mw2 * sp.power_mw * sp.power_mw;
    const double r_joint = r_pair * sp.pair.eta_signal * sp.pair.eta_idler;
    const double w_ll = b2 * b2 / (a2 * a2 + b2 * b2);  // LL share of central events
    const double w_long_single = b2 / q;

    auto poisson = [&](double rate_hz, rng::Xoshiro256pp& gen, auto&& emit) {
        if (!(rate_hz > 0.0)) return;
        const double mean_gap = 1.0 / rate_hz;
        for (double t = gen.exponential(mean_gap); t < duration_s; t += gen.exponential(mean_gap))
            emit(t, gen);
    };
    std::vector<std::uint64_t> sig, idl;
    auto push = [&](std::vector<std::uint64_t>& v, double t) {
        if (t < 0.0) return;
        auto tp = static_cast<std::uint64_t>(std::llround(t * 1e12));
        if (tp < duration_ps) v.push_back(tp);
    };

    rng::Xoshiro256pp g_c(rng::derive_seed(seed, 0));
    poisson(r_joint * p_central, g_c, [&](double t, rng::Xoshiro256pp& g) {
        double shift = g.uniform01() < w_ll ? dt_s : 0.0;  // same path for both
        push(sig, t + shift + g.normal(sigma_s));
        push(idl, t + g.laplace(tau_s) + shift + g.normal(sigma_s));
    });
    rng::Xoshiro256pp g_sl(rng::derive_seed(seed, 1));
    poisson(r_joint * p_side, g_sl, [&](double t, rng::Xoshiro256pp& g) {
        push(sig, t + g.normal(sigma_s));
        push(idl, t + g.laplace(tau_s) + dt_s + g.normal(sigma_s));
    });
    rng::Xoshiro256pp g_ls(rng::derive_seed(seed, 2));
    poisson(r_joint * p_side, g_ls, [&](double t, rng::Xoshiro256pp& g) {
        push(sig, t + dt_s + g.normal(sigma_s));
        push(idl, t + g.laplace(tau_s) + g.normal(sigma_s));
    });
    // Lone detections: partner lost either to collection (eta) or to the
    // unused interferometer port. Rates add up so each arm's total click
    // rate is eta * q * r_pair + noise, independent of phase.
    rng::Xoshiro256pp g_so(rng::derive_seed(seed, 3));
    double rate_s_only = r_joint * p_res + r_pair * sp.pair.eta_signal * (1.0 - sp.pair.eta_idler) * q;
    poisson(rate_s_only, g_so, [&](double t, rng::Xoshiro256pp& g) {
        double shift = g.uniform01() < w_long_single ? dt_s : 0.0;
        push(sig, t + shift + g.normal(sigma_s));
    });
    rng::Xoshiro256pp g_io(rng::derive_seed(seed, 4));
    double rate_i_only = r_joint * p_res + r_pair * (1.0 - sp.pair.eta_signal) * sp.pair.eta_idler * q;
    poisson(rate_i_only, g_io, [&](double t, rng::Xoshiro256pp& g) {
        double shift = g.uniform01() < w_long_single ? dt_s : 0.0;
        push(idl, t + g.laplace(tau_s) + shift + g.normal(sigma_s));
    });
    rng::Xoshiro256pp g_ns(rng::derive_seed(seed, 5));
    poisson(sp.pair.raman_signal_hz_per_mw * sp.power_mw + sp.det.dark_rate_hz, g_ns,
            [&](double t, rng::Xoshiro256pp&) { push(sig, t); });
    rng::Xoshiro256pp g_ni(rng::derive_seed(seed, 6));
    poisson(sp.pair.raman_idler_hz_per_mw * sp.power_mw + sp.det.dark_rate_hz, g_ni,
            [&](double t, rng::Xoshiro256pp&) { push(idl, t); });

    const auto dead_ps = static_cast<std::uint64_t>(std::llround(sp.det.dead_time_s * 1e12));
    auto finish = [&](std::vector<std::uint64_t>& v) {
        std::sort(v.begin(), v.end());
        if (dead_ps == 0 || v.empty()) return;
        std::size_t kept = 1;
        std::uint64_t last = v[0];
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i] >= last + dead_ps) {
                v[kept++] = v[i];
                last = v[i];
            }
        }
        v.resize(kept);
    };
    finish(sig);
    finish(idl);

    ts::TimestampStream a{0, std::move(sig), duration_ps, seed};
    ts::TimestampStream b{1, std::move(idl), duration_ps, seed};
    return {std::move(a), std::move(b)};
}

FringeScan simulate_franson_scan(const ScanParams& sp, std::uint64_t seed) {
    if (sp.phases_rad.empty())
        throw std::invalid_argument("simulate_franson_scan: no phase points");

    FringeScan scan;
    const double exclude_ps = sp.cfg.path_imbalance_ns * 1e3;
    for (std::size_t p = 0; p < sp.phases_rad.size(); ++p) {
        double phase = sp.phases_rad[p];
        auto [s, i] = simulate_franson_streams(
            sp, phase, rng::derive_seed(seed, 0x9000 + p));
        ts::CoincidenceResult cr;
        if (s.times_ps.empty() || i.times_ps.empty()) {
            cr = ts::CoincidenceResult{};
        } else {
            cr = ts::count_coincidences(s, i, sp.window_ps, 0.0, exclude_ps);
        }
        scan.phases.push_back(phase);
        scan.cc.push_back(static_cast<double>(cr.cc));
        scan.acc.push_back(cr.acc);
        scan.singles_s.push_back(static_cast<double>(s.times_ps.size()));
        scan.singles_i.push_back(static_cast<double>(i.times_ps.size()));
        scan.duration_s.push_back(sp.duration_per_point_s);
    }
    return scan;
}

}  // namespace qcomb::franson

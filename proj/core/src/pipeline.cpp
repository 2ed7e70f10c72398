#include "qcomb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

#include "qcomb/config.hpp"
#include "qcomb/io.hpp"
#include "qcomb/random.hpp"
#include "qcomb/timestamps.hpp"
#include "qcomb/units.hpp"

namespace qcomb::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Per-channel seed tree: one branch per channel index, then one leaf per
// simulation stage, so adding a stage never reshuffles existing draws.
constexpr std::uint64_t kChannelBranch = 1000;
constexpr std::uint64_t kLeafSweep = 1;
constexpr std::uint64_t kLeafStreams = 2;
constexpr std::uint64_t kLeafFringe = 3;

std::vector<double> fringe_phases(std::size_t n) {
    std::vector<double> phases(n);
    for (std::size_t j = 0; j < n; ++j)
        phases[j] = 2.0 * units::pi * static_cast<double>(j) /
                    static_cast<double>(n - 1);
    return phases;
}

void check_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string(what) + " must be positive");
}

void check_nonnegative(double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string(what) + " must be >= 0");
}

}  // namespace

void ExperimentConfig::validate() const {
    ring.validate();
    det_signal.validate();
    det_idler.validate();
    counts::loss_budget(losses_signal);
    counts::loss_budget(losses_idler);
    franson.validate();
    check_positive(pump_laser_nm, "pump wavelength");

    if (power_sweep_mw.size() < 4)
        throw std::invalid_argument("power sweep needs at least 4 points");
    for (std::size_t i = 0; i < power_sweep_mw.size(); ++i) {
        check_positive(power_sweep_mw[i], "sweep power");
        if (i && power_sweep_mw[i] <= power_sweep_mw[i - 1])
            throw std::invalid_argument("sweep powers must increase");
    }

    check_positive(grid.spacing_ghz, "grid spacing");
    check_positive(grid.tolerance_ghz, "grid tolerance");

    check_nonnegative(sim.sweep_duration_s, "sweep duration");
    check_nonnegative(sim.stream_duration_s, "stream duration");
    check_nonnegative(sim.fringe_duration_per_point_s, "fringe point duration");
    check_positive(sim.stream_power_mw, "stream power");
    check_positive(sim.fringe_power_mw, "fringe power");
    check_positive(sim.cc_window_ns, "coincidence window");
    check_positive(sim.car_window_ns, "CAR window");
    check_positive(sim.franson_window_ns, "fringe coincidence window");
    if (sim.fringe_points < 5)
        throw std::invalid_argument("fringe scan needs at least 5 phase points");
    check_positive(sim.histogram_bin_ps, "histogram bin");
    check_positive(sim.histogram_span_ns, "histogram span");
    auto bin_ps = static_cast<std::int64_t>(std::llround(sim.histogram_bin_ps));
    auto span_ps = static_cast<std::int64_t>(std::llround(sim.histogram_span_ns * 1000.0));
    if (bin_ps <= 0 || span_ps % bin_ps != 0)
        throw std::invalid_argument("histogram bin must divide the span");

    if (channels.empty()) throw std::invalid_argument("no channels configured");

    const double f_pump = units::frequency_hz_from_wavelength_nm(pump_laser_nm);
    const double spacing_hz = grid.spacing_ghz * 1e9;
    const double tol_hz = grid.tolerance_ghz * 1e9;
    std::vector<long> seen_steps;
    std::vector<int> seen_indices;
    for (const auto& ch : channels) {
        if (ch.index < 1)
            throw std::invalid_argument("channel index must be >= 1");
        if (std::count(seen_indices.begin(), seen_indices.end(), ch.index))
            throw std::invalid_argument("duplicate channel index " +
                                        std::to_string(ch.index));
        seen_indices.push_back(ch.index);

        ch.pair.validate(pump_laser_nm, ring.fsr_hz() * 1e-9);
        check_positive(ch.rpg_true_hz_per_mw2, "channel pair rate");
        check_positive(ch.tau_c_true_ps, "channel coherence time");
        if (!(ch.visibility_true > 0.0) || ch.visibility_true > 1.0)
            throw std::invalid_argument("channel visibility must be in (0, 1]");
        if (!franson.imbalance_exceeds_coherence(ch.tau_c_true_ps))
            throw std::invalid_argument(
                "path imbalance too small for channel coherence time");

        // Both members must sit the same number of grid steps from the
        // pump, on opposite sides.
        const double off_s =
            units::frequency_hz_from_wavelength_nm(ch.pair.lambda_signal_nm) - f_pump;
        const double off_i =
            f_pump - units::frequency_hz_from_wavelength_nm(ch.pair.lambda_idler_nm);
        const long k = std::lround(off_s / spacing_hz);
        if (k < 1 || std::abs(off_s - static_cast<double>(k) * spacing_hz) > tol_hz ||
            std::abs(off_i - static_cast<double>(k) * spacing_hz) > tol_hz)
            throw std::invalid_argument("channel " + std::to_string(ch.index) +
                                        " is off the frequency grid");
        if (std::count(seen_steps.begin(), seen_steps.end(), k))
            throw std::invalid_argument("two channels share grid step " +
                                        std::to_string(k));
        seen_steps.push_back(k);
    }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    using config::ConfigFile;
    ConfigFile f = ConfigFile::load(path);
    ExperimentConfig cfg;

    const auto& ring = f.require("ring");
    cfg.ring = resonator::ring_from_fsr(
        f.get_double(ring, "radius_um"), f.get_double(ring, "fsr_ghz"),
        f.get_double(ring, "gamma_per_w_m"), f.get_double(ring, "pump_resonance_nm"),
        2.0 * units::pi * f.get_double(ring, "d2_over_2pi_mhz") * 1e6,
        f.get_double(ring, "q_loaded"), f.get_double(ring, "q_external"));

    const auto& pump = f.require("pump");
    cfg.pump_laser_nm = f.get_double(pump, "wavelength_nm");
    cfg.power_sweep_mw = f.get_double_list(pump, "power_sweep_mw");

    if (const auto* grid = f.find("grid")) {
        cfg.grid.spacing_ghz = f.get_double_or(*grid, "spacing_ghz", cfg.grid.spacing_ghz);
        cfg.grid.tolerance_ghz =
            f.get_double_or(*grid, "tolerance_ghz", cfg.grid.tolerance_ghz);
    }

    auto load_det = [&](const std::string& name) {
        const auto& s = f.require(name);
        counts::DetectorModel det;
        det.efficiency = f.get_double(s, "efficiency");
        det.dark_rate_hz = f.get_double(s, "dark_rate_hz");
        det.dead_time_s = f.get_double(s, "dead_time_us") * 1e-6;
        det.jitter_sigma_ps = f.get_double(s, "jitter_sigma_ps");
        return det;
    };
    cfg.det_signal = load_det("detector.signal");
    cfg.det_idler = load_det("detector.idler");

    auto load_losses = [&](const std::string& name) {
        const auto& s = f.require(name);
        counts::LossChain chain;
        for (const auto& [key, value] : s.entries) {
            if (key.size() < 4 || key.substr(key.size() - 3) != "_db")
                throw FormatError(f.path(), s.line,
                                  "loss keys must end in _db, got " + key);
            chain.components.push_back(
                {key.substr(0, key.size() - 3), f.get_double(s, key)});
            (void)value;
        }
        return chain;
    };
    cfg.losses_signal = load_losses("losses.signal");
    cfg.losses_idler = load_losses("losses.idler");

    const auto& fr = f.require("franson");
    cfg.franson.path_imbalance_ns = f.get_double(fr, "path_imbalance_ns");
    cfg.franson.splitter_ratio =
        f.get_double_or(fr, "splitter_ratio", cfg.franson.splitter_ratio);

    const auto& sim = f.require("simulation");
    cfg.sim.seed = f.get_u64_or(sim, "seed", cfg.sim.seed);
    cfg.sim.sweep_duration_s = f.get_double(sim, "sweep_duration_s");
    cfg.sim.stream_power_mw = f.get_double(sim, "stream_power_mw");
    cfg.sim.stream_duration_s = f.get_double(sim, "stream_duration_s");
    cfg.sim.fringe_points = f.get_u64_or(sim, "fringe_points", cfg.sim.fringe_points);
    cfg.sim.fringe_duration_per_point_s = f.get_double(sim, "fringe_duration_per_point_s");
    cfg.sim.fringe_power_mw =
        f.get_double_or(sim, "fringe_power_mw", cfg.sim.stream_power_mw);
    cfg.sim.cc_window_ns = f.get_double_or(sim, "cc_window_ns", cfg.sim.cc_window_ns);
    cfg.sim.car_window_ns = f.get_double_or(sim, "car_window_ns", cfg.sim.car_window_ns);
    cfg.sim.histogram_bin_ps =
        f.get_double_or(sim, "histogram_bin_ps", cfg.sim.histogram_bin_ps);
    cfg.sim.histogram_span_ns =
        f.get_double_or(sim, "histogram_span_ns", cfg.sim.histogram_span_ns);
    cfg.sim.franson_window_ns =
        f.get_double_or(sim, "franson_window_ns", cfg.sim.franson_window_ns);

    const double eta_s = cfg.losses_signal.transmittance();
    const double eta_i = cfg.losses_idler.transmittance();
    for (const auto* sec : f.with_prefix("channel.")) {
        ChannelConfig ch;
        ch.index = static_cast<int>(
            io::parse_u64(sec->name.substr(8), f.path(), sec->line, "channel index"));
        ch.pair.lambda_signal_nm = f.get_double(*sec, "lambda_signal_nm");
        ch.pair.lambda_idler_nm = f.get_double(*sec, "lambda_idler_nm");
        ch.pair.eta_signal = eta_s;
        ch.pair.eta_idler = eta_i;
        ch.pair.raman_signal_hz_per_mw =
            f.get_double_or(*sec, "raman_signal_hz_per_mw", 0.0);
        ch.pair.raman_idler_hz_per_mw =
            f.get_double_or(*sec, "raman_idler_hz_per_mw", 0.0);
        ch.pair.bandwidth_pm = f.get_double_or(*sec, "bandwidth_pm", 15.0);
        ch.rpg_true_hz_per_mw2 = f.get_double(*sec, "pair_rate_mhz_per_mw2") * 1e6;
        ch.tau_c_true_ps = f.get_double(*sec, "coherence_time_ps");
        ch.visibility_true = f.get_double(*sec, "visibility");
        cfg.channels.push_back(std::move(ch));
    }
    std::sort(cfg.channels.begin(), cfg.channels.end(),
              [](const ChannelConfig& a, const ChannelConfig& b) {
                  return a.index < b.index;
              });

    cfg.validate();
    return cfg;
}

fs::path channel_dir(const fs::path& root, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "channel_%02d", index);
    return root / buf;
}

namespace {

void simulate_sweep(const ExperimentConfig& cfg, const ChannelConfig& ch,
                    std::uint64_t seed, const fs::path& out) {
    counts::PowerSweep sweep;
    sweep.window_s = cfg.sim.cc_window_ns * 1e-9;
    rng::Xoshiro256pp gen(seed);
    const double t = cfg.sim.sweep_duration_s;
    for (double p : cfg.power_sweep_mw) {
        const double sc_s = counts::predict_singles_hz(
            ch.pair, cfg.det_signal, ch.rpg_true_hz_per_mw2, p, counts::Arm::signal);
        const double sc_i = counts::predict_singles_hz(
            ch.pair, cfg.det_idler, ch.rpg_true_hz_per_mw2, p, counts::Arm::idler);
        const double cc_hz = ch.pair.eta_signal * ch.pair.eta_idler *
                                 ch.rpg_true_hz_per_mw2 * p * p +
                             sc_s * sc_i * sweep.window_s;
        const auto n_s = gen.poisson(sc_s * t);
        const auto n_i = gen.poisson(sc_i * t);
        const auto n_cc = gen.poisson(cc_hz * t);
        sweep.powers_mw.push_back(p);
        sweep.singles_s_hz.push_back(t > 0.0 ? static_cast<double>(n_s) / t : 0.0);
        sweep.singles_i_hz.push_back(t > 0.0 ? static_cast<double>(n_i) / t : 0.0);
        sweep.cc_counts.push_back(static_cast<double>(n_cc));
        sweep.durations_s.push_back(t);
    }
    sweep.to_csv(out / "sweep.csv");
}

void simulate_streams(const ExperimentConfig& cfg, const ChannelConfig& ch,
                      std::uint64_t seed, const fs::path& out) {
    auto [sig, idl] = ts::simulate_pair_streams(
        ch.pair, cfg.det_signal, ch.rpg_true_hz_per_mw2, cfg.sim.stream_power_mw,
        ch.tau_c_true_ps, cfg.sim.stream_duration_s, seed);
    sig.write_qts(out / "signal.qts");
    idl.write_qts(out / "idler.qts");
    // Derived view for eyeballing; the analysis rebuilds it from the streams.
    auto hist = ts::build_histogram(sig, idl, cfg.sim.histogram_bin_ps,
                                    cfg.sim.histogram_span_ns * 1000.0);
    hist.to_csv(out / "histogram.csv");
}

void simulate_fringe(const ExperimentConfig& cfg, const ChannelConfig& ch,
                     std::uint64_t seed, const fs::path& out) {
    franson::ScanParams sp;
    sp.cfg = cfg.franson;
    sp.cfg.visibility_true = ch.visibility_true;
    sp.pair = ch.pair;
    sp.det = cfg.det_signal;
    sp.rpg_hz_per_mw2 = ch.rpg_true_hz_per_mw2;
    sp.power_mw = cfg.sim.fringe_power_mw;
    sp.tau_c_ps = ch.tau_c_true_ps;
    sp.phases_rad = fringe_phases(cfg.sim.fringe_points);
    sp.duration_per_point_s = cfg.sim.fringe_duration_per_point_s;
    sp.window_ps = cfg.sim.franson_window_ns * 1000.0;
    auto scan = franson::simulate_franson_scan(sp, seed);
    scan.to_csv(out / "fringe.csv");
}

double mean_of_finite(const std::vector<ChannelResult>& rows,
                      double ChannelResult::* field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (std::isfinite(r.*field)) {
            sum += r.*field;
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : unset;
}

void set_num(json& j, const char* key, double v) {
    if (std::isfinite(v))
        j[key] = v;
    else
        j[key] = nullptr;
}

std::string csv_cell(double v) { return std::isfinite(v) ? io::format_double(v) : ""; }

}  // namespace

ExperimentReport run_analysis(const fs::path& data_dir, const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport rep;
    rep.seed = cfg.sim.seed;
    const double sigma_jitter_ps =
        std::hypot(cfg.det_signal.jitter_sigma_ps, cfg.det_idler.jitter_sigma_ps);

    for (const auto& ch : cfg.channels) {
        ChannelResult row;
        row.index = ch.index;
        row.lambda_signal_nm = ch.pair.lambda_signal_nm;
        row.lambda_idler_nm = ch.pair.lambda_idler_nm;
        const fs::path dir = channel_dir(data_dir, ch.index);

        try {
            auto sweep = counts::PowerSweep::from_csv(dir / "sweep.csv",
                                                      cfg.sim.cc_window_ns * 1e-9);
            auto ex = counts::extract_rpg(sweep, cfg.det_signal);
            row.rpg_hz_per_mw2 = ex.rpg_hz_per_mw2;
            row.rpg_err_hz_per_mw2 = ex.rpg_err;
            row.brightness_ghz_per_mw2_nm =
                counts::brightness_ghz_per_mw2_nm(ex.rpg_hz_per_mw2, ch.pair.bandwidth_pm);
        } catch (const std::exception& e) {
            row.errors.push_back(std::string("sweep: ") + e.what());
        }

        try {
            auto sig = ts::TimestampStream::read_file(dir / "signal.qts");
            auto idl = ts::TimestampStream::read_file(dir / "idler.qts");
            try {
                auto cr = ts::count_coincidences(sig, idl,
                                                 cfg.sim.car_window_ns * 1000.0, 0.0);
                row.car = cr.car;
            } catch (const std::exception& e) {
                row.errors.push_back(std::string("coincidences: ") + e.what());
            }
            try {
                auto hist = ts::build_histogram(sig, idl, cfg.sim.histogram_bin_ps,
                                                cfg.sim.histogram_span_ns * 1000.0);
                auto cf = ts::fit_coherence_time(hist, sigma_jitter_ps);
                row.tau_c_ps = cf.tau_c_ps;
                row.tau_c_err_ps = cf.tau_c_err_ps;
            } catch (const std::exception& e) {
                row.errors.push_back(std::string("coherence: ") + e.what());
            }
        } catch (const std::exception& e) {
            row.errors.push_back(std::string("streams: ") + e.what());
        }

        try {
            auto scan = franson::FringeScan::from_csv(dir / "fringe.csv");
            auto raw = franson::visibility_from_scan(scan, false);
            auto net = franson::visibility_from_scan(scan, true);
            auto er = franson::make_entanglement_report(ch.index, raw, net);
            row.v_raw = er.v_raw;
            row.v_raw_err = er.v_raw_err;
            row.v_net = er.v_net;
            row.v_net_err = er.v_net_err;
            row.s_max = er.s_max;
            row.s_max_err = er.s_max_err;
            row.n_sigma = std::round(er.n_sigma * 10.0) / 10.0;
            row.fringe_flipped = er.flipped;
        } catch (const std::exception& e) {
            row.errors.push_back(std::string("fringe: ") + e.what());
        }

        rep.channels.push_back(std::move(row));
    }

    rep.aggregates.mean_brightness_ghz_per_mw2_nm =
        mean_of_finite(rep.channels, &ChannelResult::brightness_ghz_per_mw2_nm);
    rep.aggregates.mean_visibility_net =
        mean_of_finite(rep.channels, &ChannelResult::v_net);
    rep.aggregates.mean_coherence_time_ps =
        mean_of_finite(rep.channels, &ChannelResult::tau_c_ps);
    return rep;
}

ExperimentReport run_forward(const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);

    // Channels are independent: disjoint output directories and a private
    // seed branch each, so parallel execution cannot change any byte of
    // the output. Error lists are joined back in channel order.
    auto simulate_channel = [&cfg, &out_dir](const ChannelConfig& ch) {
        std::vector<std::string> errors;
        const fs::path dir = channel_dir(out_dir, ch.index);
        fs::create_directories(dir);
        const std::uint64_t chan_seed = rng::derive_seed(
            cfg.sim.seed, kChannelBranch + static_cast<std::uint64_t>(ch.index));
        auto guard = [&errors](const char* stage, auto&& fn) {
            try {
                fn();
            } catch (const std::exception& e) {
                errors.push_back(std::string(stage) + ": " + e.what());
            }
        };
        guard("simulate sweep", [&] {
            simulate_sweep(cfg, ch, rng::derive_seed(chan_seed, kLeafSweep), dir);
        });
        guard("simulate streams", [&] {
            simulate_streams(cfg, ch, rng::derive_seed(chan_seed, kLeafStreams), dir);
        });
        guard("simulate fringe", [&] {
            simulate_fringe(cfg, ch, rng::derive_seed(chan_seed, kLeafFringe), dir);
        });
        return errors;
    };

    std::map<int, std::vector<std::string>> forward_errors;
    std::vector<std::future<std::vector<std::string>>> tasks;
    tasks.reserve(cfg.channels.size());
    for (const auto& ch : cfg.channels)
        tasks.push_back(std::async(std::launch::async, simulate_channel, std::cref(ch)));
    for (std::size_t i = 0; i < cfg.channels.size(); ++i)
        forward_errors[cfg.channels[i].index] = tasks[i].get();

    ExperimentReport rep = run_analysis(out_dir, cfg);
    for (auto& row : rep.channels) {
        auto it = forward_errors.find(row.index);
        if (it != forward_errors.end())
            row.errors.insert(row.errors.begin(), it->second.begin(), it->second.end());
    }

    std::ofstream js(out_dir / "report.json", std::ios::binary);
    js << rep.to_json();
    std::ofstream cs(out_dir / "report.csv", std::ios::binary);
    cs << rep.to_csv();
    return rep;
}

std::string ExperimentReport::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["n_channels"] = channels.size();
    j["channels"] = json::array();
    for (const auto& r : channels) {
        json c;
        c["index"] = r.index;
        set_num(c, "lambda_signal_nm", r.lambda_signal_nm);
        set_num(c, "lambda_idler_nm", r.lambda_idler_nm);
        set_num(c, "coherence_time_ps", r.tau_c_ps);
        set_num(c, "coherence_time_err_ps", r.tau_c_err_ps);
        set_num(c, "pair_rate_hz_per_mw2", r.rpg_hz_per_mw2);
        set_num(c, "pair_rate_err_hz_per_mw2", r.rpg_err_hz_per_mw2);
        set_num(c, "brightness_ghz_per_mw2_nm", r.brightness_ghz_per_mw2_nm);
        set_num(c, "car", r.car);
        set_num(c, "visibility_raw", r.v_raw);
        set_num(c, "visibility_raw_err", r.v_raw_err);
        set_num(c, "visibility_net", r.v_net);
        set_num(c, "visibility_net_err", r.v_net_err);
        set_num(c, "chsh_s_max", r.s_max);
        set_num(c, "chsh_s_max_err", r.s_max_err);
        set_num(c, "chsh_n_sigma", r.n_sigma);
        c["fringe_flipped"] = r.fringe_flipped;
        c["errors"] = r.errors;
        j["channels"].push_back(std::move(c));
    }
    json a;
    set_num(a, "mean_brightness_ghz_per_mw2_nm",
            aggregates.mean_brightness_ghz_per_mw2_nm);
    set_num(a, "mean_visibility_net", aggregates.mean_visibility_net);
    set_num(a, "mean_coherence_time_ps", aggregates.mean_coherence_time_ps);
    j["aggregates"] = std::move(a);
    return j.dump(2) + "\n";
}

std::string ExperimentReport::to_csv() const {
    std::ostringstream out;
    out << "index,lambda_signal_nm,lambda_idler_nm,coherence_time_ps,"
           "coherence_time_err_ps,pair_rate_hz_per_mw2,pair_rate_err_hz_per_mw2,"
           "brightness_ghz_per_mw2_nm,car,visibility_raw,visibility_raw_err,"
           "visibility_net,visibility_net_err,chsh_s_max,chsh_s_max_err,"
           "chsh_n_sigma,errors\n";
    for (const auto& r : channels) {
        std::string errs;
        for (const auto& e : r.errors) {
            if (!errs.empty()) errs += "; ";
            errs += e;
        }
        std::replace(errs.begin(), errs.end(), ',', ';');
        out << r.index << ',' << csv_cell(r.lambda_signal_nm) << ','
            << csv_cell(r.lambda_idler_nm) << ',' << csv_cell(r.tau_c_ps) << ','
            << csv_cell(r.tau_c_err_ps) << ',' << csv_cell(r.rpg_hz_per_mw2) << ','
            << csv_cell(r.rpg_err_hz_per_mw2) << ','
            << csv_cell(r.brightness_ghz_per_mw2_nm) << ',' << csv_cell(r.car) << ','
            << csv_cell(r.v_raw) << ',' << csv_cell(r.v_raw_err) << ','
            << csv_cell(r.v_net) << ',' << csv_cell(r.v_net_err) << ','
            << csv_cell(r.s_max) << ',' << csv_cell(r.s_max_err) << ','
            << csv_cell(r.n_sigma) << ',' << errs << '\n';
    }
    out << "# mean_brightness_ghz_per_mw2_nm = "
        << csv_cell(aggregates.mean_brightness_ghz_per_mw2_nm) << '\n'
        << "# mean_visibility_net = " << csv_cell(aggregates.mean_visibility_net)
        << '\n'
        << "# mean_coherence_time_ps = "
        << csv_cell(aggregates.mean_coherence_time_ps) << '\n';
    return out.str();
}

}  // namespace qcomb::pipeline

// qcomb: spectra, pair-source and entanglement analysis from the command
// line. Exit codes: 0 success, 1 usage, 2 data or format error, 3 fit
// non-convergence.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcomb/counts.hpp"
#include "qcomb/fit.hpp"
#include "qcomb/franson.hpp"
#include "qcomb/io.hpp"
#include "qcomb/pipeline.hpp"
#include "qcomb/random.hpp"
#include "qcomb/spectra.hpp"
#include "qcomb/timestamps.hpp"
#include "qcomb/units.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qcomb;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string format = "json";
};

void emit(const json& j, const std::string& format,
          const std::vector<std::string>& csv_columns) {
    if (format == "json") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    // Flat tables only: an array of homogeneous objects, or one object.
    const json rows = j.is_array() ? j : json::array({j});
    for (std::size_t i = 0; i < csv_columns.size(); ++i)
        std::cout << csv_columns[i] << (i + 1 < csv_columns.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < csv_columns.size(); ++i) {
            const auto& v = row.at(csv_columns[i]);
            if (v.is_number())
                std::cout << io::format_double(v.get<double>());
            else if (!v.is_null())
                std::cout << v.dump();
            std::cout << (i + 1 < csv_columns.size() ? "," : "\n");
        }
    }
}

pipeline::ExperimentConfig load_config(const GlobalOpts& g) {
    if (g.config_path.empty())
        throw std::invalid_argument("this command needs --config <file>");
    auto cfg = pipeline::ExperimentConfig::load(g.config_path);
    if (g.seed) cfg.sim.seed = *g.seed;
    return cfg;
}

const pipeline::ChannelConfig& pick_channel(const pipeline::ExperimentConfig& cfg,
                                            int index) {
    for (const auto& ch : cfg.channels)
        if (ch.index == index) return ch;
    throw std::invalid_argument("config has no channel " + std::to_string(index));
}

fs::path out_base(const GlobalOpts& g) {
    return g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
}

json resonance_row(const spectra::Resonance& r) {
    json row;
    row["lambda0_nm"] = r.lambda0_nm;
    row["fwhm_pm"] = r.fwhm_pm;
    row["extinction_db"] = r.extinction_db;
    row["q_loaded"] = r.q_loaded;
    row["q_intrinsic"] = r.q_intrinsic;
    row["q_external"] = r.q_external;
    return row;
}

int dispatch(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const fit::SingularJacobian& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const fit::IllConditioned& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const fit::NonFiniteModel& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const spectra::FitDiverged& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const ts::FitDiverged& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const ts::JitterDominates& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const counts::NegativeQuadraticTerm& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Microring pair-source simulation and analysis toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config file")
        ->envname("QCOMB_CONFIG");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out_dir, "output directory for artifacts");
    app.add_option("--format", g.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));

    // spectrum analyze
    auto* spectrum = app.add_subcommand("spectrum", "transmission spectrum tools");
    auto* spec_analyze =
        spectrum->add_subcommand("analyze", "find and fit every resonance dip");
    std::string spec_file;
    double min_depth_db = 3.0;
    std::string coupling_str = "auto";
    spec_analyze->add_option("spectrum", spec_file, "wavelength/transmission CSV")
        ->required();
    spec_analyze->add_option("--min-depth-db", min_depth_db,
                             "ignore dips shallower than this");
    spec_analyze->add_option("--coupling", coupling_str, "Q-split regime")
        ->check(CLI::IsMember({"auto", "over", "under"}));

    // dispersion fit
    auto* dispersion = app.add_subcommand("dispersion", "resonance grid dispersion");
    auto* disp_fit = dispersion->add_subcommand(
        "fit", "fit the resonance grid to pump frequency, FSR and curvature");
    std::string disp_file;
    double disp_min_depth_db = 3.0;
    std::optional<std::size_t> pump_index;
    std::optional<double> n_group;
    disp_fit->add_option("spectrum", disp_file, "wavelength/transmission CSV")
        ->required();
    disp_fit->add_option("--min-depth-db", disp_min_depth_db,
                         "ignore dips shallower than this");
    disp_fit->add_option("--pump-index", pump_index,
                         "resonance list index of the pump (default: center)");
    disp_fit->add_option("--n-group", n_group,
                         "group index; adds beta2 to the output");

    // pairs simulate / analyze
    auto* pairs = app.add_subcommand("pairs", "correlated pair streams");
    auto* pairs_sim =
        pairs->add_subcommand("simulate", "write signal/idler timestamp streams");
    int sim_channel = 1;
    pairs_sim->add_option("--channel", sim_channel, "config channel index");
    auto* pairs_ana = pairs->add_subcommand(
        "analyze", "coincidences, CAR and coherence time from two streams");
    std::string pa_signal, pa_idler;
    double pa_window_ns = 0.5;
    double pa_bin_ps = 10.0, pa_span_ns = 5.0, pa_jitter_ps = 70.710678118654755;
    pairs_ana->add_option("signal", pa_signal, "signal stream (.qts or CSV)")
        ->required();
    pairs_ana->add_option("idler", pa_idler, "idler stream (.qts or CSV)")->required();
    pairs_ana->add_option("--window-ns", pa_window_ns, "CAR coincidence window");
    pairs_ana->add_option("--bin-ps", pa_bin_ps, "histogram bin width");
    pairs_ana->add_option("--span-ns", pa_span_ns, "histogram span");
    pairs_ana->add_option("--jitter-ps", pa_jitter_ps,
                          "combined two-detector timing response sigma");

    // coincidence count
    auto* coincidence = app.add_subcommand("coincidence", "window counting");
    auto* coin_count =
        coincidence->add_subcommand("count", "count pairs inside a delay window");
    std::string cc_a, cc_b;
    double cc_window_ns = 0.5, cc_center_ns = 0.0, cc_exclude_ns = 0.0;
    coin_count->add_option("a", cc_a, "first stream")->required();
    coin_count->add_option("b", cc_b, "second stream")->required();
    coin_count->add_option("--window-ns", cc_window_ns, "full window width");
    coin_count->add_option("--center-ns", cc_center_ns, "window center delay");
    coin_count->add_option("--exclude-ns", cc_exclude_ns,
                           "keep accidental windows away from +-this delay");

    // franson simulate / analyze
    auto* franson_cmd = app.add_subcommand("franson", "two-photon interference");
    auto* fr_sim = franson_cmd->add_subcommand("simulate", "write a fringe scan CSV");
    int fr_channel = 1;
    fr_sim->add_option("--channel", fr_channel, "config channel index");
    auto* fr_ana =
        franson_cmd->add_subcommand("analyze", "visibility and CHSH from a scan");
    std::string fr_file;
    fr_ana->add_option("scan", fr_file, "fringe scan CSV")->required();

    // report
    auto* report = app.add_subcommand(
        "report", "full forward simulation and analysis of every channel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    return dispatch([&] {
        std::optional<spectra::Coupling> coupling;
        if (coupling_str == "over") coupling = spectra::Coupling::over;
        if (coupling_str == "under") coupling = spectra::Coupling::under;

        if (spec_analyze->parsed()) {
            auto spectrum_data = spectra::TransmissionSpectrum::from_csv(spec_file);
            auto resonances =
                spectra::analyze_spectrum(spectrum_data, min_depth_db, coupling);
            json rows = json::array();
            for (const auto& r : resonances) rows.push_back(resonance_row(r));
            emit(rows, g.format,
                 {"lambda0_nm", "fwhm_pm", "extinction_db", "q_loaded", "q_intrinsic",
                  "q_external"});
        } else if (disp_fit->parsed()) {
            auto spectrum_data = spectra::TransmissionSpectrum::from_csv(disp_file);
            auto resonances = spectra::analyze_spectrum(
                spectrum_data, disp_min_depth_db, spectra::Coupling::over);
            std::size_t pump = pump_index.value_or(resonances.size() / 2);
            auto disp = spectra::fit_dispersion(resonances, pump);
            json out;
            out["n_resonances"] = resonances.size();
            out["pump_lambda_nm"] =
                units::wavelength_nm_from_omega(disp.omega0_rad_s);
            out["d1_over_2pi_ghz"] = disp.d1_over_2pi_ghz;
            out["d2_over_2pi_mhz"] = disp.d2_over_2pi_mhz;
            if (n_group) {
                out["n_group"] = *n_group;
                out["beta2_s2_per_m"] =
                    spectra::gvd_beta2_s2_per_m(disp.d2_rad_s, disp.d1_rad_s, *n_group);
            }
            emit(out, g.format,
                 n_group ? std::vector<std::string>{"n_resonances", "pump_lambda_nm",
                                                    "d1_over_2pi_ghz", "d2_over_2pi_mhz",
                                                    "n_group", "beta2_s2_per_m"}
                         : std::vector<std::string>{"n_resonances", "pump_lambda_nm",
                                                    "d1_over_2pi_ghz",
                                                    "d2_over_2pi_mhz"});
        } else if (pairs_sim->parsed()) {
            auto cfg = load_config(g);
            const auto& ch = pick_channel(cfg, sim_channel);
            auto dir = out_base(g);
            fs::create_directories(dir);
            auto [sig, idl] = ts::simulate_pair_streams(
                ch.pair, cfg.det_signal, ch.rpg_true_hz_per_mw2,
                cfg.sim.stream_power_mw, ch.tau_c_true_ps, cfg.sim.stream_duration_s,
                rng::derive_seed(cfg.sim.seed, static_cast<std::uint64_t>(sim_channel)));
            sig.write_qts(dir / "signal.qts");
            idl.write_qts(dir / "idler.qts");
            json out;
            out["signal_path"] = (dir / "signal.qts").string();
            out["idler_path"] = (dir / "idler.qts").string();
            out["signal_events"] = sig.times_ps.size();
            out["idler_events"] = idl.times_ps.size();
            std::cout << out.dump(2) << "\n";
        } else if (pairs_ana->parsed()) {
            auto sig = ts::TimestampStream::read_file(pa_signal);
            auto idl = ts::TimestampStream::read_file(pa_idler);
            auto cr = ts::count_coincidences(sig, idl, pa_window_ns * 1000.0, 0.0);
            auto hist = ts::build_histogram(sig, idl, pa_bin_ps, pa_span_ns * 1000.0);
            auto cf = ts::fit_coherence_time(hist, pa_jitter_ps);
            json out;
            out["cc"] = cr.cc;
            out["acc"] = cr.acc;
            out["car"] = cr.car;
            out["tau_c_ps"] = cf.tau_c_ps;
            out["tau_c_err_ps"] = cf.tau_c_err_ps;
            out["histogram_total"] = [&] {
                std::uint64_t s = 0;
                for (auto c : hist.counts) s += c;
                return s;
            }();
            emit(out, g.format,
                 {"cc", "acc", "car", "tau_c_ps", "tau_c_err_ps", "histogram_total"});
        } else if (coin_count->parsed()) {
            auto a = ts::TimestampStream::read_file(cc_a);
            auto b = ts::TimestampStream::read_file(cc_b);
            auto cr = ts::count_coincidences(a, b, cc_window_ns * 1000.0,
                                             cc_center_ns * 1000.0,
                                             cc_exclude_ns * 1000.0);
            json out;
            out["cc"] = cr.cc;
            out["acc"] = cr.acc;
            out["car"] = cr.car;
            out["n_side_windows"] = cr.n_side_windows;
            emit(out, g.format, {"cc", "acc", "car", "n_side_windows"});
        } else if (fr_sim->parsed()) {
            auto cfg = load_config(g);
            const auto& ch = pick_channel(cfg, fr_channel);
            auto dir = out_base(g);
            fs::create_directories(dir);
            franson::ScanParams sp;
            sp.cfg = cfg.franson;
            sp.cfg.visibility_true = ch.visibility_true;
            sp.pair = ch.pair;
            sp.det = cfg.det_signal;
            sp.rpg_hz_per_mw2 = ch.rpg_true_hz_per_mw2;
            sp.power_mw = cfg.sim.fringe_power_mw;
            sp.tau_c_ps = ch.tau_c_true_ps;
            for (std::size_t j = 0; j < cfg.sim.fringe_points; ++j)
                sp.phases_rad.push_back(2.0 * units::pi * static_cast<double>(j) /
                                        static_cast<double>(cfg.sim.fringe_points - 1));
            sp.duration_per_point_s = cfg.sim.fringe_duration_per_point_s;
            sp.window_ps = cfg.sim.franson_window_ns * 1000.0;
            auto scan = franson::simulate_franson_scan(
                sp, rng::derive_seed(cfg.sim.seed,
                                     0x0F00 + static_cast<std::uint64_t>(fr_channel)));
            scan.to_csv(dir / "fringe.csv");
            json out;
            out["fringe_path"] = (dir / "fringe.csv").string();
            out["n_points"] = scan.phases.size();
            std::cout << out.dump(2) << "\n";
        } else if (fr_ana->parsed()) {
            auto scan = franson::FringeScan::from_csv(fr_file);
            auto raw = franson::visibility_from_scan(scan, false);
            auto net = franson::visibility_from_scan(scan, true);
            auto er = franson::make_entanglement_report(0, raw, net);
            json out;
            out["visibility_raw"] = er.v_raw;
            out["visibility_raw_err"] = er.v_raw_err;
            out["visibility_net"] = er.v_net;
            out["visibility_net_err"] = er.v_net_err;
            out["chsh_s_max"] = er.s_max;
            out["chsh_s_max_err"] = er.s_max_err;
            out["chsh_n_sigma"] = er.n_sigma;
            out["chsh_n_sigma_std"] = franson::n_sigma_std(er.n_sigma);
            out["fringe_flipped"] = er.flipped;
            emit(out, g.format,
                 {"visibility_raw", "visibility_raw_err", "visibility_net",
                  "visibility_net_err", "chsh_s_max", "chsh_s_max_err", "chsh_n_sigma",
                  "chsh_n_sigma_std"});
        } else if (report->parsed()) {
            auto cfg = load_config(g);
            auto dir = out_base(g);
            auto rep = pipeline::run_forward(cfg, dir);
            if (g.format == "csv")
                std::cout << rep.to_csv();
            else
                std::cout << rep.to_json();
        }
    });
}

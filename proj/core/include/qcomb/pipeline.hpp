#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "qcomb/counts.hpp"
#include "qcomb/franson.hpp"
#include "qcomb/resonator.hpp"

// Closed-loop experiment pipeline: run_forward simulates every per-channel
// measurement artifact to disk, then run_analysis rebuilds the summary
// report from those files alone. Because the forward path ends by calling
// the analysis path on its own output, the two agree byte for byte.

namespace qcomb::pipeline {

constexpr double unset = std::numeric_limits<double>::quiet_NaN();

struct GridSpec {
    double spacing_ghz = 200.0;    // channel grid pitch, one per FSR
    double tolerance_ghz = 1.0;
};

struct ChannelConfig {
    int index = 0;  // 1 = innermost pair, counting outward from the pump
    counts::ChannelPair pair;
    // Forward-simulation truths; the analysis path never reads them.
    double rpg_true_hz_per_mw2 = 0.0;
    double tau_c_true_ps = 0.0;
    double visibility_true = 1.0;
};

struct SimulationParams {
    std::uint64_t seed = 42;
    double sweep_duration_s = 50.0;
    double stream_power_mw = 0.18;
    double stream_duration_s = 60.0;
    std::size_t fringe_points = 17;        // equally spaced over one full turn
    double fringe_duration_per_point_s = 40.0;
    double fringe_power_mw = 0.18;
    double cc_window_ns = 2.5;             // power-sweep coincidence window
    double car_window_ns = 0.5;            // CAR window on the streams
    double histogram_bin_ps = 10.0;
    double histogram_span_ns = 5.0;
    double franson_window_ns = 1.0;        // central peak only, excludes side peaks
};

struct ExperimentConfig {
    resonator::RingResonator ring;
    double pump_laser_nm = 0.0;  // drive wavelength; channels straddle this
    std::vector<double> power_sweep_mw;
    counts::DetectorModel det_signal;
    counts::DetectorModel det_idler;
    counts::LossChain losses_signal;
    counts::LossChain losses_idler;
    franson::FransonConfig franson;
    GridSpec grid;
    SimulationParams sim;
    std::vector<ChannelConfig> channels;

    // Cross-field invariants: ring/detector/loss validity, a usable power
    // sweep, and every channel pair on the frequency grid, the same number
    // of steps above and below the pump within grid.tolerance_ghz.
    void validate() const;

    // INI-style file with unit-suffixed keys; see configs/ for the shape.
    static ExperimentConfig load(const std::filesystem::path& path);
};

struct ChannelResult {
    int index = 0;
    double lambda_signal_nm = unset;
    double lambda_idler_nm = unset;
    double tau_c_ps = unset, tau_c_err_ps = unset;
    double rpg_hz_per_mw2 = unset, rpg_err_hz_per_mw2 = unset;
    double brightness_ghz_per_mw2_nm = unset;
    double car = unset;
    double v_raw = unset, v_raw_err = unset;
    double v_net = unset, v_net_err = unset;
    double s_max = unset, s_max_err = unset;
    double n_sigma = unset;  // one decimal
    bool fringe_flipped = false;
    std::vector<std::string> errors;  // stage-tagged; empty on full success
};

struct Aggregates {
    double mean_brightness_ghz_per_mw2_nm = unset;
    double mean_visibility_net = unset;
    double mean_coherence_time_ps = unset;
};

struct ExperimentReport {
    int schema_version = 1;
    std::uint64_t seed = 0;
    std::vector<ChannelResult> channels;
    Aggregates aggregates;  // plain means of the finite per-channel values

    // Deterministic byte-for-byte output: fixed key order, shortest
    // round-trip numbers, no paths or wall-clock anywhere.
    std::string to_json() const;
    std::string to_csv() const;
};

std::filesystem::path channel_dir(const std::filesystem::path& root, int index);

// Simulates sweep.csv, signal.qts, idler.qts, histogram.csv and fringe.csv
// for every channel under out_dir, analyzes the tree it just wrote, and
// writes report.json / report.csv beside the channel directories. Stage
// failures land in the channel's error list, never abort the run.
ExperimentReport run_forward(const ExperimentConfig& cfg,
                             const std::filesystem::path& out_dir);

// Rebuilds the report from an artifact tree (run_forward layout, or real
// data arranged the same way). Reads only declared file formats.
ExperimentReport run_analysis(const std::filesystem::path& data_dir,
                              const ExperimentConfig& cfg);

}  // namespace qcomb::pipeline

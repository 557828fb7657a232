// loadslip command line: simulation, calibration, compensated scans, trace
// analysis, mosaicking and experiment sweeps. Exit codes: 0 success,
// 2 validity failure, 1 error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "loadslip/calibration.hpp"
#include "loadslip/error.hpp"
#include "loadslip/harness.hpp"
#include "loadslip/mosaic.hpp"
#include "loadslip/phase_analysis.hpp"
#include "loadslip/rng.hpp"
#include "loadslip/scan_planner.hpp"
#include "loadslip/text.hpp"
#include "loadslip/tissue_sim.hpp"

namespace fs = std::filesystem;
using namespace loadslip;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitValidity = 2;

struct Globals {
    std::uint64_t seed{0};
    std::string out_dir{"out"};
};

struct NoiseArgs {
    double tracking{0.0};
    double corner{0.0};
    double online{0.0};

    void add(CLI::App* app) {
        app->add_option("--tracking-sigma", tracking, "Robot tracking noise per control sample, mm");
        app->add_option("--corner-error", corner, "Maximum extra travel at reversals, mm");
        app->add_option("--online-sigma", online, "Frame-to-frame registration noise, mm");
    }
    [[nodiscard]] NoiseConfig config(std::uint64_t seed) const { return {tracking, corner, online, seed}; }
};

struct TissueArgs {
    double d{0.15};
    double g{0.0};

    void add(CLI::App* app) {
        app->add_option("--d", d, "Tissue loading distance, mm");
        app->add_option("--g", g, "Tissue load-slip span, mm");
    }
    [[nodiscard]] TissueParams params() const { return {d, g, 0.35}; }
};

Vec2 parse_extent(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) {
            const double v = std::stod(s);
            return {v, v};
        }
        return {std::stod(s.substr(0, x)), std::stod(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "extent must look like 1x1: " + s);
    }
}

fs::path prepare(const Globals& g) {
    fs::create_directories(g.out_dir);
    return g.out_dir;
}

void write_json(const fs::path& p, const ojson& j) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + p.string());
    os << j.dump(2) << '\n';
}

ojson vec_json(Vec2 v) { return ojson::array({v.x, v.y}); }

ojson estimate_json(const LoadingDistanceEstimate& e) {
    return {{"value_mm", e.value},
            {"method", std::string(to_string(e.method))},
            {"count", e.n_segments_or_cycles},
            {"raw_value_mm", e.raw_value},
            {"clamped", e.clamped}};
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string shape{"line"};
    std::string extent{"1x1"};
    double speed{0.3};
    double spacing{0.1};
    int cycles{1};
    double compensate{0.0};
    TissueArgs tissue;
    NoiseArgs noise;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
    ScanConfig sc;
    sc.shape = scan_shape_from_string(a.shape);
    sc.extent = parse_extent(a.extent);
    sc.speed = a.speed;
    sc.line_spacing = a.spacing;
    sc.repetitions = a.cycles;
    sc.compensation_d = a.compensate;
    const ScanPlan plan = plan_scan(sc);
    const auto sim = simulate_scan(a.tissue.params(), plan.waypoints, a.noise.config(g.seed));
    const fs::path out = prepare(g);
    write_trajectory_csv((out / "command.csv").string(), plan.waypoints);
    write_trajectory_csv((out / "probe.csv").string(), sim.probe_measured);
    write_trajectory_csv((out / "image.csv").string(), sim.image_measured);
    write_trajectory_csv((out / "image_true.csv").string(), sim.image_true);
    std::printf("simulated %s scan: %.3f s, %zu frames, max lag %.4f mm -> %s\n", a.shape.c_str(),
                plan.expected_duration, sim.image_measured.size(), sim.max_lag, out.string().c_str());
    return 0;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
    ProtocolConfig protocol;
    TissueArgs tissue;
    NoiseArgs noise;
};

int cmd_calibrate(const Globals& g, const CalibrateArgs& a) {
    SimulatedExecutor ex(a.tissue.params(), a.noise.config(g.seed));
    const auto res = run_protocol(ex, a.protocol);
    const fs::path out = prepare(g);
    write_trajectory_csv((out / "probe.csv").string(), res.recorded_probe);
    write_trajectory_csv((out / "image.csv").string(), res.recorded_image);
    ojson j{{"estimate", estimate_json(res.estimate)},
            {"validity", std::string(to_string(res.validity))},
            {"duration_s", res.duration},
            {"saturation_limit_mm", saturation_limit(a.protocol)}};
    write_json(out / "calibration.json", j);
    std::printf("loading distance %.4f mm (%s), protocol %.2f s\n", res.estimate.value,
                std::string(to_string(res.validity)).c_str(), res.duration);
    return res.validity == ProtocolValidity::Valid ? 0 : kExitValidity;
}

// ---------------------------------------------------------------- scan

struct ScanArgs {
    std::string shape{"raster"};
    std::string extent{"1x1"};
    double speed{0.3};
    double spacing{0.1};
    std::string compensate{"auto"};
    TissueArgs tissue;
    NoiseArgs noise;
};

int cmd_scan(const Globals& g, const ScanArgs& a) {
    ScanConfig sc;
    sc.shape = scan_shape_from_string(a.shape);
    sc.extent = parse_extent(a.extent);
    sc.speed = a.speed;
    sc.line_spacing = a.spacing;
    const TissueParams tissue = a.tissue.params();
    const NoiseConfig noise = a.noise.config(g.seed);
    const fs::path out = prepare(g);
    ojson j;
    j["shape"] = a.shape;
    j["extent_mm"] = vec_json(sc.extent);

    ScanPlan plan;
    SimResult sim;
    if (a.compensate == "auto") {
        ProtocolConfig pc;
        pc.speed = a.speed;
        SimulatedExecutor ex(tissue, noise);
        if (sc.shape == ScanShape::Raster) {
            IntegratedScanResult res;
            try {
                res = integrated_scan(ex, pc, sc);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::CalibrationInvalid) throw;
                std::fprintf(stderr, "loadslip: %s\n", e.what());
                return kExitValidity;
            }
            j["calibration"] = estimate_json(res.calibration.estimate);
            j["motion_time_s"] = res.motion_time;
            plan = res.plan;
            sim = res.executed;
        } else {
            const auto cal = run_protocol(ex, pc);
            j["calibration"] = estimate_json(cal.estimate);
            if (cal.validity != ProtocolValidity::Valid) {
                write_json(out / "scan.json", j);
                std::fprintf(stderr, "loadslip: calibration %s\n", std::string(to_string(cal.validity)).c_str());
                return kExitValidity;
            }
            sc.compensation_d = cal.estimate.value;
        }
    } else if (a.compensate != "off") {
        try {
            sc.compensation_d = std::stod(a.compensate);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "--compensate takes auto, off or a distance in mm");
        }
    }
    if (plan.waypoints.empty()) {
        plan = plan_scan(sc);
        sim = simulate_scan(tissue, plan.waypoints, noise);
        j["motion_time_s"] = plan.expected_duration;
    }
    j["compensation_d_mm"] = plan.compensation_d;
    j["compensation_events"] = plan.compensation_events.size();
    const auto box = bounding_box(sim.image_measured);
    j["image_bbox_mm"] = vec_json(box.size());
    j["closure_gap_mm"] = closure_gap(sim.image_measured);
    if (sc.shape == ScanShape::Raster) j["row_extent_mm"] = row_extent(sim.image_measured, plan);
    write_trajectory_csv((out / "command.csv").string(), plan.waypoints);
    write_trajectory_csv((out / "probe.csv").string(), sim.probe_measured);
    write_trajectory_csv((out / "image.csv").string(), sim.image_measured);
    write_json(out / "scan.json", j);
    std::printf("%s scan, d_comp %.4f mm, image bbox %.4f x %.4f mm, closure gap %.4f mm\n", a.shape.c_str(),
                plan.compensation_d, box.size().x, box.size().y, closure_gap(sim.image_measured));
    return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::string probe;
    std::string image;
    AnalysisConfig cfg;
};

int cmd_analyze(const Globals& g, const AnalyzeArgs& a) {
    const auto probe = read_trajectory_csv(a.probe, TrajectoryLabel::Probe);
    const auto image = read_trajectory_csv(a.image, TrajectoryLabel::Image);
    const auto res = analyze_line_scan(probe, image, a.cfg);
    const fs::path out = prepare(g);
    {
        std::ofstream os(out / "segments.csv", std::ios::binary);
        write_segments_csv(os, res.segments);
    }
    write_json(out / "analysis.json", {{"axis", vec_json(res.axis)},
                                       {"segments", res.segments.size()},
                                       {"phase_designation", estimate_json(res.phase_estimate)},
                                       {"peak_to_peak", estimate_json(res.p2p_estimate)},
                                       {"agreement_pct", agreement_percent(res.phase_estimate.value,
                                                                           res.p2p_estimate.value)}});
    std::printf("phase designation %.4f mm (%zu segments), peak-to-peak %.4f mm\n", res.phase_estimate.value,
                res.phase_estimate.n_segments_or_cycles, res.p2p_estimate.value);
    return 0;
}

// ---------------------------------------------------------------- mosaic

struct MosaicArgs {
    std::string texture{"blobs"};
    std::string trajectory;
    double diameter{1.0};
    double speed{0.3};
    double min_score{0.5};
};

int cmd_mosaic(const Globals& g, const MosaicArgs& a) {
    const ImagingConfig cfg;
    const Trajectory centres = a.trajectory.empty()
                                   ? circle_path(a.diameter, a.speed, cfg.frame_rate)
                                   : resample(read_trajectory_csv(a.trajectory, TrajectoryLabel::Image), cfg.frame_rate);
    const auto box = bounding_box(centres);
    TextureConfig tc;
    tc.kind = texture_kind_from_string(a.texture);
    tc.seed = derive_seed(g.seed, 0);
    tc.min = box.min - cfg.fov;
    tc.max = box.max + cfg.fov;
    const Texture tex = gen_texture(tc);
    const auto frames = acquire_frames(tex, centres, cfg);

    OnlineConfig oc;
    oc.min_score = a.min_score;
    const auto online = online_integrate(frames, cfg, frames.front().center, oc);
    const auto refined = offline_refine(online, frames, discover_pairs(online, cfg), cfg);
    const auto truth = ground_truth_layout(frames);

    const fs::path out = prepare(g);
    write_layout_csv((out / "layout_online.csv").string(), online);
    write_layout_csv((out / "layout_refined.csv").string(), refined.layout);
    write_layout_csv((out / "layout_truth.csv").string(), truth);
    const auto m_on = render_mosaic(frames, online, cfg);
    const auto m_ref = render_mosaic(frames, refined.layout, cfg);
    write_pgm((out / "mosaic_online.pgm").string(), m_on.width, m_on.height, m_on.pixels);
    write_pgm((out / "mosaic_refined.pgm").string(), m_ref.width, m_ref.height, m_ref.pixels);
    const double e_on = distance(online.positions.back(), frames.back().center);
    const double e_ref = distance(refined.layout.positions.back(), frames.back().center);
    write_json(out / "mosaic.json", {{"frames", frames.size()},
                                     {"constraints", refined.constraints.size()},
                                     {"online_endpoint_error_mm", e_on},
                                     {"refined_endpoint_error_mm", e_ref}});
    std::printf("%zu frames, endpoint error online %.2f um, refined %.2f um\n", frames.size(), e_on * 1e3,
                e_ref * 1e3);
    return 0;
}

// ---------------------------------------------------------------- experiment / report

int cmd_experiment(const Globals& g, bool seed_given, const std::string& spec_file) {
    ExperimentSpec spec = load_experiment_spec(spec_file);
    if (seed_given) spec.seed = g.seed;
    const auto table = run_experiment(spec, fs::path(g.out_dir));
    const auto rep = make_report({table});
    std::ofstream os(fs::path(g.out_dir) / "report.txt", std::ios::binary);
    write_report_text(os, rep);
    write_report_text(std::cout, rep);
    return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& files) {
    std::vector<SummaryTable> tables;
    for (const auto& f : files) {
        std::ifstream is(f);
        if (!is) throw Error(ErrorCode::Io, "cannot open " + f);
        std::stringstream ss;
        ss << is.rdbuf();
        tables.push_back(summary_from_json(ss.str()));
    }
    const auto rep = make_report(tables);
    const fs::path out = prepare(g);
    {
        std::ofstream os(out / "report.txt", std::ios::binary);
        write_report_text(os, rep);
    }
    {
        std::ofstream os(out / "report.csv", std::ios::binary);
        write_report_csv(os, rep);
    }
    {
        std::ofstream os(out / "merged_summary.csv", std::ios::binary);
        write_summary_csv(os, rep.merged);
    }
    write_report_text(std::cout, rep);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Load-slip simulation, calibration and mosaicking toolkit"};
    app.require_subcommand(1);
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Drive simulated tissue along a planned path");
    c_sim->add_option("--shape", sim.shape, "line, square or raster")->capture_default_str();
    c_sim->add_option("--extent", sim.extent, "Extent WxH in mm")->capture_default_str();
    c_sim->add_option("--speed", sim.speed, "mm/s")->capture_default_str();
    c_sim->add_option("--spacing", sim.spacing, "Raster row spacing, mm")->capture_default_str();
    c_sim->add_option("--cycles", sim.cycles, "Line scan cycles")->capture_default_str();
    c_sim->add_option("--compensate", sim.compensate, "Corner overshoot, mm (0 = none)");
    sim.tissue.add(c_sim);
    sim.noise.add(c_sim);

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Run the forward-backward calibration protocol");
    c_cal->add_option("--speed", cal.protocol.speed, "mm/s")->capture_default_str();
    c_cal->add_option("--di", cal.protocol.d_i, "Preload distance, mm")->capture_default_str();
    c_cal->add_option("--dr", cal.protocol.d_r, "Recorded stroke span, mm")->capture_default_str();
    cal.tissue.add(c_cal);
    cal.noise.add(c_cal);

    ScanArgs scan;
    auto* c_scan = app.add_subcommand("scan", "Plan and execute a compensated scan");
    c_scan->add_option("--shape", scan.shape, "line, square or raster")->capture_default_str();
    c_scan->add_option("--extent", scan.extent, "Extent WxH in mm")->capture_default_str();
    c_scan->add_option("--spacing", scan.spacing, "Raster row spacing, mm")->capture_default_str();
    c_scan->add_option("--speed", scan.speed, "mm/s")->capture_default_str();
    c_scan->add_option("--compensate", scan.compensate,
                       "auto (calibrate first), off, or a distance in mm")
        ->capture_default_str();
    scan.tissue.add(c_scan);
    scan.noise.add(c_scan);

    AnalyzeArgs an;
    auto* c_an = app.add_subcommand("analyze", "Estimate the loading distance from probe and image traces");
    c_an->add_option("--probe", an.probe, "Probe trajectory CSV")->required();
    c_an->add_option("--image", an.image, "Image trajectory CSV")->required();
    c_an->add_option("--rate", an.cfg.rate, "Resampling rate, Hz")->capture_default_str();
    c_an->add_option("--window", an.cfg.window, "Lowpass window, s")->capture_default_str();
    c_an->add_option("--speed-threshold", an.cfg.phase.speed_threshold, "mm/s")->capture_default_str();
    c_an->add_option("--min-duration", an.cfg.phase.min_segment_duration, "s")->capture_default_str();

    MosaicArgs mo;
    auto* c_mo = app.add_subcommand("mosaic", "Register synthetic frames and render mosaics");
    c_mo->add_option("--texture", mo.texture, "grid or blobs")->capture_default_str();
    c_mo->add_option("--trajectory", mo.trajectory, "Frame centre CSV (default: circle)");
    c_mo->add_option("--diameter", mo.diameter, "Circle diameter, mm")->capture_default_str();
    c_mo->add_option("--speed", mo.speed, "Circle speed, mm/s")->capture_default_str();
    c_mo->add_option("--min-score", mo.min_score, "NCC acceptance threshold")->capture_default_str();

    std::string spec_file;
    auto* c_exp = app.add_subcommand("experiment", "Experiment sweeps");
    c_exp->require_subcommand(1);
    auto* c_run = c_exp->add_subcommand("run", "Run an experiment spec");
    c_run->add_option("spec", spec_file, "Experiment JSON")->required();

    std::vector<std::string> summaries;
    auto* c_rep = app.add_subcommand("report", "Merge summaries and compare methods");
    c_rep->add_option("summaries", summaries, "summary.json files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (c_sim->parsed()) return cmd_simulate(g, sim);
        if (c_cal->parsed()) return cmd_calibrate(g, cal);
        if (c_scan->parsed()) return cmd_scan(g, scan);
        if (c_an->parsed()) return cmd_analyze(g, an);
        if (c_mo->parsed()) return cmd_mosaic(g, mo);
        if (c_run->parsed()) return cmd_experiment(g, seed_opt->count() > 0, spec_file);
        if (c_rep->parsed()) return cmd_report(g, summaries);
    } catch (const Error& e) {
        std::fprintf(stderr, "loadslip: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "loadslip: %s\n", e.what());
        return 1;
    }
    return 1;
}

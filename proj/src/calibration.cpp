#include "loadslip/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "loadslip/error.hpp"

namespace loadslip {

namespace {

// The robot halts when a recording stops; the hold makes that vertex a dwell
// instead of a turnaround, so no corner overshoot is applied there.
constexpr double kSettleTime = 1e-3;

}  // namespace

SimulatedExecutor::SimulatedExecutor(TissueParams params, NoiseConfig noise, SimConfig sim, Vec2 start)
    : params_(params), noise_(noise), sim_(std::move(sim)), polyline_{{0.0, start.x, start.y}} {
    params_.validate();
    noise_.validate();
}

Vec2 SimulatedExecutor::probe_position() const { return polyline_.back().pos(); }

double SimulatedExecutor::elapsed() const { return polyline_.back().t; }

void SimulatedExecutor::move_to(Vec2 target, double speed) {
    if (fault_after_) {
        if (*fault_after_ == 0) {
            fault_after_.reset();
            throw Error(ErrorCode::ExecutorFault, "injected fault during move");
        }
        --*fault_after_;
    }
    if (!(speed > 0.0) || !std::isfinite(speed)) throw Error(ErrorCode::InvalidConfig, "speed must be > 0");
    if (!std::isfinite(target.x) || !std::isfinite(target.y)) throw Error(ErrorCode::NonFinite, "target not finite");
    const Sample& last = polyline_.back();
    const double dist = distance(target, last.pos());
    if (dist == 0.0) return;
    polyline_.push_back({last.t + dist / speed, target.x, target.y});
}

void SimulatedExecutor::start_recording() {
    if (recording_since_) throw Error(ErrorCode::ExecutorFault, "recording already active");
    recording_since_ = polyline_.back().t;
}

Recording SimulatedExecutor::stop_recording() {
    if (!recording_since_) throw Error(ErrorCode::ExecutorFault, "no active recording");
    const double t0 = *recording_since_;
    const double t1 = polyline_.back().t;
    recording_since_.reset();
    if (!(t1 > t0)) throw Error(ErrorCode::ExecutorFault, "recording window contains no motion");

    SimConfig cfg = sim_;
    cfg.frame_times = frame_clock(t0, t1, sim_.frame_rate);
    const auto r = simulate_scan(params_, Trajectory(polyline_), noise_, cfg);

    std::vector<Sample> probe;
    for (const auto& s : r.probe_measured.samples()) {
        if (s.t >= t0 - 1e-12 && s.t <= t1) probe.push_back(s);
    }
    const Vec2 here = polyline_.back().pos();
    polyline_.push_back({t1 + kSettleTime, here.x, here.y});
    return {Trajectory(std::move(probe), TrajectoryLabel::Probe), r.image_measured};
}

SimResult SimulatedExecutor::executed() const {
    SimConfig cfg = sim_;
    cfg.frame_times.reset();
    return simulate_scan(params_, Trajectory(polyline_), noise_, cfg);
}

Trajectory SimulatedExecutor::command() const { return Trajectory(polyline_); }

void ProtocolConfig::validate() const {
    if (!(speed > 0.0) || !(d_i > 0.0) || !(d_r > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "protocol speed, d_i and d_r must be > 0");
    }
    if (norm(direction) == 0.0 || !std::isfinite(norm(direction))) {
        throw Error(ErrorCode::InvalidConfig, "protocol direction must be non-zero");
    }
}

std::string_view to_string(ProtocolValidity v) noexcept {
    switch (v) {
        case ProtocolValidity::Valid: return "Valid";
        case ProtocolValidity::SaturatedRange: return "SaturatedRange";
        case ProtocolValidity::PreloadInsufficient: return "PreloadInsufficient";
    }
    return "?";
}

double saturation_limit(const ProtocolConfig& cfg) noexcept {
    const double quarter = cfg.d_r / 4.0;
    return quarter - 0.05 * quarter;
}

ProtocolResult run_protocol(ScanExecutor& executor, const ProtocolConfig& cfg) {
    cfg.validate();
    const Vec2 u = normalized(cfg.direction);
    const double start_time = executor.elapsed();

    Vec2 p = executor.probe_position() + (cfg.d_i / 2.0) * u;
    executor.move_to(p, cfg.speed);
    executor.start_recording();
    p = p + (cfg.d_r / 2.0) * u;
    executor.move_to(p, cfg.speed);
    p = p - cfg.d_r * u;
    executor.move_to(p, cfg.speed);
    const double motion_end = executor.elapsed();
    Recording rec = executor.stop_recording();

    ProtocolResult result;
    result.duration = motion_end - start_time;
    result.estimate = estimate_by_peak_to_peak(cfg.d_r, peak_to_peak(rec.image, u));

    if (result.estimate.raw_value >= saturation_limit(cfg)) {
        result.validity = ProtocolValidity::SaturatedRange;
    } else if (result.estimate.raw_value >= cfg.d_i / 2.0) {
        result.validity = ProtocolValidity::PreloadInsufficient;
    } else {
        // A fully preloaded stroke starts slipping, so the first phase must be Slip.
        AnalysisConfig acfg;
        acfg.phase.speed_threshold = std::min(acfg.phase.speed_threshold, 0.5 * cfg.speed);
        auto [probe, image] = common_grid(rec.probe, rec.image, acfg.rate);
        const auto segs = classify_phases(lowpass(probe, acfg.window), lowpass(image, acfg.window), acfg.phase);
        if (segs.empty() || segs.front().kind != PhaseKind::Slip) result.validity = ProtocolValidity::PreloadInsufficient;
    }
    result.recorded_image = std::move(rec.image);
    result.recorded_probe = std::move(rec.probe);
    return result;
}

}  // namespace loadslip

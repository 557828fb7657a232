#include "loadslip/scan_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "loadslip/error.hpp"

namespace loadslip {

std::string_view to_string(ScanShape s) noexcept {
    switch (s) {
        case ScanShape::Line: return "line";
        case ScanShape::Square: return "square";
        case ScanShape::Raster: return "raster";
    }
    return "?";
}

ScanShape scan_shape_from_string(std::string_view s) {
    if (s == "line") return ScanShape::Line;
    if (s == "square") return ScanShape::Square;
    if (s == "raster") return ScanShape::Raster;
    throw Error(ErrorCode::InvalidConfig, "unknown scan shape: " + std::string(s));
}

void ScanConfig::validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!(speed > 0.0) || !finite(speed)) throw Error(ErrorCode::InvalidConfig, "scan speed must be > 0");
    if (!(extent.x > 0.0) || !finite(extent.x)) throw Error(ErrorCode::InvalidConfig, "scan extent must be > 0");
    if (shape != ScanShape::Line && (!(extent.y > 0.0) || !finite(extent.y))) {
        throw Error(ErrorCode::InvalidConfig, "scan extent must be > 0");
    }
    if (!(compensation_d >= 0.0) || !finite(compensation_d)) {
        throw Error(ErrorCode::InvalidConfig, "compensation distance must be >= 0");
    }
    if (!finite(origin.x) || !finite(origin.y)) throw Error(ErrorCode::InvalidConfig, "origin must be finite");
    if (shape == ScanShape::Line && repetitions < 1) throw Error(ErrorCode::InvalidConfig, "repetitions must be >= 1");
    if (shape == ScanShape::Raster) {
        if (!(line_spacing > 0.0) || line_spacing > std::min(fov_height, extent.y) * (1.0 + 1e-12)) {
            throw Error(ErrorCode::InvalidConfig, "line spacing must be in (0, min(fov height, extent y)]");
        }
    }
}

namespace {

// Accumulates constant-speed waypoints and the bookkeeping of a plan.
class PlanBuilder {
public:
    PlanBuilder(Vec2 start, double speed, double d) : speed_(speed), d_(d) { pts_.push_back({0.0, start.x, start.y}); }

    [[nodiscard]] double now() const { return pts_.back().t; }
    [[nodiscard]] Vec2 here() const { return pts_.back().pos(); }

    void go(Vec2 p) {
        const double len = distance(p, here());
        if (len == 0.0) return;
        pts_.push_back({now() + len / speed_, p.x, p.y});
    }

    // Overshoot by d along the incoming direction, then come back.
    void corner(Vec2 incoming) {
        if (d_ <= 0.0) return;
        const Vec2 u = normalized(incoming);
        const Vec2 c = here();
        events_.push_back({now(), u});
        go(c + d_ * u);
        go(c);
    }

    void stroke(double t0, Vec2 from, Vec2 to) { strokes_.push_back({t0, now(), from, to}); }

    ScanPlan finish() {
        ScanPlan plan;
        plan.waypoints = Trajectory(std::move(pts_));
        plan.compensation_events = std::move(events_);
        plan.strokes = std::move(strokes_);
        plan.expected_duration = plan.waypoints.duration();
        plan.compensation_d = d_;
        return plan;
    }

private:
    double speed_;
    double d_;
    std::vector<Sample> pts_;
    std::vector<CompensationEvent> events_;
    std::vector<Stroke> strokes_;
};

void check_d(double d) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw Error(ErrorCode::InvalidConfig, "compensation distance must be >= 0");
}

}  // namespace

ScanPlan plan_line(const ScanConfig& cfg) {
    ScanConfig checked = cfg;
    checked.shape = ScanShape::Line;
    checked.validate();
    const Vec2 a = cfg.origin;
    const Vec2 b = cfg.origin + Vec2{cfg.extent.x, 0.0};
    PlanBuilder pb(a, cfg.speed, cfg.compensation_d);
    for (int k = 0; k < cfg.repetitions; ++k) {
        double t0 = pb.now();
        pb.go(b);
        pb.corner(b - a);
        pb.stroke(t0, a, b);
        t0 = pb.now();
        pb.go(a);
        // The final return is a stop, not a reversal.
        if (k + 1 < cfg.repetitions) pb.corner(a - b);
        pb.stroke(t0, b, a);
    }
    return pb.finish();
}

ScanPlan plan_square(const ScanConfig& cfg, double d) {
    ScanConfig checked = cfg;
    checked.shape = ScanShape::Square;
    checked.validate();
    check_d(d);
    const Vec2 o = cfg.origin;
    const Vec2 w{cfg.extent.x, 0.0};
    const Vec2 h{0.0, cfg.extent.y};
    const Vec2 corners[] = {o + w, o + w + h, o + h, o};
    PlanBuilder pb(o, cfg.speed, d);
    Vec2 prev = o;
    for (const Vec2& c : corners) {
        const double t0 = pb.now();
        pb.go(c);
        pb.corner(c - prev);
        pb.stroke(t0, prev, c);
        prev = c;
    }
    return pb.finish();
}

std::size_t raster_row_count(const ScanConfig& cfg) {
    return static_cast<std::size_t>(std::floor(cfg.extent.y / cfg.line_spacing + 1e-9)) + 1;
}

ScanPlan plan_raster(const ScanConfig& cfg, double d) {
    ScanConfig checked = cfg;
    checked.shape = ScanShape::Raster;
    checked.validate();
    check_d(d);
    const std::size_t rows = raster_row_count(cfg);
    const double x0 = cfg.origin.x;
    const double x1 = cfg.origin.x + cfg.extent.x;
    PlanBuilder pb(cfg.origin, cfg.speed, d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double y = cfg.origin.y + static_cast<double>(r) * cfg.line_spacing;
        const bool forward = r % 2 == 0;
        const Vec2 from{forward ? x0 : x1, y};
        const Vec2 to{forward ? x1 : x0, y};
        const double t0 = pb.now();
        pb.go(to);
        pb.corner(to - from);
        pb.stroke(t0, from, to);
        if (r + 1 < rows) {
            pb.go({to.x, y + cfg.line_spacing});
            pb.corner({0.0, 1.0});
        }
    }
    return pb.finish();
}

ScanPlan plan_scan(const ScanConfig& cfg) {
    switch (cfg.shape) {
        case ScanShape::Line: return plan_line(cfg);
        case ScanShape::Square: return plan_square(cfg, cfg.compensation_d);
        case ScanShape::Raster: return plan_raster(cfg, cfg.compensation_d);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown scan shape");
}

ScanPlan shift_plan(const ScanPlan& plan, Vec2 offset, double dt) {
    std::vector<Sample> pts;
    pts.reserve(plan.waypoints.size());
    for (const auto& s : plan.waypoints.samples()) pts.push_back({s.t + dt, s.x + offset.x, s.y + offset.y});
    ScanPlan out = plan;
    out.waypoints = Trajectory(std::move(pts));
    for (auto& e : out.compensation_events) e.t += dt;
    for (auto& s : out.strokes) {
        s.t_start += dt;
        s.t_end += dt;
        s.from = s.from + offset;
        s.to = s.to + offset;
    }
    return out;
}

void execute_plan(ScanExecutor& executor, const ScanPlan& plan, double speed) {
    const auto pts = plan.waypoints.samples();
    for (std::size_t i = 1; i < pts.size(); ++i) executor.move_to(pts[i].pos(), speed);
}

IntegratedScanResult integrated_scan(SimulatedExecutor& executor, const ProtocolConfig& protocol, ScanConfig scan) {
    scan.shape = ScanShape::Raster;
    scan.validate();

    IntegratedScanResult out;
    out.calibration = run_protocol(executor, protocol);
    if (out.calibration.validity != ProtocolValidity::Valid) {
        throw Error(ErrorCode::CalibrationInvalid,
                    "calibration reported " + std::string(to_string(out.calibration.validity)));
    }
    const double d = out.calibration.estimate.value;

    // The last protocol stroke leaves the tissue loaded by d against the
    // protocol direction; travelling d back unloads it.
    const Vec2 u = normalized(protocol.direction);
    const double t_unload = executor.elapsed();
    executor.move_to(executor.probe_position() + d * u, protocol.speed);
    const double unload_time = executor.elapsed() - t_unload;

    scan.compensation_d = d;
    const Vec2 start = executor.probe_position();
    const ScanPlan local = plan_raster(scan, d);
    out.plan = shift_plan(local, start - scan.origin, executor.elapsed());
    execute_plan(executor, out.plan, scan.speed);

    out.executed = executor.executed();
    out.motion_time = out.calibration.duration + unload_time + out.plan.expected_duration;
    return out;
}

BoundingBox bounding_box(const Trajectory& traj) {
    if (traj.empty()) throw Error(ErrorCode::EmptyTrajectory, "bounding box of an empty trajectory");
    BoundingBox b{traj.front().pos(), traj.front().pos()};
    for (const auto& s : traj.samples()) {
        b.min.x = std::min(b.min.x, s.x);
        b.min.y = std::min(b.min.y, s.y);
        b.max.x = std::max(b.max.x, s.x);
        b.max.y = std::max(b.max.y, s.y);
    }
    return b;
}

double closure_gap(const Trajectory& traj) {
    if (traj.empty()) throw Error(ErrorCode::EmptyTrajectory, "closure gap of an empty trajectory");
    return distance(traj.front().pos(), traj.back().pos());
}

namespace {

template <class F>
void for_each_in_window(const Trajectory& image, const Stroke& s, F&& f) {
    for (const auto& p : image.samples()) {
        if (p.t >= s.t_start - 1e-9 && p.t <= s.t_end + 1e-9) f(p);
    }
}

}  // namespace

double row_extent(const Trajectory& image, const ScanPlan& plan) {
    if (plan.strokes.empty()) throw Error(ErrorCode::InvalidConfig, "plan has no rows");
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& s : plan.strokes) {
        double mn = std::numeric_limits<double>::infinity();
        double mx = -mn;
        for_each_in_window(image, s, [&](const Sample& p) {
            mn = std::min(mn, p.x);
            mx = std::max(mx, p.x);
        });
        if (!(mx >= mn)) throw Error(ErrorCode::InvalidRange, "no image samples during a row");
        lo = std::max(lo, mn);
        hi = std::min(hi, mx);
    }
    return std::max(0.0, hi - lo);
}

std::vector<double> row_levels(const Trajectory& image, const ScanPlan& plan) {
    std::vector<double> out;
    out.reserve(plan.strokes.size());
    for (const auto& s : plan.strokes) {
        double sum = 0.0;
        std::size_t n = 0;
        for_each_in_window(image, s, [&](const Sample& p) {
            sum += p.y;
            ++n;
        });
        if (n == 0) throw Error(ErrorCode::InvalidRange, "no image samples during a row");
        out.push_back(sum / static_cast<double>(n));
    }
    return out;
}

double coverage(const Trajectory& image, Vec2 target_min, Vec2 target_max, Vec2 fov, double cell) {
    if (!(cell > 0.0)) throw Error(ErrorCode::InvalidConfig, "coverage cell must be > 0");
    const Vec2 size = target_max - target_min;
    if (!(size.x > 0.0) || !(size.y > 0.0)) throw Error(ErrorCode::InvalidConfig, "empty coverage target");
    const auto nx = static_cast<std::size_t>(std::ceil(size.x / cell - 1e-9));
    const auto ny = static_cast<std::size_t>(std::ceil(size.y / cell - 1e-9));
    std::vector<char> hit(nx * ny, 0);
    const Vec2 half = 0.5 * fov;
    auto clamp_idx = [](double v, std::size_t n) {
        return static_cast<std::ptrdiff_t>(std::clamp(v, -1.0, static_cast<double>(n)));
    };
    for (const auto& p : image.samples()) {
        // Cells whose centre lies inside the footprint.
        const auto i0 = clamp_idx(std::ceil((p.x - half.x - target_min.x) / cell - 0.5), nx);
        const auto i1 = clamp_idx(std::floor((p.x + half.x - target_min.x) / cell - 0.5), nx);
        const auto j0 = clamp_idx(std::ceil((p.y - half.y - target_min.y) / cell - 0.5), ny);
        const auto j1 = clamp_idx(std::floor((p.y + half.y - target_min.y) / cell - 0.5), ny);
        for (auto j = std::max<std::ptrdiff_t>(j0, 0); j <= std::min<std::ptrdiff_t>(j1, ny - 1); ++j) {
            for (auto i = std::max<std::ptrdiff_t>(i0, 0); i <= std::min<std::ptrdiff_t>(i1, nx - 1); ++i) {
                hit[static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i)] = 1;
            }
        }
    }
    const auto covered = std::count(hit.begin(), hit.end(), 1);
    return static_cast<double>(covered) / static_cast<double>(hit.size());
}

}  // namespace loadslip

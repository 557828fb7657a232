#pragma once

// Constant-speed waypoint plans for line, square and raster scans, with
// overshoot-and-return corner compensation, plus the calibrate-then-scan
// sequence and the image-trajectory metrics used to judge a scan.

#include <cstddef>
#include <string_view>
#include <vector>

#include "loadslip/calibration.hpp"
#include "loadslip/geometry.hpp"
#include "loadslip/trajectory.hpp"

namespace loadslip {

enum class ScanShape { Line, Square, Raster };

[[nodiscard]] std::string_view to_string(ScanShape s) noexcept;
[[nodiscard]] ScanShape scan_shape_from_string(std::string_view s);

struct ScanConfig {
    ScanShape shape{ScanShape::Raster};
    Vec2 extent{1.0, 1.0};  // mm
    double speed{0.3};      // mm/s
    double line_spacing{0.1};
    double compensation_d{0.0};  // mm, 0 = uncompensated
    Vec2 origin{};
    int repetitions{1};        // line cycles
    double fov_height{0.200};  // mm, bounds the raster spacing

    void validate() const;
};

struct CompensationEvent {
    double t{0.0};     // time the overshoot starts
    Vec2 direction{};  // unit overshoot direction
};

// One straight stroke of the intended pattern (a raster row or a square edge).
struct Stroke {
    double t_start{0.0};
    double t_end{0.0};
    Vec2 from{};
    Vec2 to{};
};

struct ScanPlan {
    Trajectory waypoints;
    std::vector<CompensationEvent> compensation_events;
    std::vector<Stroke> strokes;
    double expected_duration{0.0};
    double compensation_d{0.0};

    [[nodiscard]] double path_length() const noexcept { return waypoints.path_length(); }
};

[[nodiscard]] ScanPlan plan_line(const ScanConfig& cfg);
// Counter-clockwise from the origin, first edge along +x.
[[nodiscard]] ScanPlan plan_square(const ScanConfig& cfg, double d);
// Boustrophedon rows along x stepped along +y.
[[nodiscard]] ScanPlan plan_raster(const ScanConfig& cfg, double d);
// Dispatch on cfg.shape using cfg.compensation_d.
[[nodiscard]] ScanPlan plan_scan(const ScanConfig& cfg);

[[nodiscard]] std::size_t raster_row_count(const ScanConfig& cfg);

// Same plan started at `start` (time and position shifted).
[[nodiscard]] ScanPlan shift_plan(const ScanPlan& plan, Vec2 offset, double dt);

// Executes every waypoint after the first from the executor's current position.
void execute_plan(ScanExecutor& executor, const ScanPlan& plan, double speed);

struct IntegratedScanResult {
    ProtocolResult calibration;
    ScanPlan plan;          // as executed (absolute time and position)
    SimResult executed;     // whole run when the executor is simulated
    double motion_time{0.0};
};

// Calibrate, unload the tissue by moving d_est forward along the protocol
// direction, then run the raster compensated with d_est from there.
[[nodiscard]] IntegratedScanResult integrated_scan(SimulatedExecutor& executor, const ProtocolConfig& protocol,
                                                   ScanConfig scan);

struct BoundingBox {
    Vec2 min{};
    Vec2 max{};

    [[nodiscard]] Vec2 size() const noexcept { return max - min; }
};

[[nodiscard]] BoundingBox bounding_box(const Trajectory& traj);

// Distance between the first and the last sample.
[[nodiscard]] double closure_gap(const Trajectory& traj);

// Length of the common x-interval covered by the image during every raster
// row (strokes of the plan).
[[nodiscard]] double row_extent(const Trajectory& image, const ScanPlan& plan);

// Mean image y while on each row.
[[nodiscard]] std::vector<double> row_levels(const Trajectory& image, const ScanPlan& plan);

// Fraction of the target rectangle covered by at least one frame footprint
// centred on the image trajectory, on a `cell` mm grid.
[[nodiscard]] double coverage(const Trajectory& image, Vec2 target_min, Vec2 target_max, Vec2 fov,
                              double cell = 0.005);

}  // namespace loadslip

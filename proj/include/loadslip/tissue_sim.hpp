#pragma once

// Kinematic probe -> image map of a soft surface under a dragged probe.
//
// The image (tissue-relative probe position) sticks while the radial lag
// |probe - image| is inside a stick band, slips rigidly once fully loaded,
// and ramps between the two over `load_slip_span` of probe travel with an
// image gain that grows linearly from 0 to 1.

#include <cstdint>
#include <optional>
#include <vector>

#include "loadslip/geometry.hpp"
#include "loadslip/trajectory.hpp"

namespace loadslip {

struct TissueParams {
    double loading_distance{0.0};   // d, mm
    double load_slip_span{0.0};     // g, mm
    double indentation_depth{0.35}; // mm, metadata only

    void validate() const;

    // Lag below which the image sticks.
    [[nodiscard]] double stick_band() const noexcept;
    // Lag during steady slip.
    [[nodiscard]] double slip_lag() const noexcept;
    // Lag reached after `progress` mm of probe travel past the stick band.
    [[nodiscard]] double lag_at_progress(double progress) const noexcept;
    // Inverse of lag_at_progress on [stick_band, slip_lag].
    [[nodiscard]] double progress_at_lag(double lag) const noexcept;
};

struct TissueState {
    Vec2 image_pos{};
    double partial_load{0.0};  // progress through the load+slip ramp, mm in [0, g]
    Vec2 probe_pos{};          // probe position at the last update
};

[[nodiscard]] TissueState initial_state(Vec2 probe_pos) noexcept;

// One update of the contact state to a new probe position. The caller keeps
// probe increments small relative to d (see substep_length).
[[nodiscard]] TissueState tissue_step(const TissueState& state, const TissueParams& params, Vec2 probe_pos) noexcept;

// Integration step used by simulate_scan.
[[nodiscard]] double substep_length(const TissueParams& params) noexcept;

struct NoiseConfig {
    double robot_tracking_sigma{0.0};  // mm, per control sample, per axis
    double corner_error_max{0.05};     // mm, extra travel at reversals
    double online_step_sigma{0.0};     // mm, per frame, per axis
    std::uint64_t seed{0};

    void validate() const;
    [[nodiscard]] static NoiseConfig none() noexcept { return {0.0, 0.0, 0.0, 0}; }
};

struct SimConfig {
    double control_rate{100.0};  // Hz, robot position sampling
    double frame_rate{12.0};     // Hz, image acquisition
    // Overrides the frame clock entirely when set (must lie inside the command span).
    std::optional<std::vector<double>> frame_times;
};

struct SimResult {
    Trajectory probe_measured;  // realized probe on the control clock (t0 + k / rate, plus t_end)
    Trajectory image_true;      // frame grid
    Trajectory image_measured;  // frame grid, accumulated noisy frame-to-frame steps
    double max_lag{0.0};        // largest |probe - image| seen at any sub-step
};

// Command polyline vertices where the path reverses (incoming and outgoing
// directions at an obtuse angle > 90 degrees).
[[nodiscard]] std::vector<std::size_t> reversal_vertices(const Trajectory& command);

// Frame clock: t0 + k / rate while inside the span, plus a final frame at t_end.
[[nodiscard]] std::vector<double> frame_clock(double t0, double t_end, double rate_hz);

// Starts unloaded with the image at the first realized probe position.
[[nodiscard]] SimResult simulate_scan(const TissueParams& params, const Trajectory& command,
                                      const NoiseConfig& noise, const SimConfig& cfg = {});

}  // namespace loadslip

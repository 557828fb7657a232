#pragma once

// Time-stamped planar trajectories and the signal processing shared by every
// analysis path. Units are fixed: seconds, millimeters, mm/s.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loadslip/geometry.hpp"

namespace loadslip {

enum class TrajectoryLabel { Probe, Image };

struct Sample {
    double t{0.0};
    double x{0.0};
    double y{0.0};

    [[nodiscard]] constexpr Vec2 pos() const noexcept { return {x, y}; }
    friend constexpr bool operator==(const Sample&, const Sample&) = default;
};

// Ordered sample sequence. Construction enforces strictly increasing time and
// finite coordinates, so every Trajectory in circulation satisfies both.
class Trajectory {
public:
    Trajectory() = default;
    explicit Trajectory(std::vector<Sample> samples, TrajectoryLabel label = TrajectoryLabel::Probe);

    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }
    [[nodiscard]] std::span<const Sample> samples() const noexcept { return samples_; }
    [[nodiscard]] const Sample& operator[](std::size_t i) const { return samples_[i]; }
    [[nodiscard]] const Sample& front() const { return samples_.front(); }
    [[nodiscard]] const Sample& back() const { return samples_.back(); }
    [[nodiscard]] TrajectoryLabel label() const noexcept { return label_; }
    void set_label(TrajectoryLabel label) noexcept { label_ = label; }

    [[nodiscard]] double duration() const noexcept;
    [[nodiscard]] double path_length() const noexcept;

    // Linear interpolation; clamps to the end samples outside [t_first, t_last].
    [[nodiscard]] Vec2 position_at(double t) const;

    // Median sample period.
    [[nodiscard]] double nominal_period() const;
    // Largest sample gap divided by the nominal period (sampling contract: <= 10).
    [[nodiscard]] double max_gap_ratio() const;
    [[nodiscard]] bool is_uniform(double rel_tol = 1e-6) const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;

private:
    std::vector<Sample> samples_;
    TrajectoryLabel label_{TrajectoryLabel::Probe};
};

struct VelocitySample {
    double t{0.0};
    double vx{0.0};
    double vy{0.0};
    double speed{0.0};
};

struct VelocitySeries {
    std::vector<VelocitySample> samples;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    // Signed velocity component along `axis` (unit vector) for every sample.
    [[nodiscard]] std::vector<double> along(Vec2 axis) const;
};

struct PeakToPeak {
    double p_min{0.0};
    double p_max{0.0};
    Vec2 axis{1.0, 0.0};

    [[nodiscard]] double range() const noexcept { return p_max - p_min; }
};

// Uniform grid over [t_first, t_last] with round(span * rate) intervals, so both
// endpoints are kept exactly and the realized rate is within half a sample of
// the request. Linear interpolation between samples.
[[nodiscard]] Trajectory resample(const Trajectory& traj, double rate_hz);

// The grid used by resample: t0 + (t1 - t0) * k / n, n = max(1, round((t1 - t0) * rate)).
[[nodiscard]] std::vector<double> uniform_grid(double t0, double t1, double rate_hz);

// Linear interpolation at caller-supplied times (strictly increasing, inside
// the trajectory span).
[[nodiscard]] Trajectory resample_at(const Trajectory& traj, std::span<const double> times);

// Puts two trajectories on one uniform grid covering their common time span.
[[nodiscard]] std::pair<Trajectory, Trajectory> common_grid(const Trajectory& a, const Trajectory& b,
                                                            double rate_hz);

// Zero-phase moving average of round(window / dt) samples (forced odd). The
// window shrinks symmetrically near the ends; window 0 is the identity.
[[nodiscard]] Trajectory lowpass(const Trajectory& traj, double window_s);

// Fourth-order finite differences: centered in the interior, asymmetric
// stencils on the two samples at each end. Falls back to second order for
// fewer than five samples.
[[nodiscard]] VelocitySeries velocity(const Trajectory& traj);

[[nodiscard]] PeakToPeak peak_to_peak(const Trajectory& traj, Vec2 axis);

// Projection of every sample onto `axis`.
[[nodiscard]] std::vector<double> project(const Trajectory& traj, Vec2 axis);

// CSV with header `t_s,x_mm,y_mm`.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
[[nodiscard]] Trajectory read_trajectory_csv(std::istream& is, TrajectoryLabel label = TrajectoryLabel::Probe);
[[nodiscard]] Trajectory read_trajectory_csv(const std::string& path,
                                             TrajectoryLabel label = TrajectoryLabel::Probe);

}  // namespace loadslip

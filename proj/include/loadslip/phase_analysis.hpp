#pragma once

// Three-phase classification of line scans and the two loading-distance
// estimators built on it.

#include <cstddef>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "loadslip/geometry.hpp"
#include "loadslip/trajectory.hpp"

namespace loadslip {

struct PhaseConfig {
    double speed_threshold{0.1};       // mm/s
    double min_segment_duration{0.1};  // s

    void validate() const;
};

enum class PhaseKind { Slip, LoadUnload, LoadSlip };

[[nodiscard]] std::string_view to_string(PhaseKind kind) noexcept;
[[nodiscard]] PhaseKind phase_kind_from_string(std::string_view s);

struct PhaseSegment {
    PhaseKind kind{PhaseKind::Slip};
    double t_start{0.0};
    double t_end{0.0};
    double probe_span{0.0};
    // False for segments wholly before the first or after the last probe
    // reversal; those are half-cycles and stay out of span statistics.
    bool interior{true};
};

enum class EstimateMethod { PhaseDesignation, PeakToPeak };

[[nodiscard]] std::string_view to_string(EstimateMethod m) noexcept;

struct LoadingDistanceEstimate {
    double value{0.0};
    EstimateMethod method{EstimateMethod::PhaseDesignation};
    std::size_t n_segments_or_cycles{0};
    double raw_value{0.0};
    bool clamped{false};
    // Phase designation: spans of the contributing segments.
    std::vector<double> load_unload_spans;
    std::vector<double> load_slip_spans;
    // Peak-to-peak: per-stroke (or single) estimates.
    std::vector<double> cycle_values;
};

// Per-sample rule, exposed for property tests. dv is the probe-minus-image
// velocity, v_img the image velocity, both signed along the scan axis.
[[nodiscard]] PhaseKind classify_sample(double dv, double v_img, double threshold) noexcept;

// Unit direction of largest positional variance, sign fixed so the first
// non-negligible component is positive.
[[nodiscard]] Vec2 principal_axis(const Trajectory& traj);

struct Reversal {
    std::size_t index{0};
    double t{0.0};
};

// Direction reversals of the probe along `axis`, using threshold hysteresis on
// the signed velocity. Each reversal sits at the positional extreme between
// the two confirmed directions.
[[nodiscard]] std::vector<Reversal> detect_reversals(const Trajectory& probe, Vec2 axis, double threshold);

// Both inputs on the same uniform grid (already filtered).
[[nodiscard]] std::vector<PhaseSegment> classify_phases(const Trajectory& probe, const Trajectory& image,
                                                        const PhaseConfig& cfg = {});

[[nodiscard]] LoadingDistanceEstimate estimate_by_phase_designation(const std::vector<PhaseSegment>& segments);

[[nodiscard]] LoadingDistanceEstimate estimate_by_peak_to_peak(double d_r, const PeakToPeak& image_range);

// Peak-to-peak applied stroke by stroke (between consecutive reversals) of a
// multi-cycle line scan, using each stroke's own probe range as d_r.
[[nodiscard]] LoadingDistanceEstimate estimate_line_scan_peak_to_peak(const Trajectory& probe,
                                                                      const Trajectory& image,
                                                                      double threshold);
// Same, with reversals found elsewhere (e.g. on a filtered copy). Each stroke's
// index range is widened by `pad` samples so extremes displaced by filtering
// are still caught.
[[nodiscard]] LoadingDistanceEstimate estimate_line_scan_peak_to_peak(const Trajectory& probe,
                                                                      const Trajectory& image,
                                                                      const std::vector<Reversal>& reversals,
                                                                      std::size_t pad = 0);

struct AnalysisConfig {
    double rate{100.0};   // Hz, common grid
    double window{0.25};  // s, lowpass
    PhaseConfig phase{};
};

struct LineScanAnalysis {
    Vec2 axis{1.0, 0.0};
    Trajectory probe;  // resampled + filtered
    Trajectory image;
    std::vector<PhaseSegment> segments;
    LoadingDistanceEstimate phase_estimate;
    LoadingDistanceEstimate p2p_estimate;
};

// resample -> lowpass -> classify -> both estimators. Peak-to-peak uses the
// resampled, unfiltered positions.
[[nodiscard]] LineScanAnalysis analyze_line_scan(const Trajectory& probe, const Trajectory& image,
                                                 const AnalysisConfig& cfg = {});

// `kind,t_start_s,t_end_s,probe_span_mm`
void write_segments_csv(std::ostream& os, const std::vector<PhaseSegment>& segments);

}  // namespace loadslip

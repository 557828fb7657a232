#pragma once

// Loading-distance measurement by a single preloaded forward-backward stroke,
// run against an abstract scan executor.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "loadslip/geometry.hpp"
#include "loadslip/phase_analysis.hpp"
#include "loadslip/tissue_sim.hpp"
#include "loadslip/trajectory.hpp"

namespace loadslip {

struct Recording {
    Trajectory probe;  // robot-side positions over the recording window
    Trajectory image;  // image-trajectory measurements (frame clock)
};

// Anything that can drag the probe and record the image trajectory.
// Implementations throw Error(ExecutorFault) when motion fails.
class ScanExecutor {
public:
    virtual ~ScanExecutor() = default;

    [[nodiscard]] virtual Vec2 probe_position() const = 0;
    // Accumulated motion time, seconds.
    [[nodiscard]] virtual double elapsed() const = 0;
    virtual void move_to(Vec2 target, double speed) = 0;
    virtual void start_recording() = 0;
    virtual Recording stop_recording() = 0;
};

// Executor backed by the tissue simulator. Commands accumulate into one
// polyline which is re-simulated deterministically whenever data is read, so
// every recording is consistent with the full executed run.
class SimulatedExecutor final : public ScanExecutor {
public:
    SimulatedExecutor(TissueParams params, NoiseConfig noise, SimConfig sim = {}, Vec2 start = {});

    [[nodiscard]] Vec2 probe_position() const override;
    [[nodiscard]] double elapsed() const override;
    void move_to(Vec2 target, double speed) override;
    void start_recording() override;
    Recording stop_recording() override;

    // Everything commanded so far, simulated on the configured clocks.
    [[nodiscard]] SimResult executed() const;
    [[nodiscard]] Trajectory command() const;
    [[nodiscard]] const TissueParams& params() const noexcept { return params_; }

    // Test hook: the n-th move_to from now (0 = next) throws ExecutorFault.
    void inject_fault_after(std::size_t moves) { fault_after_ = moves; }

private:
    TissueParams params_;
    NoiseConfig noise_;
    SimConfig sim_;
    std::vector<Sample> polyline_;
    std::optional<double> recording_since_;
    std::optional<std::size_t> fault_after_;
};

struct ProtocolConfig {
    double speed{0.3};  // mm/s
    double d_i{0.5};    // mm, preload travel is d_i / 2
    double d_r{1.0};    // mm, recorded stroke span
    Vec2 direction{1.0, 0.0};

    void validate() const;
};

enum class ProtocolValidity { Valid, SaturatedRange, PreloadInsufficient };

[[nodiscard]] std::string_view to_string(ProtocolValidity v) noexcept;

struct ProtocolResult {
    LoadingDistanceEstimate estimate;
    Trajectory recorded_image;
    Trajectory recorded_probe;
    double duration{0.0};  // motion time of the whole protocol, s
    ProtocolValidity validity{ProtocolValidity::Valid};
};

// Saturation margin: 5% of d_r / 4.
[[nodiscard]] double saturation_limit(const ProtocolConfig& cfg) noexcept;

// Preload d_i / 2 unrecorded, record +d_r / 2 then -d_r, peak-to-peak along
// the direction, then (d_r - range) / 2.
[[nodiscard]] ProtocolResult run_protocol(ScanExecutor& executor, const ProtocolConfig& cfg = {});

}  // namespace loadslip

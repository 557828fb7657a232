#pragma once

// Synthetic confocal imaging: textures, frame sampling, NCC registration,
// chain integration of frame positions and least-squares refinement.
//
// Pixel convention: column i grows with world x, row j grows against world y
// (row 0 is the top of the frame). A frame's centre is pixel
// ((W - 1) / 2, (H - 1) / 2); W and H are odd for the default geometry.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "loadslip/geometry.hpp"
#include "loadslip/trajectory.hpp"

namespace loadslip {

struct ImagingConfig {
    Vec2 fov{0.240, 0.200};     // mm
    double pixel_pitch{0.0014}; // mm
    double frame_rate{12.0};    // fps

    void validate() const;
    // fov / pitch rounded to nearest: 171 x 143 for the defaults.
    [[nodiscard]] int width() const;
    [[nodiscard]] int height() const;
};

enum class TextureKind { Grid, Blobs };

[[nodiscard]] std::string_view to_string(TextureKind k) noexcept;
[[nodiscard]] TextureKind texture_kind_from_string(std::string_view s);

struct TextureConfig {
    TextureKind kind{TextureKind::Blobs};
    std::uint64_t seed{0};
    double grid_pitch{0.33};  // mm, Grid only
    double line_width{0.020}; // mm, Grid only
    Vec2 min{-0.5, -0.5};     // world bounds, mm
    Vec2 max{1.5, 1.5};
    double texel{0.0014};     // mm
};

// Scalar field on a regular world-aligned texel grid; texel (0, 0) sits at
// `origin` and texel rows grow with world y.
class Texture {
public:
    Texture(Vec2 origin, double texel, int nx, int ny, std::vector<double> values);

    [[nodiscard]] Vec2 origin() const noexcept { return origin_; }
    [[nodiscard]] double texel() const noexcept { return texel_; }
    [[nodiscard]] int nx() const noexcept { return nx_; }
    [[nodiscard]] int ny() const noexcept { return ny_; }
    [[nodiscard]] Vec2 max_corner() const noexcept;
    [[nodiscard]] double at(int i, int j) const { return values_[static_cast<std::size_t>(j) * nx_ + i]; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    [[nodiscard]] bool contains(Vec2 p) const noexcept;
    // Bilinear; throws OutOfBounds outside the texel grid.
    [[nodiscard]] double sample(Vec2 p) const;

private:
    Vec2 origin_;
    double texel_;
    int nx_;
    int ny_;
    std::vector<double> values_;
};

// Grid: dark lines of line_width centred on multiples of grid_pitch along
// both axes. Blobs: seeded white noise smoothed by three box passes of 21
// texels per axis, standardized to mean 0.5, sd 0.15, clamped to [0, 1].
[[nodiscard]] Texture gen_texture(const TextureConfig& cfg);

struct Frame {
    int width{0};
    int height{0};
    std::vector<double> pixels;  // row-major
    Vec2 center{};               // ground truth, mm
    double t{0.0};

    [[nodiscard]] double at(int i, int j) const { return pixels[static_cast<std::size_t>(j) * width + i]; }
};

// World position of pixel (i, j) for a frame centred at `center`.
[[nodiscard]] Vec2 pixel_position(const ImagingConfig& cfg, Vec2 center, double i, double j);

[[nodiscard]] Frame sample_frame(const Texture& tex, Vec2 center, const ImagingConfig& cfg, double t = 0.0);

// Closed circle of diameter `dia` (mm) traversed counter-clockwise at `speed`
// from its bottom point, sampled on the frame clock; the last sample closes
// the loop.
[[nodiscard]] Trajectory circle_path(double dia, double speed, double rate_hz, Vec2 centre = {});

// One frame per trajectory sample.
[[nodiscard]] std::vector<Frame> acquire_frames(const Texture& tex, const Trajectory& centers,
                                                const ImagingConfig& cfg);

struct NccResult {
    int dx{0};  // pixels, b(i, j) ~ a(i + dx, j + dy)
    int dy{0};
    double score{-1.0};
    double sub_dx{0.0};  // parabolic refinement (equal to dx, dy unless requested)
    double sub_dy{0.0};
};

struct NccOptions {
    bool subpixel{false};
};

// Exhaustive zero-mean NCC over the valid overlap for every integer shift in
// [-max_shift, max_shift]^2. max_shift must be < 50% of both frame sides.
// Ties: smallest |shift|, then dx, then dy.
[[nodiscard]] NccResult ncc_translation(const Frame& a, const Frame& b, int max_shift, NccOptions opt = {});

// Same search restricted to a window of `radius` around a predicted shift.
// Shifts leaving less than 10% overlap are skipped.
[[nodiscard]] NccResult ncc_translation_near(const Frame& a, const Frame& b, int pred_dx, int pred_dy, int radius,
                                             NccOptions opt = {});

// Correlation at one shift computed directly over the overlap.
[[nodiscard]] double ncc_score(const Frame& a, const Frame& b, int dx, int dy);

enum class LayoutProvenance { Online, Refined, GroundTruth };

[[nodiscard]] std::string_view to_string(LayoutProvenance p) noexcept;

struct MosaicLayout {
    std::vector<Vec2> positions;
    LayoutProvenance provenance{LayoutProvenance::Online};
};

[[nodiscard]] MosaicLayout ground_truth_layout(const std::vector<Frame>& frames);

struct OnlineConfig {
    int max_shift{60};
    double min_score{0.5};
};

// Pixel shift -> world displacement of b's centre relative to a's.
[[nodiscard]] Vec2 shift_to_world(double dx, double dy, double pitch) noexcept;

// position(0) = origin; position(k) = position(k - 1) + world(ncc(k - 1, k)).
// Throws RegistrationFailure (with the frame indices) when a score is below min_score.
[[nodiscard]] MosaicLayout online_integrate(const std::vector<Frame>& frames, const ImagingConfig& cfg,
                                            Vec2 origin = {}, const OnlineConfig& ocfg = {});

struct FramePair {
    std::size_t i{0};
    std::size_t j{0};
};

// Non-adjacent pairs (j - i >= min_index_gap) whose layout centres are closer
// than `fraction` of the FOV along both axes.
[[nodiscard]] std::vector<FramePair> discover_pairs(const MosaicLayout& layout, const ImagingConfig& cfg,
                                                    std::size_t min_index_gap = 2, double fraction = 0.6);

struct PairConstraint {
    std::size_t i{0};
    std::size_t j{0};
    Vec2 offset{};  // measured position(j) - position(i), mm
    double score{1.0};
};

// Sum over constraints of |p_j - p_i - offset|^2.
[[nodiscard]] double constraint_residual(const std::vector<Vec2>& positions,
                                         const std::vector<PairConstraint>& constraints);

// Linear least squares over the constraint graph with position(anchor_index)
// held at `anchor`. Throws UnderConstrained if some frame is not connected.
[[nodiscard]] std::vector<Vec2> solve_layout(std::size_t n, const std::vector<PairConstraint>& constraints,
                                             Vec2 anchor, std::size_t anchor_index = 0);

struct RefineConfig {
    int search_radius{8};  // pixels around the layout-predicted shift
    double min_score{0.5};
};

struct RefineResult {
    MosaicLayout layout;
    std::vector<PairConstraint> constraints;
    double initial_residual{0.0};
    double final_residual{0.0};
};

// Chain constraints plus extra pairs, re-registered around the layout's
// prediction; pairs below min_score are dropped. Anchored at frame 0.
[[nodiscard]] RefineResult offline_refine(const MosaicLayout& layout, const std::vector<Frame>& frames,
                                          const std::vector<FramePair>& extra_pairs, const ImagingConfig& cfg,
                                          const RefineConfig& rcfg = {});

struct MosaicImage {
    int width{0};
    int height{0};
    double pitch{0.0};
    Vec2 top_left{};  // world position of pixel (0, 0)
    std::vector<double> pixels;
    std::vector<int> counts;

    [[nodiscard]] double at(int i, int j) const { return pixels[static_cast<std::size_t>(j) * width + i]; }
};

// Frames placed at layout positions on a canvas of the frame pitch,
// overlapping pixels averaged; uncovered pixels are 0 with count 0.
[[nodiscard]] MosaicImage render_mosaic(const std::vector<Frame>& frames, const MosaicLayout& layout,
                                        const ImagingConfig& cfg);

// Mean spacing of dark lines perpendicular to the x axis (axis 0) or the y
// axis (axis 1), in mm.
[[nodiscard]] double measure_grid_pitch(const MosaicImage& image, int axis = 0);

void write_pgm(std::ostream& os, int width, int height, const std::vector<double>& pixels);
void write_pgm(const std::string& path, int width, int height, const std::vector<double>& pixels);
void write_layout_csv(std::ostream& os, const MosaicLayout& layout);
void write_layout_csv(const std::string& path, const MosaicLayout& layout);

}  // namespace loadslip

#include "loadslip/mosaic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <tuple>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "loadslip/error.hpp"
#include "loadslip/rng.hpp"
#include "loadslip/text.hpp"
#include "loadslip/tissue_sim.hpp"

namespace loadslip {

void ImagingConfig::validate() const {
    if (!(pixel_pitch > 0.0) || !(fov.x > 0.0) || !(fov.y > 0.0) || !(frame_rate > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "imaging fov, pitch and frame rate must be > 0");
    }
    if (width() < 3 || height() < 3) throw Error(ErrorCode::InvalidConfig, "frame smaller than 3x3 pixels");
}

int ImagingConfig::width() const { return static_cast<int>(std::lround(fov.x / pixel_pitch)); }
int ImagingConfig::height() const { return static_cast<int>(std::lround(fov.y / pixel_pitch)); }

std::string_view to_string(TextureKind k) noexcept { return k == TextureKind::Grid ? "grid" : "blobs"; }

TextureKind texture_kind_from_string(std::string_view s) {
    if (s == "grid") return TextureKind::Grid;
    if (s == "blobs") return TextureKind::Blobs;
    throw Error(ErrorCode::InvalidConfig, "unknown texture kind: " + std::string(s));
}

std::string_view to_string(LayoutProvenance p) noexcept {
    switch (p) {
        case LayoutProvenance::Online: return "Online";
        case LayoutProvenance::Refined: return "Refined";
        case LayoutProvenance::GroundTruth: return "GroundTruth";
    }
    return "?";
}

// ---------------------------------------------------------------- texture

Texture::Texture(Vec2 origin, double texel, int nx, int ny, std::vector<double> values)
    : origin_(origin), texel_(texel), nx_(nx), ny_(ny), values_(std::move(values)) {
    if (!(texel > 0.0) || nx < 2 || ny < 2 || values_.size() != static_cast<std::size_t>(nx) * ny) {
        throw Error(ErrorCode::InvalidConfig, "texture grid is inconsistent");
    }
}

Vec2 Texture::max_corner() const noexcept { return origin_ + Vec2{(nx_ - 1) * texel_, (ny_ - 1) * texel_}; }

bool Texture::contains(Vec2 p) const noexcept {
    const Vec2 hi = max_corner();
    constexpr double eps = 1e-9;
    return p.x >= origin_.x - eps && p.y >= origin_.y - eps && p.x <= hi.x + eps && p.y <= hi.y + eps;
}

double Texture::sample(Vec2 p) const {
    if (!contains(p)) throw Error(ErrorCode::OutOfBounds, "texture sample outside bounds");
    const double u = std::clamp((p.x - origin_.x) / texel_, 0.0, static_cast<double>(nx_ - 1));
    const double v = std::clamp((p.y - origin_.y) / texel_, 0.0, static_cast<double>(ny_ - 1));
    const int i = std::min(static_cast<int>(u), nx_ - 2);
    const int j = std::min(static_cast<int>(v), ny_ - 2);
    const double fu = u - i;
    const double fv = v - j;
    const double a = at(i, j) + fu * (at(i + 1, j) - at(i, j));
    const double b = at(i, j + 1) + fu * (at(i + 1, j + 1) - at(i, j + 1));
    return a + fv * (b - a);
}

namespace {

void box_blur_rows(std::vector<double>& v, int nx, int ny, int width) {
    const int half = width / 2;
    std::vector<double> row(static_cast<std::size_t>(nx));
    for (int j = 0; j < ny; ++j) {
        double* r = v.data() + static_cast<std::size_t>(j) * nx;
        std::copy(r, r + nx, row.begin());
        auto px = [&](int i) { return row[static_cast<std::size_t>(std::clamp(i, 0, nx - 1))]; };
        double sum = 0.0;
        for (int k = -half; k <= half; ++k) sum += px(k);
        for (int i = 0; i < nx; ++i) {
            r[i] = sum / width;
            sum += px(i + half + 1) - px(i - half);
        }
    }
}

std::vector<double> transpose(const std::vector<double>& v, int nx, int ny) {
    std::vector<double> t(v.size());
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) t[static_cast<std::size_t>(i) * ny + j] = v[static_cast<std::size_t>(j) * nx + i];
    }
    return t;
}

}  // namespace

Texture gen_texture(const TextureConfig& cfg) {
    if (!(cfg.texel > 0.0) || !(cfg.max.x > cfg.min.x) || !(cfg.max.y > cfg.min.y)) {
        throw Error(ErrorCode::InvalidConfig, "texture bounds and texel must be positive");
    }
    const int nx = static_cast<int>(std::ceil((cfg.max.x - cfg.min.x) / cfg.texel - 1e-9)) + 1;
    const int ny = static_cast<int>(std::ceil((cfg.max.y - cfg.min.y) / cfg.texel - 1e-9)) + 1;
    std::vector<double> v(static_cast<std::size_t>(nx) * ny);

    if (cfg.kind == TextureKind::Grid) {
        if (!(cfg.grid_pitch > 0.0) || !std::isfinite(cfg.grid_pitch)) throw Error(ErrorCode::InvalidPitch, "grid pitch must be > 0");
        if (!(cfg.line_width > 0.0) || cfg.line_width >= cfg.grid_pitch) {
            throw Error(ErrorCode::InvalidPitch, "line width must be in (0, pitch)");
        }
        auto on_line = [&](double c) {
            const double r = c - cfg.grid_pitch * std::round(c / cfg.grid_pitch);
            return std::abs(r) < 0.5 * cfg.line_width;
        };
        for (int j = 0; j < ny; ++j) {
            const bool row_dark = on_line(cfg.min.y + j * cfg.texel);
            for (int i = 0; i < nx; ++i) {
                const bool dark = row_dark || on_line(cfg.min.x + i * cfg.texel);
                v[static_cast<std::size_t>(j) * nx + i] = dark ? 0.1 : 0.9;
            }
        }
        return Texture(cfg.min, cfg.texel, nx, ny, std::move(v));
    }

    Rng rng(channel_seed(cfg.seed, NoiseChannel::Texture));
    for (double& x : v) x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    constexpr int kBlur = 21;
    for (int pass = 0; pass < 3; ++pass) box_blur_rows(v, nx, ny, kBlur);
    v = transpose(v, nx, ny);
    for (int pass = 0; pass < 3; ++pass) box_blur_rows(v, ny, nx, kBlur);
    v = transpose(v, ny, nx);

    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (double& x : v) x = std::clamp(0.5 + 0.15 * (x - mean) / sd, 0.0, 1.0);
    return Texture(cfg.min, cfg.texel, nx, ny, std::move(v));
}

// ---------------------------------------------------------------- frames

Vec2 pixel_position(const ImagingConfig& cfg, Vec2 center, double i, double j) {
    const double cx = (cfg.width() - 1) / 2.0;
    const double cy = (cfg.height() - 1) / 2.0;
    return {center.x + (i - cx) * cfg.pixel_pitch, center.y - (j - cy) * cfg.pixel_pitch};
}

Frame sample_frame(const Texture& tex, Vec2 center, const ImagingConfig& cfg, double t) {
    cfg.validate();
    Frame f;
    f.width = cfg.width();
    f.height = cfg.height();
    f.center = center;
    f.t = t;
    if (!tex.contains(pixel_position(cfg, center, 0, 0)) ||
        !tex.contains(pixel_position(cfg, center, f.width - 1, f.height - 1))) {
        throw Error(ErrorCode::OutOfBounds, "frame footprint leaves the texture");
    }
    f.pixels.resize(static_cast<std::size_t>(f.width) * f.height);
    for (int j = 0; j < f.height; ++j) {
        for (int i = 0; i < f.width; ++i) {
            f.pixels[static_cast<std::size_t>(j) * f.width + i] = tex.sample(pixel_position(cfg, center, i, j));
        }
    }
    return f;
}

Trajectory circle_path(double dia, double speed, double rate_hz, Vec2 centre) {
    if (!(dia > 0.0) || !(speed > 0.0) || !(rate_hz > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "circle needs positive diameter, speed and rate");
    }
    const double r = dia / 2.0;
    const double period = std::numbers::pi * dia / speed;
    std::vector<Sample> s;
    for (double t : frame_clock(0.0, period, rate_hz)) {
        const double a = 2.0 * std::numbers::pi * t / period - std::numbers::pi / 2.0;
        s.push_back({t, centre.x + r * std::cos(a), centre.y + r * std::sin(a)});
    }
    return Trajectory(std::move(s));
}

std::vector<Frame> acquire_frames(const Texture& tex, const Trajectory& centers, const ImagingConfig& cfg) {
    std::vector<Frame> out;
    out.reserve(centers.size());
    for (const auto& s : centers.samples()) out.push_back(sample_frame(tex, s.pos(), cfg, s.t));
    return out;
}

// ---------------------------------------------------------------- NCC

namespace {

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanGuard {
    fftw_plan p;
    ~PlanGuard() { fftw_destroy_plan(p); }
};

int smooth_size(int n) {
    for (int m = n;; ++m) {
        int r = m;
        for (int f : {2, 3, 5, 7}) {
            while (r % f == 0) r /= f;
        }
        if (r == 1) return m;
    }
}

bool is_flat(const Frame& f) {
    const auto [lo, hi] = std::minmax_element(f.pixels.begin(), f.pixels.end());
    return *lo == *hi;
}

void check_pair(const Frame& a, const Frame& b) {
    if (a.width != b.width || a.height != b.height || a.pixels.empty()) {
        throw Error(ErrorCode::GridMismatch, "frames differ in size");
    }
    if (is_flat(a) || is_flat(b)) throw Error(ErrorCode::FlatFrame, "frame has zero intensity variance");
}

// Summed-area table with a zero first row and column.
class Integral {
public:
    Integral(const Frame& f, bool squared) : w_(f.width), h_(f.height), s_(static_cast<std::size_t>(w_ + 1) * (h_ + 1)) {
        for (int j = 0; j < h_; ++j) {
            double row = 0.0;
            for (int i = 0; i < w_; ++i) {
                const double v = f.at(i, j);
                row += squared ? v * v : v;
                s_[idx(i + 1, j + 1)] = s_[idx(i + 1, j)] + row;
            }
        }
    }
    // Sum over [i0, i1) x [j0, j1).
    [[nodiscard]] double sum(int i0, int i1, int j0, int j1) const {
        return s_[idx(i1, j1)] - s_[idx(i0, j1)] - s_[idx(i1, j0)] + s_[idx(i0, j0)];
    }

private:
    [[nodiscard]] std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * (w_ + 1) + i; }
    int w_;
    int h_;
    std::vector<double> s_;
};

struct Overlap {
    int ai0, ai1, aj0, aj1;  // region in a
    int bi0, bi1, bj0, bj1;  // region in b
    [[nodiscard]] long count() const { return static_cast<long>(ai1 - ai0) * (aj1 - aj0); }
};

Overlap overlap(int w, int h, int dx, int dy) {
    Overlap o{};
    o.bi0 = std::max(0, -dx);
    o.bi1 = std::min(w, w - dx);
    o.bj0 = std::max(0, -dy);
    o.bj1 = std::min(h, h - dy);
    o.ai0 = o.bi0 + dx;
    o.ai1 = o.bi1 + dx;
    o.aj0 = o.bj0 + dy;
    o.aj1 = o.bj1 + dy;
    return o;
}

struct ScoreGrid {
    int dx0, dy0, nx, ny;
    std::vector<double> s;  // -inf where undefined
    [[nodiscard]] double at(int dx, int dy) const {
        return s[static_cast<std::size_t>(dy - dy0) * nx + (dx - dx0)];
    }
};

// NCC for every shift in [dx0, dx1] x [dy0, dy1] via one FFT cross-correlation
// and summed-area tables for the overlap moments.
ScoreGrid score_grid(const Frame& a, const Frame& b, int dx0, int dx1, int dy0, int dy1, long min_overlap) {
    const int w = a.width;
    const int h = a.height;
    const int mx = std::max(std::abs(dx0), std::abs(dx1));
    const int my = std::max(std::abs(dy0), std::abs(dy1));
    const int px = smooth_size(w + mx);
    const int py = smooth_size(h + my);
    const int pxc = px / 2 + 1;
    const auto nreal = static_cast<std::size_t>(px) * py;
    const auto ncplx = static_cast<std::size_t>(pxc) * py;

    std::unique_ptr<double, FftwFree> ra(fftw_alloc_real(nreal));
    std::unique_ptr<double, FftwFree> rb(fftw_alloc_real(nreal));
    std::unique_ptr<fftw_complex, FftwFree> ca(fftw_alloc_complex(ncplx));
    std::unique_ptr<fftw_complex, FftwFree> cb(fftw_alloc_complex(ncplx));
    PlanGuard fa{fftw_plan_dft_r2c_2d(py, px, ra.get(), ca.get(), FFTW_ESTIMATE)};
    PlanGuard fb{fftw_plan_dft_r2c_2d(py, px, rb.get(), cb.get(), FFTW_ESTIMATE)};
    PlanGuard inv{fftw_plan_dft_c2r_2d(py, px, ca.get(), ra.get(), FFTW_ESTIMATE)};

    std::fill(ra.get(), ra.get() + nreal, 0.0);
    std::fill(rb.get(), rb.get() + nreal, 0.0);
    for (int j = 0; j < h; ++j) {
        for (int i = 0; i < w; ++i) {
            ra.get()[static_cast<std::size_t>(j) * px + i] = a.at(i, j);
            rb.get()[static_cast<std::size_t>(j) * px + i] = b.at(i, j);
        }
    }
    fftw_execute(fa.p);
    fftw_execute(fb.p);
    for (std::size_t k = 0; k < ncplx; ++k) {
        const std::complex<double> za(ca.get()[k][0], ca.get()[k][1]);
        const std::complex<double> zb(cb.get()[k][0], cb.get()[k][1]);
        const auto z = za * std::conj(zb);
        ca.get()[k][0] = z.real();
        ca.get()[k][1] = z.imag();
    }
    fftw_execute(inv.p);
    const double norm = 1.0 / static_cast<double>(nreal);

    const Integral ia(a, false), iaa(a, true), ib(b, false), ibb(b, true);
    ScoreGrid g{dx0, dy0, dx1 - dx0 + 1, dy1 - dy0 + 1, {}};
    g.s.assign(static_cast<std::size_t>(g.nx) * g.ny, -std::numeric_limits<double>::infinity());
    for (int dy = dy0; dy <= dy1; ++dy) {
        for (int dx = dx0; dx <= dx1; ++dx) {
            const Overlap o = overlap(w, h, dx, dy);
            if (o.bi1 <= o.bi0 || o.bj1 <= o.bj0 || o.count() < min_overlap) continue;
            const double n = static_cast<double>(o.count());
            const int ci = (dx % px + px) % px;
            const int cj = (dy % py + py) % py;
            const double sab = ra.get()[static_cast<std::size_t>(cj) * px + ci] * norm;
            const double sa = ia.sum(o.ai0, o.ai1, o.aj0, o.aj1);
            const double sb = ib.sum(o.bi0, o.bi1, o.bj0, o.bj1);
            const double va = iaa.sum(o.ai0, o.ai1, o.aj0, o.aj1) - sa * sa / n;
            const double vb = ibb.sum(o.bi0, o.bi1, o.bj0, o.bj1) - sb * sb / n;
            if (!(va > 1e-12 * n) || !(vb > 1e-12 * n)) continue;
            g.s[static_cast<std::size_t>(dy - dy0) * g.nx + (dx - dx0)] = (sab - sa * sb / n) / std::sqrt(va * vb);
        }
    }
    return g;
}

double direct_score(const Frame& a, const Frame& b, int dx, int dy) {
    const Overlap o = overlap(a.width, a.height, dx, dy);
    if (o.bi1 <= o.bi0 || o.bj1 <= o.bj0) return -std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(o.count());
    double ma = 0.0;
    double mb = 0.0;
    for (int j = o.bj0; j < o.bj1; ++j) {
        for (int i = o.bi0; i < o.bi1; ++i) {
            ma += a.at(i + dx, j + dy);
            mb += b.at(i, j);
        }
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (int j = o.bj0; j < o.bj1; ++j) {
        for (int i = o.bi0; i < o.bi1; ++i) {
            const double da = a.at(i + dx, j + dy) - ma;
            const double db = b.at(i, j) - mb;
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double parabola_offset(double sm, double s0, double sp) {
    const double den = sm - 2.0 * s0 + sp;
    if (!std::isfinite(sm) || !std::isfinite(sp) || !(den < 0.0)) return 0.0;
    return std::clamp(0.5 * (sm - sp) / den, -0.5, 0.5);
}

NccResult search(const Frame& a, const Frame& b, int dx0, int dx1, int dy0, int dy1, long min_overlap, NccOptions opt) {
    const ScoreGrid g = score_grid(a, b, dx0, dx1, dy0, dy1, min_overlap);
    const double best = *std::max_element(g.s.begin(), g.s.end());
    if (!std::isfinite(best)) throw Error(ErrorCode::RegistrationFailure, "no shift with a defined correlation");

    // FFT scores find the neighbourhood of the maximum; the decision between
    // near-equal candidates is made on directly computed scores.
    NccResult r;
    auto key = [](double s, int dx, int dy) { return std::make_tuple(-s, dx * dx + dy * dy, dx, dy); };
    bool have = false;
    for (int dy = dy0; dy <= dy1; ++dy) {
        for (int dx = dx0; dx <= dx1; ++dx) {
            if (!(g.at(dx, dy) >= best - 1e-9)) continue;
            const double s = direct_score(a, b, dx, dy);
            if (!have || key(s, dx, dy) < key(r.score, r.dx, r.dy)) {
                r.dx = dx;
                r.dy = dy;
                r.score = s;
                have = true;
            }
        }
    }
    r.sub_dx = r.dx;
    r.sub_dy = r.dy;
    if (opt.subpixel) {
        auto s_at = [&](int dx, int dy) {
            if (dx < dx0 || dx > dx1 || dy < dy0 || dy > dy1) return -std::numeric_limits<double>::infinity();
            return direct_score(a, b, dx, dy);
        };
        r.sub_dx += parabola_offset(s_at(r.dx - 1, r.dy), r.score, s_at(r.dx + 1, r.dy));
        r.sub_dy += parabola_offset(s_at(r.dx, r.dy - 1), r.score, s_at(r.dx, r.dy + 1));
    }
    return r;
}

}  // namespace

double ncc_score(const Frame& a, const Frame& b, int dx, int dy) {
    check_pair(a, b);
    return direct_score(a, b, dx, dy);
}

NccResult ncc_translation(const Frame& a, const Frame& b, int max_shift, NccOptions opt) {
    check_pair(a, b);
    if (max_shift < 0 || 2 * max_shift >= std::min(a.width, a.height)) {
        throw Error(ErrorCode::InvalidConfig, "max_shift must be below half the frame size");
    }
    return search(a, b, -max_shift, max_shift, -max_shift, max_shift, 1, opt);
}

NccResult ncc_translation_near(const Frame& a, const Frame& b, int pred_dx, int pred_dy, int radius, NccOptions opt) {
    check_pair(a, b);
    if (radius < 0) throw Error(ErrorCode::InvalidConfig, "search radius must be >= 0");
    const int wx = a.width - 1;
    const int wy = a.height - 1;
    const int dx0 = std::clamp(pred_dx - radius, -wx, wx);
    const int dx1 = std::clamp(pred_dx + radius, -wx, wx);
    const int dy0 = std::clamp(pred_dy - radius, -wy, wy);
    const int dy1 = std::clamp(pred_dy + radius, -wy, wy);
    const long min_overlap = static_cast<long>(0.1 * a.width * a.height);
    return search(a, b, dx0, dx1, dy0, dy1, min_overlap, opt);
}

// ---------------------------------------------------------------- layouts

MosaicLayout ground_truth_layout(const std::vector<Frame>& frames) {
    MosaicLayout l{{}, LayoutProvenance::GroundTruth};
    for (const auto& f : frames) l.positions.push_back(f.center);
    return l;
}

Vec2 shift_to_world(double dx, double dy, double pitch) noexcept { return {dx * pitch, -dy * pitch}; }

MosaicLayout online_integrate(const std::vector<Frame>& frames, const ImagingConfig& cfg, Vec2 origin,
                              const OnlineConfig& ocfg) {
    cfg.validate();
    if (frames.empty()) throw Error(ErrorCode::EmptyTrajectory, "no frames to integrate");
    MosaicLayout l{{origin}, LayoutProvenance::Online};
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const NccResult r = ncc_translation(frames[k - 1], frames[k], ocfg.max_shift);
        if (r.score < ocfg.min_score) {
            throw Error(ErrorCode::RegistrationFailure, "frames " + std::to_string(k - 1) + " -> " + std::to_string(k) +
                                                            ": score " + format_double(r.score, 4) + " below threshold");
        }
        l.positions.push_back(l.positions.back() + shift_to_world(r.dx, r.dy, cfg.pixel_pitch));
    }
    return l;
}

std::vector<FramePair> discover_pairs(const MosaicLayout& layout, const ImagingConfig& cfg, std::size_t min_index_gap,
                                      double fraction) {
    const auto& p = layout.positions;
    std::vector<FramePair> out;
    const std::size_t gap = std::max<std::size_t>(min_index_gap, 1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = i + gap; j < p.size(); ++j) {
            const Vec2 d = p[j] - p[i];
            if (std::abs(d.x) < fraction * cfg.fov.x && std::abs(d.y) < fraction * cfg.fov.y) out.push_back({i, j});
        }
    }
    return out;
}

double constraint_residual(const std::vector<Vec2>& positions, const std::vector<PairConstraint>& constraints) {
    double r = 0.0;
    for (const auto& c : constraints) {
        const Vec2 e = positions.at(c.j) - positions.at(c.i) - c.offset;
        r += dot(e, e);
    }
    return r;
}

std::vector<Vec2> solve_layout(std::size_t n, const std::vector<PairConstraint>& constraints, Vec2 anchor,
                               std::size_t anchor_index) {
    if (n == 0 || anchor_index >= n) throw Error(ErrorCode::InvalidConfig, "anchor outside the layout");
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& c : constraints) {
        if (c.i >= n || c.j >= n || c.i == c.j) throw Error(ErrorCode::InvalidConfig, "constraint indices invalid");
        parent[find(c.i)] = find(c.j);
    }
    const std::size_t root = find(anchor_index);
    for (std::size_t k = 0; k < n; ++k) {
        if (find(k) != root) throw Error(ErrorCode::UnderConstrained, "frame " + std::to_string(k) + " is not connected");
    }

    std::vector<Vec2> out(n, anchor);
    if (n == 1) return out;
    // Unknown index of each frame, the anchor excluded.
    auto unk = [&](std::size_t k) { return static_cast<int>(k < anchor_index ? k : k - 1); };
    const int m = static_cast<int>(n - 1);
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 2);
    for (const auto& c : constraints) {
        const bool fi = c.i == anchor_index;
        const bool fj = c.j == anchor_index;
        if (!fi) trips.emplace_back(unk(c.i), unk(c.i), 1.0);
        if (!fj) trips.emplace_back(unk(c.j), unk(c.j), 1.0);
        if (!fi && !fj) {
            trips.emplace_back(unk(c.i), unk(c.j), -1.0);
            trips.emplace_back(unk(c.j), unk(c.i), -1.0);
        }
        // p_j - p_i = o
        if (!fj) {
            rhs(unk(c.j), 0) += c.offset.x + (fi ? anchor.x : 0.0);
            rhs(unk(c.j), 1) += c.offset.y + (fi ? anchor.y : 0.0);
        }
        if (!fi) {
            rhs(unk(c.i), 0) += -c.offset.x + (fj ? anchor.x : 0.0);
            rhs(unk(c.i), 1) += -c.offset.y + (fj ? anchor.y : 0.0);
        }
    }
    Eigen::SparseMatrix<double> L(m, m);
    L.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(L);
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::UnderConstrained, "layout normal equations are singular");
    const Eigen::MatrixXd x = solver.solve(rhs);
    for (std::size_t k = 0; k < n; ++k) {
        if (k == anchor_index) continue;
        out[k] = {x(unk(k), 0), x(unk(k), 1)};
    }
    return out;
}

RefineResult offline_refine(const MosaicLayout& layout, const std::vector<Frame>& frames,
                            const std::vector<FramePair>& extra_pairs, const ImagingConfig& cfg, const RefineConfig& rcfg) {
    cfg.validate();
    if (layout.positions.size() != frames.size() || frames.empty()) {
        throw Error(ErrorCode::GridMismatch, "layout and frames differ in length");
    }
    const double p = cfg.pixel_pitch;
    std::vector<FramePair> pairs;
    for (std::size_t k = 1; k < frames.size(); ++k) pairs.push_back({k - 1, k});
    pairs.insert(pairs.end(), extra_pairs.begin(), extra_pairs.end());

    RefineResult out;
    for (const auto& pr : pairs) {
        const Vec2 d = layout.positions.at(pr.j) - layout.positions.at(pr.i);
        const int px = static_cast<int>(std::lround(d.x / p));
        const int py = static_cast<int>(std::lround(-d.y / p));
        NccResult r;
        try {
            r = ncc_translation_near(frames[pr.i], frames[pr.j], px, py, rcfg.search_radius);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RegistrationFailure) throw;
            continue;
        }
        if (r.score < rcfg.min_score) continue;
        out.constraints.push_back({pr.i, pr.j, shift_to_world(r.dx, r.dy, p), r.score});
    }
    out.initial_residual = constraint_residual(layout.positions, out.constraints);
    auto solved = solve_layout(frames.size(), out.constraints, layout.positions.front());
    out.final_residual = constraint_residual(solved, out.constraints);
    if (out.final_residual > out.initial_residual) {
        solved = layout.positions;
        out.final_residual = out.initial_residual;
    }
    out.layout = {std::move(solved), LayoutProvenance::Refined};
    return out;
}

// ---------------------------------------------------------------- rendering

MosaicImage render_mosaic(const std::vector<Frame>& frames, const MosaicLayout& layout, const ImagingConfig& cfg) {
    cfg.validate();
    if (frames.empty() || layout.positions.size() != frames.size()) {
        throw Error(ErrorCode::GridMismatch, "layout and frames differ in length");
    }
    const double p = cfg.pixel_pitch;
    const int w = frames.front().width;
    const int h = frames.front().height;
    const double hx = (w - 1) / 2.0 * p;
    const double hy = (h - 1) / 2.0 * p;
    double x0 = std::numeric_limits<double>::infinity();
    double y1 = -x0;
    double x1 = -x0;
    double y0 = x0;
    for (const Vec2& c : layout.positions) {
        if (!std::isfinite(c.x) || !std::isfinite(c.y)) throw Error(ErrorCode::NonFinite, "layout position not finite");
        x0 = std::min(x0, c.x - hx);
        x1 = std::max(x1, c.x + hx);
        y0 = std::min(y0, c.y - hy);
        y1 = std::max(y1, c.y + hy);
    }
    MosaicImage img;
    img.pitch = p;
    img.top_left = {x0, y1};
    img.width = static_cast<int>(std::lround((x1 - x0) / p)) + 1;
    img.height = static_cast<int>(std::lround((y1 - y0) / p)) + 1;
    const auto npx = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.assign(npx, 0.0);
    img.counts.assign(npx, 0);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const Frame& f = frames[k];
        if (f.width != w || f.height != h) throw Error(ErrorCode::GridMismatch, "frames differ in size");
        const Vec2 c = layout.positions[k];
        const int c0 = static_cast<int>(std::lround((c.x - hx - x0) / p));
        const int r0 = static_cast<int>(std::lround((y1 - (c.y + hy)) / p));
        for (int j = 0; j < h; ++j) {
            const int r = r0 + j;
            if (r < 0 || r >= img.height) continue;
            for (int i = 0; i < w; ++i) {
                const int col = c0 + i;
                if (col < 0 || col >= img.width) continue;
                const auto idx = static_cast<std::size_t>(r) * img.width + col;
                img.pixels[idx] += f.at(i, j);
                ++img.counts[idx];
            }
        }
    }
    for (std::size_t k = 0; k < npx; ++k) {
        if (img.counts[k] > 0) img.pixels[k] /= img.counts[k];
    }
    return img;
}

double measure_grid_pitch(const MosaicImage& image, int axis) {
    if (axis != 0 && axis != 1) throw Error(ErrorCode::InvalidConfig, "axis must be 0 or 1");
    const int n = axis == 0 ? image.width : image.height;
    const int m = axis == 0 ? image.height : image.width;
    std::vector<double> profile(static_cast<std::size_t>(n), std::nan(""));
    for (int a = 0; a < n; ++a) {
        double sum = 0.0;
        int cnt = 0;
        for (int b = 0; b < m; ++b) {
            const int i = axis == 0 ? a : b;
            const int j = axis == 0 ? b : a;
            const auto idx = static_cast<std::size_t>(j) * image.width + i;
            if (image.counts[idx] > 0) {
                sum += image.pixels[idx];
                ++cnt;
            }
        }
        if (cnt > 0) profile[static_cast<std::size_t>(a)] = sum / cnt;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : profile) {
        if (std::isnan(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw Error(ErrorCode::InvalidRange, "mosaic has no contrast");
    const double thr = 0.5 * (lo + hi);

    std::vector<double> centres;
    int a = 0;
    while (a < n) {
        if (std::isnan(profile[a]) || profile[a] >= thr) {
            ++a;
            continue;
        }
        const int start = a;
        double wsum = 0.0;
        double csum = 0.0;
        while (a < n && !std::isnan(profile[a]) && profile[a] < thr) {
            const double wgt = thr - profile[a];
            wsum += wgt;
            csum += wgt * a;
            ++a;
        }
        // Runs cut by the canvas edge or an uncovered band give biased centres.
        const bool cut = start == 0 || std::isnan(profile[start - 1]) || a == n || std::isnan(profile[a]);
        if (!cut) centres.push_back(csum / wsum);
    }
    if (centres.size() < 2) throw Error(ErrorCode::InvalidRange, "fewer than two grid lines in the mosaic");
    return (centres.back() - centres.front()) / static_cast<double>(centres.size() - 1) * image.pitch;
}

// ---------------------------------------------------------------- output

void write_pgm(std::ostream& os, int width, int height, const std::vector<double>& pixels) {
    if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorCode::InvalidConfig, "pixel buffer does not match the image size");
    }
    os << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> bytes(pixels.size());
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        bytes[k] = static_cast<unsigned char>(std::lround(std::clamp(pixels[k], 0.0, 1.0) * 255.0));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const std::string& path, int width, int height, const std::vector<double>& pixels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + path);
    write_pgm(os, width, height, pixels);
}

void write_layout_csv(std::ostream& os, const MosaicLayout& layout) {
    os << "frame_idx,x_mm,y_mm,provenance\n";
    for (std::size_t k = 0; k < layout.positions.size(); ++k) {
        os << k << ',' << format_double(layout.positions[k].x) << ',' << format_double(layout.positions[k].y) << ','
           << to_string(layout.provenance) << '\n';
    }
}

void write_layout_csv(const std::string& path, const MosaicLayout& layout) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + path);
    write_layout_csv(os, layout);
}

}  // namespace loadslip

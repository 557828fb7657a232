#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "loadslip/error.hpp"
#include "loadslip/mosaic.hpp"
#include "loadslip/scan_planner.hpp"
#include "loadslip/tissue_sim.hpp"

using namespace loadslip;

namespace {

const Texture& blobs() {
    static const Texture tex = [] {
        TextureConfig c;
        c.seed = 11;
        c.min = {-0.7, -0.7};
        c.max = {0.7, 0.7};
        return gen_texture(c);
    }();
    return tex;
}

Frame shifted(const Texture& tex, const ImagingConfig& cfg, Vec2 c, int px, int py_up) {
    return sample_frame(tex, c + Vec2{px * cfg.pixel_pitch, py_up * cfg.pixel_pitch}, cfg);
}

// Closed circle of diameter `dia` starting at its bottom point, one frame
// every 1 / fps plus the closing frame.
Trajectory circle(double dia, double speed, double fps, Vec2 centre = {}) {
    const double r = dia / 2.0;
    const double period = std::numbers::pi * dia / speed;
    std::vector<Sample> s;
    for (double t : frame_clock(0.0, period, fps)) {
        const double a = 2.0 * std::numbers::pi * t / period - std::numbers::pi / 2.0;
        s.push_back({t, centre.x + r * std::cos(a), centre.y + r * std::sin(a)});
    }
    return Trajectory(std::move(s));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Imaging, PixelGrid) {
    const ImagingConfig cfg;
    EXPECT_EQ(cfg.width(), 171);
    EXPECT_EQ(cfg.height(), 143);
    const Vec2 c = pixel_position(cfg, {1.0, 2.0}, 85, 71);
    EXPECT_DOUBLE_EQ(c.x, 1.0);
    EXPECT_DOUBLE_EQ(c.y, 2.0);
    // Row 0 is the top edge.
    EXPECT_GT(pixel_position(cfg, {0.0, 0.0}, 0, 0).y, 0.0);
}

TEST(Texture, GridLinesAtPitchMultiples) {
    TextureConfig c;
    c.kind = TextureKind::Grid;
    c.min = {-0.1, -0.1};
    c.max = {1.0, 1.0};
    const auto tex = gen_texture(c);
    for (int k = 0; k <= 2; ++k) {
        EXPECT_LT(tex.sample({0.33 * k, 0.17}), 0.2);
        EXPECT_LT(tex.sample({0.17, 0.33 * k}), 0.2);
        EXPECT_GT(tex.sample({0.33 * k + 0.015, 0.17}), 0.8);
    }
    c.grid_pitch = 0.0;
    EXPECT_THROW((void)gen_texture(c), Error);
    try {
        (void)gen_texture(c);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidPitch);
    }
}

TEST(Texture, BlobsDeterministicAndBounded) {
    TextureConfig c;
    c.min = {0.0, 0.0};
    c.max = {0.3, 0.3};
    c.seed = 3;
    const auto a = gen_texture(c);
    const auto b = gen_texture(c);
    EXPECT_EQ(a.values(), b.values());
    c.seed = 4;
    EXPECT_NE(a.values(), gen_texture(c).values());
    const auto [lo, hi] = std::minmax_element(a.values().begin(), a.values().end());
    EXPECT_GE(*lo, 0.0);
    EXPECT_LE(*hi, 1.0);
}

TEST(Texture, BlobsFeatureScale) {
    // Empirical autocorrelation along x; length = first lag below 1/e.
    const Texture& tex = blobs();
    const int nx = tex.nx();
    const int ny = tex.ny();
    const auto& v = tex.values();
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    auto corr = [&](int lag) {
        double num = 0.0;
        double den = 0.0;
        for (int j = 0; j < ny; j += 4) {
            for (int i = 0; i + lag < nx; ++i) {
                const double a = tex.at(i, j) - mean;
                num += a * (tex.at(i + lag, j) - mean);
                den += a * a;
            }
        }
        return num / den;
    };
    int lag = 1;
    while (corr(lag) > std::exp(-1.0)) ++lag;
    const double length = lag * tex.texel();
    EXPECT_GT(length, 0.015);
    EXPECT_LT(length, 0.045);
}

TEST(Frames, SamplingBasics) {
    const ImagingConfig cfg;
    const auto a = sample_frame(blobs(), {0.1, 0.1}, cfg);
    const auto b = sample_frame(blobs(), {0.1, 0.1}, cfg);
    EXPECT_EQ(a.pixels, b.pixels);
    EXPECT_EQ(a.width, 171);
    EXPECT_EQ(a.height, 143);
    EXPECT_THROW((void)sample_frame(blobs(), {0.65, 0.0}, cfg), Error);
}

TEST(Frames, SevenPixelShiftMovesColumns) {
    const ImagingConfig cfg;
    const Vec2 c{0.05, -0.02};
    const auto a = sample_frame(blobs(), c, cfg);
    const auto b = shifted(blobs(), cfg, c, 7, 0);
    double worst = 0.0;
    for (int j = 0; j < a.height; ++j) {
        for (int i = 0; i + 7 < a.width; ++i) worst = std::max(worst, std::abs(b.at(i, j) - a.at(i + 7, j)));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Frames, GridCrossAtIntersection) {
    TextureConfig tc;
    tc.kind = TextureKind::Grid;
    tc.min = {0.0, 0.0};
    tc.max = {0.7, 0.7};
    const auto tex = gen_texture(tc);
    const ImagingConfig cfg;
    const auto f = sample_frame(tex, {0.33, 0.33}, cfg);
    for (int i = 0; i < f.width; ++i) EXPECT_LT(f.at(i, 71), 0.2);
    for (int j = 0; j < f.height; ++j) EXPECT_LT(f.at(85, j), 0.2);
    EXPECT_GT(f.at(85 + 20, 71 + 20), 0.8);
}

TEST(Ncc, IdentityScoresExactlyOne) {
    const ImagingConfig cfg;
    const auto a = sample_frame(blobs(), {0.0, 0.0}, cfg);
    const auto r = ncc_translation(a, a, 20);
    EXPECT_EQ(r.dx, 0);
    EXPECT_EQ(r.dy, 0);
    EXPECT_EQ(r.score, 1.0);
    EXPECT_EQ(ncc_score(a, a, 0, 0), 1.0);
}

TEST(Ncc, RecoversSevenRightFourUp) {
    const ImagingConfig cfg;
    const Vec2 c{0.02, 0.03};
    const auto a = sample_frame(blobs(), c, cfg);
    const auto b = shifted(blobs(), cfg, c, 7, 4);
    const auto r = ncc_translation(a, b, 30);
    EXPECT_EQ(r.dx, 7);
    EXPECT_EQ(r.dy, -4);
    EXPECT_GT(r.score, 0.99);
    // Equivariance: the reverse pair gives the negated shift.
    const auto back = ncc_translation(b, a, 30);
    EXPECT_EQ(back.dx, -7);
    EXPECT_EQ(back.dy, 4);
}

TEST(Ncc, RandomIntegerShifts) {
    const ImagingConfig cfg;
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> sx(-40, 40);
    std::uniform_int_distribution<int> sy(-40, 40);
    for (int k = 0; k < 10; ++k) {
        const int dx = sx(rng);
        const int dy = sy(rng);
        const Vec2 c{0.03 * (k % 3) - 0.03, 0.02 * (k % 4) - 0.03};
        const auto a = sample_frame(blobs(), c, cfg);
        const auto b = shifted(blobs(), cfg, c, dx, -dy);
        const auto r = ncc_translation(a, b, 40);
        EXPECT_EQ(r.dx, dx);
        EXPECT_EQ(r.dy, dy);
        EXPECT_LE(r.score, 1.0);
        EXPECT_GE(r.score, -1.0);
    }
}

TEST(Ncc, SubpixelRefinementMovesTowardTruth) {
    const ImagingConfig cfg;
    const Vec2 c{0.0, 0.0};
    const auto a = sample_frame(blobs(), c, cfg);
    const auto b = sample_frame(blobs(), c + Vec2{5.3 * cfg.pixel_pitch, 0.0}, cfg);
    const auto r = ncc_translation(a, b, 10, {true});
    EXPECT_EQ(r.dx, 5);
    EXPECT_NEAR(r.sub_dx, 5.3, 0.15);
    EXPECT_EQ(ncc_translation(a, b, 10).sub_dx, 5.0);
}

TEST(Ncc, Errors) {
    const ImagingConfig cfg;
    const auto a = sample_frame(blobs(), {0.0, 0.0}, cfg);
    Frame flat = a;
    std::fill(flat.pixels.begin(), flat.pixels.end(), 0.4);
    try {
        (void)ncc_translation(a, flat, 10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FlatFrame);
    }
    EXPECT_THROW((void)ncc_translation(a, a, 72), Error);
    Frame small = a;
    small.width = 10;
    small.height = 10;
    small.pixels.resize(100);
    EXPECT_THROW((void)ncc_translation(a, small, 2), Error);
}

TEST(Ncc, GridAliasingGivesWrongShift) {
    // A shift of one full pitch maps the grid onto itself: NCC cannot see it.
    TextureConfig tc;
    tc.kind = TextureKind::Grid;
    tc.min = {-0.2, -0.2};
    tc.max = {0.8, 0.3};
    const auto tex = gen_texture(tc);
    const ImagingConfig cfg;
    const auto a = sample_frame(tex, {0.1, 0.05}, cfg);
    const auto b = sample_frame(tex, {0.1 + 0.33, 0.05}, cfg);
    const auto r = ncc_translation(a, b, 60);
    EXPECT_NE(r.dx, static_cast<int>(std::lround(0.33 / cfg.pixel_pitch)));
    EXPECT_EQ(r.dx, 0);
}

TEST(Ncc, WindowedSearchMatchesFull) {
    const ImagingConfig cfg;
    const Vec2 c{-0.05, 0.0};
    const auto a = sample_frame(blobs(), c, cfg);
    const auto b = shifted(blobs(), cfg, c, 90, -30);  // beyond the full-search limit in x
    const auto r = ncc_translation_near(a, b, 87, 28, 5);
    EXPECT_EQ(r.dx, 90);
    EXPECT_EQ(r.dy, 30);
    EXPECT_GT(r.score, 0.99);
}

TEST(Online, IdenticalFramesStayAtOrigin) {
    const ImagingConfig cfg;
    const std::vector<Frame> frames(5, sample_frame(blobs(), {0.0, 0.0}, cfg));
    const auto l = online_integrate(frames, cfg);
    for (const Vec2& p : l.positions) EXPECT_EQ(p, (Vec2{0.0, 0.0}));
    EXPECT_EQ(l.provenance, LayoutProvenance::Online);
}

TEST(Online, IntegerMotionHasNoDrift) {
    const ImagingConfig cfg;
    const auto path = circle(0.5, 0.3, 12.0);
    std::vector<Frame> frames;
    for (const auto& s : path.samples()) {
        // Snap every centre to the pixel lattice.
        const Vec2 q{std::round(s.x / cfg.pixel_pitch) * cfg.pixel_pitch, std::round(s.y / cfg.pixel_pitch) * cfg.pixel_pitch};
        frames.push_back(sample_frame(blobs(), q, cfg, s.t));
    }
    const auto l = online_integrate(frames, cfg, frames.front().center);
    for (std::size_t k = 0; k < frames.size(); ++k) EXPECT_LT(distance(l.positions[k], frames[k].center), 1e-9);
}

TEST(Online, CircleDriftWithinTwentyMicrons) {
    const ImagingConfig cfg;
    const auto frames = acquire_frames(blobs(), circle(1.0, 0.3, 12.0, {0.0, 0.0}), cfg);
    const auto l = online_integrate(frames, cfg, frames.front().center);
    const double gap = distance(l.positions.back(), frames.back().center);
    EXPECT_LE(gap, 0.020);
    EXPECT_GT(gap, 0.0);  // sub-pixel motion does accumulate
}

TEST(Online, LowScoreIsRejected) {
    // Contrast inversion: the best correlation is far below the threshold.
    const ImagingConfig cfg;
    std::vector<Frame> frames{sample_frame(blobs(), {0.0, 0.0}, cfg), sample_frame(blobs(), {0.0, 0.0}, cfg)};
    for (double& v : frames[1].pixels) v = 1.0 - v;
    try {
        (void)online_integrate(frames, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RegistrationFailure);
        EXPECT_NE(std::string(e.what()).find("0 -> 1"), std::string::npos);
    }
}

TEST(Online, DriftGrowsWithSquareRootOfFrames) {
    // Small frames keep this fast; each step has a random sub-pixel remainder,
    // so rounding errors are i.i.d. U(-p/2, p/2) per axis and the end gap
    // has mean p sqrt(N / 12) sqrt(pi / 2).
    ImagingConfig cfg;
    cfg.fov = {0.07, 0.07};
    const double p = cfg.pixel_pitch;
    TextureConfig tc;
    tc.seed = 2;
    tc.min = {-0.3, -0.3};
    tc.max = {0.3, 0.3};
    const auto tex = gen_texture(tc);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> step(-6.0, 6.0);
    std::vector<double> log_n, log_gap;
    for (int n : {16, 64, 256}) {
        double sum = 0.0;
        const int trials = 16;
        for (int trial = 0; trial < trials; ++trial) {
            std::vector<Frame> frames;
            Vec2 pos{0.0, 0.0};
            frames.push_back(sample_frame(tex, pos, cfg));
            for (int k = 0; k < n; ++k) {
                Vec2 next = pos + Vec2{step(rng) * p, step(rng) * p};
                // Reflect to stay on the texture.
                if (std::abs(next.x) > 0.2) next.x = pos.x - (next.x - pos.x);
                if (std::abs(next.y) > 0.2) next.y = pos.y - (next.y - pos.y);
                pos = next;
                frames.push_back(sample_frame(tex, pos, cfg));
            }
            const auto l = online_integrate(frames, cfg, {0.0, 0.0}, {8, 0.5});
            sum += distance(l.positions.back(), frames.back().center);
        }
        const double mean = sum / trials;
        const double oracle = p * std::sqrt(n / 12.0) * std::sqrt(std::numbers::pi / 2.0);
        EXPECT_NEAR(mean / oracle, 1.0, 0.35) << "n=" << n;
        log_n.push_back(std::log(n));
        log_gap.push_back(std::log(mean));
    }
    const double mx = (log_n[0] + log_n[1] + log_n[2]) / 3.0;
    const double my = (log_gap[0] + log_gap[1] + log_gap[2]) / 3.0;
    double sxy = 0.0;
    double sxx = 0.0;
    for (int k = 0; k < 3; ++k) {
        sxy += (log_n[k] - mx) * (log_gap[k] - my);
        sxx += (log_n[k] - mx) * (log_n[k] - mx);
    }
    EXPECT_NEAR(sxy / sxx, 0.5, 0.1);
}

TEST(Refine, ChainOnlyReproducesOnline) {
    const ImagingConfig cfg;
    const auto frames = acquire_frames(blobs(), circle(0.3, 0.3, 12.0), cfg);
    const auto online = online_integrate(frames, cfg, frames.front().center);
    const auto r = offline_refine(online, frames, {}, cfg);
    EXPECT_EQ(r.constraints.size(), frames.size() - 1);
    for (std::size_t k = 0; k < frames.size(); ++k) EXPECT_LT(distance(r.layout.positions[k], online.positions[k]), 1e-12);
    EXPECT_LT(r.final_residual, 1e-20);
    EXPECT_EQ(r.layout.provenance, LayoutProvenance::Refined);
}

TEST(Refine, LoopClosureHalvesEndpointError) {
    const ImagingConfig cfg;
    std::vector<double> ratio;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        TextureConfig tc;
        tc.seed = seed;
        tc.min = {-0.65, -0.65};
        tc.max = {0.65, 0.65};
        const auto tex = gen_texture(tc);
        const auto frames = acquire_frames(tex, circle(1.0, 0.3, 12.0), cfg);
        const auto online = online_integrate(frames, cfg, frames.front().center);
        const auto r = offline_refine(online, frames, {{0, frames.size() - 1}}, cfg);
        const double e0 = distance(online.positions.back(), frames.back().center);
        const double e1 = distance(r.layout.positions.back(), frames.back().center);
        ratio.push_back(e1 / e0);
        EXPECT_LE(r.final_residual, r.initial_residual);
    }
    EXPECT_LE(median(ratio), 0.5);
}

TEST(Refine, RasterRowsAlignBetter) {
    const ImagingConfig cfg;
    ScanConfig sc;
    sc.extent = {0.4, 0.3};
    sc.line_spacing = 0.1;
    const auto plan = plan_raster(sc, 0.0);
    std::vector<Sample> centres;
    for (double t : frame_clock(0.0, plan.expected_duration, 12.0)) {
        const Vec2 p = plan.waypoints.position_at(t) - Vec2{0.2, 0.15};
        centres.push_back({t, p.x, p.y});
    }
    const auto frames = acquire_frames(blobs(), Trajectory(centres), cfg);
    const auto online = online_integrate(frames, cfg, frames.front().center);
    const auto pairs = discover_pairs(online, cfg, 6);
    ASSERT_FALSE(pairs.empty());
    RefineConfig rc;
    rc.search_radius = 4;
    const auto r = offline_refine(online, frames, pairs, cfg, rc);
    auto rms_y = [&](const MosaicLayout& l) {
        double s = 0.0;
        for (std::size_t k = 0; k < frames.size(); ++k) {
            const double e = l.positions[k].y - frames[k].center.y;
            s += e * e;
        }
        return std::sqrt(s / static_cast<double>(frames.size()));
    };
    EXPECT_LT(rms_y(r.layout), rms_y(online));
}

TEST(Refine, SolveLayoutProperties) {
    // Consistent constraints are reproduced exactly.
    const std::vector<Vec2> truth{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    std::vector<PairConstraint> cs;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) cs.push_back({i, j, truth[j] - truth[i], 1.0});
    }
    const auto sol = solve_layout(4, cs, {0.0, 0.0});
    for (std::size_t k = 0; k < 4; ++k) EXPECT_LT(distance(sol[k], truth[k]), 1e-12);

    // Noisy constraints: the solution beats any other anchored layout.
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0.0, 0.01);
    for (auto& c : cs) c.offset = c.offset + Vec2{nd(rng), nd(rng)};
    const auto best = solve_layout(4, cs, {0.0, 0.0});
    const double r_best = constraint_residual(best, cs);
    for (int trial = 0; trial < 100; ++trial) {
        auto other = best;
        for (std::size_t k = 1; k < 4; ++k) other[k] = other[k] + Vec2{nd(rng), nd(rng)};
        EXPECT_LE(r_best, constraint_residual(other, cs));
    }

    // Disconnected graph.
    try {
        (void)solve_layout(4, {{0, 1, {1, 0}, 1.0}, {2, 3, {1, 0}, 1.0}}, {0.0, 0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnderConstrained);
    }
}

TEST(Pairs, DiscoveredByProximity) {
    const ImagingConfig cfg;
    MosaicLayout l{{{0, 0}, {0.05, 0}, {0.1, 0}, {0.5, 0}, {0.02, 0.01}}, LayoutProvenance::Online};
    const auto pairs = discover_pairs(l, cfg, 2);
    // (0,2) 0.1 < 0.144, (0,4), (1,3) no, (2,4) yes, (1,4)? gap 3: 0.03 yes
    std::vector<std::pair<std::size_t, std::size_t>> got;
    for (const auto& p : pairs) got.emplace_back(p.i, p.j);
    const std::vector<std::pair<std::size_t, std::size_t>> want{{0, 2}, {0, 4}, {1, 4}, {2, 4}};
    EXPECT_EQ(got, want);
}

TEST(Render, SingleFrameCanvasEqualsFrame) {
    const ImagingConfig cfg;
    const auto f = sample_frame(blobs(), {0.01, 0.02}, cfg);
    const auto m = render_mosaic({f}, ground_truth_layout({f}), cfg);
    EXPECT_EQ(m.width, f.width);
    EXPECT_EQ(m.height, f.height);
    EXPECT_EQ(m.pixels, f.pixels);
}

TEST(Render, OverlapOfIdenticalContentIsUnchanged) {
    const ImagingConfig cfg;
    const Vec2 c{0.0, 0.0};
    const auto a = sample_frame(blobs(), c, cfg);
    const auto b = shifted(blobs(), cfg, c, 85, 0);
    const auto m = render_mosaic({a, b}, ground_truth_layout({a, b}), cfg);
    EXPECT_EQ(m.width, a.width + 85);
    double worst = 0.0;
    for (int j = 0; j < a.height; ++j) {
        for (int i = 85; i < a.width; ++i) {
            EXPECT_EQ(m.counts[static_cast<std::size_t>(j) * m.width + i], 2);
            worst = std::max(worst, std::abs(m.at(i, j) - a.at(i, j)));
        }
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(Render, GridMosaicPitch) {
    TextureConfig tc;
    tc.kind = TextureKind::Grid;
    tc.min = {-0.3, -0.3};
    tc.max = {1.3, 1.3};
    const auto tex = gen_texture(tc);
    const ImagingConfig cfg;
    ScanConfig sc;
    sc.extent = {1.0, 1.0};
    sc.line_spacing = 0.1;
    const auto plan = plan_raster(sc, 0.0);
    const auto pts = frame_clock(0.0, plan.expected_duration, 12.0);
    std::vector<Sample> centres;
    for (double t : pts) {
        const Vec2 p = plan.waypoints.position_at(t);
        centres.push_back({t, p.x, p.y});
    }
    const auto frames = acquire_frames(tex, Trajectory(centres), cfg);
    const auto m = render_mosaic(frames, ground_truth_layout(frames), cfg);
    EXPECT_NEAR(measure_grid_pitch(m, 0), 0.33, cfg.pixel_pitch);
    EXPECT_NEAR(measure_grid_pitch(m, 1), 0.33, cfg.pixel_pitch);
}

TEST(Output, PgmAndLayoutCsv) {
    std::ostringstream pgm;
    write_pgm(pgm, 3, 2, {0.0, 0.5, 1.0, 1.2, -1.0, 0.25});
    const std::string s = pgm.str();
    ASSERT_EQ(s.substr(0, 11), "P5\n3 2\n255\n");
    ASSERT_EQ(s.size(), 11u + 6u);
    EXPECT_EQ(static_cast<unsigned char>(s[11 + 1]), 128);
    EXPECT_EQ(static_cast<unsigned char>(s[11 + 3]), 255);
    EXPECT_EQ(static_cast<unsigned char>(s[11 + 4]), 0);
    EXPECT_THROW(write_pgm(pgm, 2, 2, {0.0}), Error);

    std::ostringstream csv;
    write_layout_csv(csv, {{{0.0, 0.5}, {0.125, -1.0}}, LayoutProvenance::Refined});
    EXPECT_EQ(csv.str(), "frame_idx,x_mm,y_mm,provenance\n0,0,0.5,Refined\n1,0.125,-1,Refined\n");
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "loadslip/error.hpp"
#include "loadslip/tissue_sim.hpp"

using namespace loadslip;

namespace {

// Three-branch clamp: the textbook backlash update, written without vectors.
double clamp_oracle(double image, double probe, double d) {
    if (probe - image > d) return probe - d;
    if (image - probe > d) return probe + d;
    return image;
}

// Drives tissue_step along +x/-x in steps of `h` from `from` to `to`.
TissueState drive(TissueState s, const TissueParams& p, double from, double to, double h = 1e-4) {
    const int n = static_cast<int>(std::ceil(std::abs(to - from) / h));
    for (int k = 1; k <= n; ++k) s = tissue_step(s, p, {from + (to - from) * k / n, 0.0});
    return s;
}

Trajectory line_command(double length, double speed, int cycles) {
    std::vector<Sample> s{{0.0, 0.0, 0.0}};
    double t = 0.0;
    for (int c = 0; c < cycles; ++c) {
        t += length / speed;
        s.push_back({t, length, 0.0});
        t += length / speed;
        s.push_back({t, 0.0, 0.0});
    }
    return Trajectory(std::move(s));
}

Trajectory circle_command(double diameter, double speed, double rate) {
    const double r = diameter / 2.0;
    const double period = std::numbers::pi * diameter / speed;
    const auto n = static_cast<int>(std::llround(period * rate));
    std::vector<Sample> s;
    for (int k = 0; k <= n; ++k) {
        const double a = 2.0 * std::numbers::pi * k / n;
        s.push_back({period * k / n, r * std::cos(a), r * std::sin(a)});
    }
    return Trajectory(std::move(s));
}

}  // namespace

TEST(TissueStep, ForwardStrokeLagsByD) {
    const TissueParams p{0.2, 0.0};
    auto s = drive(initial_state({0, 0}), p, 0.0, 1.0);
    EXPECT_NEAR(s.image_pos.x, 0.8, 1e-12);
}

TEST(TissueStep, ReversalConsumesTwoD) {
    const TissueParams p{0.2, 0.0};
    auto s = drive(initial_state({0, 0}), p, 0.0, 1.0);
    s = drive(s, p, 1.0, 0.6 + 1e-9);
    EXPECT_NEAR(s.image_pos.x, 0.8, 1e-12);
    s = drive(s, p, 0.6, 0.0);
    EXPECT_NEAR(s.image_pos.x, 0.2, 1e-12);
}

TEST(TissueStep, RigidSurfaceFollowsProbe) {
    const TissueParams p{0.0, 0.0};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.01);
    TissueState s = initial_state({0, 0});
    Vec2 probe{};
    for (int k = 0; k < 1000; ++k) {
        probe += Vec2{n(rng), n(rng)};
        s = tissue_step(s, p, probe);
        EXPECT_EQ(s.image_pos, probe);
    }
}

TEST(TissueStep, SquareCornerIsFilleted) {
    const TissueParams p{0.2, 0.0};
    TissueState s = initial_state({0, 0});
    const double h = 1e-3;
    double nearest_to_corner = 1e9;
    for (int k = 1; k <= 1000; ++k) s = tissue_step(s, p, {k * h, 0.0});
    for (int k = 1; k <= 1000; ++k) {
        s = tissue_step(s, p, {1.0, k * h});
        nearest_to_corner = std::min(nearest_to_corner, distance(s.image_pos, {1.0, 0.0}));
    }
    // The image never reaches the corner and ends trailing almost straight behind the probe.
    EXPECT_GT(nearest_to_corner, 0.05);
    EXPECT_NEAR(s.image_pos.x, 1.0, 5e-3);
    EXPECT_LT(s.image_pos.x, 1.0);
    EXPECT_NEAR(distance(s.image_pos, {1.0, 1.0}), 0.2, 1e-12);
}

TEST(TissueStep, MatchesClampOracleBitForBit) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dd(0.01, 0.3);
    std::normal_distribution<double> step(0.0, 0.02);
    for (int path = 0; path < 100; ++path) {
        const TissueParams p{dd(rng), 0.0};
        TissueState s = initial_state({0, 0});
        double probe = 0.0;
        double oracle = 0.0;
        for (int k = 0; k < 10000; ++k) {
            probe += step(rng);
            s = tissue_step(s, p, {probe, 0.0});
            oracle = clamp_oracle(oracle, probe, p.loading_distance);
            ASSERT_NEAR(s.image_pos.x, oracle, 1e-9);
            ASSERT_EQ(s.image_pos.y, 0.0);
        }
    }
}

TEST(TissueStep, ContainmentWithRamp) {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> step(0.0, 0.003);
    for (const TissueParams p : {TissueParams{0.2, 0.05}, TissueParams{0.1, 0.02}, TissueParams{0.01, 0.08}}) {
        TissueState s = initial_state({0, 0});
        Vec2 probe{};
        for (int k = 0; k < 20000; ++k) {
            probe += Vec2{step(rng), step(rng)};
            s = tissue_step(s, p, probe);
            ASSERT_LE(distance(probe, s.image_pos), p.loading_distance + p.load_slip_span + 1e-12);
            ASSERT_GE(s.partial_load, 0.0);
            ASSERT_LE(s.partial_load, p.load_slip_span + 1e-12);
        }
    }
}

TEST(TissueStep, NonExpansive1D) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> step(0.0, 0.01);
    const TissueParams p{0.15, 0.0};
    TissueState s = initial_state({0, 0});
    std::vector<double> probe{0.0};
    std::vector<double> image{0.0};
    for (int k = 0; k < 5000; ++k) {
        probe.push_back(probe.back() + step(rng));
        s = tissue_step(s, p, {probe.back(), 0.0});
        image.push_back(s.image_pos.x);
    }
    std::uniform_int_distribution<std::size_t> idx(0, probe.size() - 1);
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t a = idx(rng);
        std::size_t b = idx(rng);
        if (a > b) std::swap(a, b);
        double travel = 0.0;
        for (std::size_t i = a + 1; i <= b; ++i) travel += std::abs(probe[i] - probe[i - 1]);
        EXPECT_LE(std::abs(image[b] - image[a]), travel + 1e-12);
    }
}

TEST(TissueStep, HysteresisMemoryIsTwoD) {
    for (const double d : {0.05, 0.2, 0.33}) {
        const TissueParams p{d, 0.0};
        const double h = 1e-4;
        auto s = drive(initial_state({0, 0}), p, 0.0, 1.0, h);
        const double parked = s.image_pos.x;
        double probe = 1.0;
        while (s.image_pos.x == parked) {
            probe -= h;
            s = tissue_step(s, p, {probe, 0.0});
        }
        EXPECT_NEAR(1.0 - probe, 2.0 * d, h + 1e-9);
    }
}

TEST(TissueStep, RampSpanAndGain) {
    // After a reversal: stick for 2d, then image gain rises from 0 to 1 over g.
    const TissueParams p{0.2, 0.04};
    const double h = 1e-5;
    auto s = drive(initial_state({0, 0}), p, 0.0, 1.0, h);
    EXPECT_NEAR(1.0 - s.image_pos.x, p.loading_distance + p.load_slip_span / 4.0, 1e-9);
    const double parked = s.image_pos.x;
    s = drive(s, p, 1.0, 1.0 - 2.0 * p.loading_distance, h);
    EXPECT_NEAR(s.image_pos.x, parked, 1e-9);
    const double ramp_start = s.image_pos.x;
    const double g = p.load_slip_span;
    // Halfway through the ramp the image gain is 1/2, displacement g/8.
    s = drive(s, p, 1.0 - 2.0 * p.loading_distance, 1.0 - 2.0 * p.loading_distance - g / 2.0, h);
    EXPECT_NEAR(ramp_start - s.image_pos.x, g / 8.0, 1e-6);
    s = drive(s, p, 1.0 - 2.0 * p.loading_distance - g / 2.0, 1.0 - 2.0 * p.loading_distance - g, h);
    EXPECT_NEAR(ramp_start - s.image_pos.x, g / 2.0, 1e-6);
    EXPECT_NEAR(s.partial_load, g, 1e-6);
}

TEST(TissueStep, ParamsValidate) {
    EXPECT_THROW(TissueParams({-0.1, 0.0}).validate(), Error);
    EXPECT_THROW(TissueParams({0.1, -0.01}).validate(), Error);
}

TEST(SimulateScan, LineForwardBackward) {
    const TissueParams p{0.2, 0.0};
    const auto r = simulate_scan(p, line_command(1.0, 0.3, 1), NoiseConfig::none());
    // Unloaded start: the first stroke carries the image to 1 - d, the return
    // stroke (fully loaded at its start) spans 1 - 2d.
    EXPECT_NEAR(peak_to_peak(r.image_true, {1, 0}).range(), 0.8, 1e-12);
    std::vector<Sample> back;
    for (const auto& s : r.image_true.samples()) {
        if (s.t >= 1.0 / 0.3) back.push_back(s);
    }
    EXPECT_NEAR(peak_to_peak(Trajectory(back), {1, 0}).range(), 0.6, 1e-12);
    // Steady-slip lag at the turnaround frame.
    const double t_turn = 1.0 / 0.3;
    for (const auto& s : r.image_true.samples()) {
        if (s.t > 1.0 && s.t < t_turn) EXPECT_NEAR(r.probe_measured.position_at(s.t).x - s.x, 0.2, 1e-12);
    }
    EXPECT_EQ(r.image_true, r.image_measured);
}

TEST(SimulateScan, RigidMatchesProbeOnFrameGrid) {
    const auto cmd = circle_command(1.0, 0.3, 100.0);
    const auto r = simulate_scan({0.0, 0.0}, cmd, NoiseConfig::none());
    for (const auto& s : r.image_true.samples()) {
        const Vec2 p = cmd.position_at(s.t);
        EXPECT_NEAR(s.x, p.x, 1e-12);
        EXPECT_NEAR(s.y, p.y, 1e-12);
    }
    EXPECT_NEAR(r.image_true[1].t - r.image_true[0].t, 1.0 / 12.0, 1e-12);
}

TEST(SimulateScan, OnlineDriftMatchesRandomWalk) {
    // Endpoint gap of a 2D Gaussian random walk of N steps: Rayleigh,
    // mean sigma * sqrt(N) * sqrt(pi / 2).
    const auto cmd = circle_command(1.0, 0.3, 100.0);
    const double sigma = 0.0036;
    double sum = 0.0;
    std::size_t steps = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        NoiseConfig n = NoiseConfig::none();
        n.online_step_sigma = sigma;
        n.seed = seed;
        const auto r = simulate_scan({0.0, 0.0}, cmd, n);
        steps = r.image_true.size() - 1;
        sum += distance(r.image_measured.back().pos(), r.image_true.back().pos());
    }
    const double oracle = sigma * std::sqrt(static_cast<double>(steps)) * std::sqrt(std::numbers::pi / 2.0);
    EXPECT_NEAR(sum / 100.0, oracle, 0.15 * oracle);
}

TEST(SimulateScan, Deterministic) {
    NoiseConfig n{0.01, 0.05, 0.0036, 42};
    const auto cmd = line_command(1.0, 0.3, 2);
    const auto a = simulate_scan({0.2, 0.03}, cmd, n);
    const auto b = simulate_scan({0.2, 0.03}, cmd, n);
    EXPECT_EQ(a.probe_measured, b.probe_measured);
    EXPECT_EQ(a.image_true, b.image_true);
    EXPECT_EQ(a.image_measured, b.image_measured);
    n.seed = 43;
    const auto c = simulate_scan({0.2, 0.03}, cmd, n);
    EXPECT_NE(a.image_measured, c.image_measured);
}

TEST(SimulateScan, ScaleEquivariance) {
    const auto cmd = circle_command(1.0, 0.3, 100.0);
    const TissueParams p{0.2, 0.04};
    const auto base = simulate_scan(p, cmd, NoiseConfig::none());
    std::vector<Sample> scaled;
    for (const auto& s : cmd.samples()) scaled.push_back({s.t, 2.0 * s.x, 2.0 * s.y});
    const auto r = simulate_scan({0.4, 0.08}, Trajectory(scaled), NoiseConfig::none());
    ASSERT_EQ(base.image_true.size(), r.image_true.size());
    for (std::size_t i = 0; i < r.image_true.size(); ++i) {
        EXPECT_EQ(r.image_true[i].x, 2.0 * base.image_true[i].x);
        EXPECT_EQ(r.image_true[i].y, 2.0 * base.image_true[i].y);
    }
}

TEST(SimulateScan, CornerErrorOnlyAtReversals) {
    NoiseConfig n = NoiseConfig::none();
    n.corner_error_max = 0.05;
    n.seed = 8;
    const Trajectory cmd({{0.0, 0.0, 0.0}, {3.0, 0.9, 0.0}, {6.0, 0.0, 0.0}});
    EXPECT_EQ(reversal_vertices(cmd), std::vector<std::size_t>{1});
    const auto r = simulate_scan({0.0, 0.0}, cmd, n);
    const double tip = peak_to_peak(r.probe_measured, {1, 0}).p_max;
    EXPECT_GT(tip, 0.9);
    EXPECT_LE(tip, 0.95);
    // Square corners are not reversals.
    const Trajectory sq({{0, 0, 0}, {1, 1, 0}, {2, 1, 1}, {3, 0, 1}, {4, 0, 0}});
    EXPECT_TRUE(reversal_vertices(sq).empty());
}

TEST(SimulateScan, FrameClock) {
    const auto f = frame_clock(0.0, 1.0, 12.0);
    ASSERT_EQ(f.size(), 13u);
    EXPECT_EQ(f.back(), 1.0);
    const auto g = frame_clock(0.0, 0.95, 12.0);
    EXPECT_EQ(g.size(), 13u);
    EXPECT_EQ(g.back(), 0.95);
}

#include "loadslip/tissue_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "loadslip/error.hpp"
#include "loadslip/rng.hpp"

namespace loadslip {

void TissueParams::validate() const {
    if (!(loading_distance >= 0.0) || !std::isfinite(loading_distance)) {
        throw Error(ErrorCode::InvalidConfig, "loading_distance must be finite and >= 0");
    }
    if (!(load_slip_span >= 0.0) || !std::isfinite(load_slip_span)) {
        throw Error(ErrorCode::InvalidConfig, "load_slip_span must be finite and >= 0");
    }
}

// The stick band sits g/4 inside d so that a full reversal sticks for exactly
// 2d of probe travel and ramps for exactly g: lag goes from +(d + g/4) back
// through zero to (d - g/4).
double TissueParams::stick_band() const noexcept {
    return std::max(loading_distance - 0.25 * load_slip_span, 0.0);
}

double TissueParams::slip_lag() const noexcept { return stick_band() + 0.5 * load_slip_span; }

double TissueParams::lag_at_progress(double progress) const noexcept {
    const double g = load_slip_span;
    if (g <= 0.0 || progress >= g) return slip_lag();
    const double p = std::max(progress, 0.0);
    return stick_band() + p - p * p / (2.0 * g);
}

double TissueParams::progress_at_lag(double lag) const noexcept {
    const double g = load_slip_span;
    if (g <= 0.0) return 0.0;
    const double u = std::clamp(1.0 - 2.0 * (lag - stick_band()) / g, 0.0, 1.0);
    return g * (1.0 - std::sqrt(u));
}

TissueState initial_state(Vec2 probe_pos) noexcept { return {probe_pos, 0.0, probe_pos}; }

TissueState tissue_step(const TissueState& state, const TissueParams& params, Vec2 probe_pos) noexcept {
    TissueState next = state;
    next.probe_pos = probe_pos;

    const double rx = probe_pos.x - state.image_pos.x;
    const double ry = probe_pos.y - state.image_pos.y;
    const double m = std::hypot(rx, ry);
    const double band = params.stick_band();

    if (m <= band) {
        next.partial_load = 0.0;
        return next;  // stick
    }

    double lag = params.slip_lag();
    if (params.load_slip_span > 0.0) {
        const double m_prev = distance(state.probe_pos, state.image_pos);
        if (m <= m_prev) {
            // Unloading or tangential motion: no slip.
            next.partial_load = params.progress_at_lag(m);
            return next;
        }
        const double from = std::max(m_prev, band);
        lag = params.lag_at_progress(params.progress_at_lag(from) + (m - from));
    }
    next.image_pos = {probe_pos.x - lag * rx / m, probe_pos.y - lag * ry / m};
    next.partial_load = params.progress_at_lag(lag);
    return next;
}

double substep_length(const TissueParams& params) noexcept {
    const double d = params.loading_distance;
    const double g = params.load_slip_span;
    const double scale = g > 0.0 ? (d > 0.0 ? std::min(d, g) : g) : d;
    return std::max(scale / 10.0, 1e-3);
}

void NoiseConfig::validate() const {
    if (!(robot_tracking_sigma >= 0.0) || !(corner_error_max >= 0.0) || !(online_step_sigma >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "noise magnitudes must be >= 0");
    }
}

std::vector<std::size_t> reversal_vertices(const Trajectory& command) {
    std::vector<std::size_t> out;
    const auto s = command.samples();
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        const Vec2 in = s[i].pos() - s[i - 1].pos();
        const Vec2 outv = s[i + 1].pos() - s[i].pos();
        if (in == Vec2{} || outv == Vec2{}) continue;
        if (dot(in, outv) < 0.0) out.push_back(i);
    }
    return out;
}

std::vector<double> frame_clock(double t0, double t_end, double rate_hz) {
    if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "frame rate must be positive");
    std::vector<double> times;
    const double eps = 1e-9;
    for (long long k = 0;; ++k) {
        const double t = t0 + static_cast<double>(k) / rate_hz;
        if (t >= t_end - eps) break;
        times.push_back(t);
    }
    times.push_back(t_end);
    return times;
}

namespace {

enum : unsigned { kControl = 1U, kFrame = 2U };

struct Event {
    double t;
    unsigned flags;
};

// Piecewise-linear lookup with a forward-only cursor.
class Interp {
public:
    Interp(const std::vector<double>& t, const std::vector<Vec2>& v) : t_(t), v_(v) {}
    Vec2 at(double t) {
        while (i_ + 2 < t_.size() && t_[i_ + 1] <= t) ++i_;
        if (t <= t_[i_]) return v_[i_];
        if (t >= t_[i_ + 1]) return v_[i_ + 1];
        const double f = (t - t_[i_]) / (t_[i_ + 1] - t_[i_]);
        return v_[i_] + f * (v_[i_ + 1] - v_[i_]);
    }

private:
    const std::vector<double>& t_;
    const std::vector<Vec2>& v_;
    std::size_t i_{0};
};

}  // namespace

SimResult simulate_scan(const TissueParams& params, const Trajectory& command, const NoiseConfig& noise,
                        const SimConfig& cfg) {
    params.validate();
    noise.validate();
    if (command.size() < 2) throw Error(ErrorCode::EmptyTrajectory, "command needs at least two samples");

    const double t0 = command.front().t;
    const double t_end = command.back().t;

    // Corner actuation error: the robot runs past each reversal vertex.
    std::vector<double> cmd_t;
    std::vector<Vec2> cmd_p;
    for (const auto& s : command.samples()) {
        cmd_t.push_back(s.t);
        cmd_p.push_back(s.pos());
    }
    if (noise.corner_error_max > 0.0) {
        Rng rng(channel_seed(noise.seed, NoiseChannel::Corner));
        std::uniform_real_distribution<double> u(0.0, noise.corner_error_max);
        for (const std::size_t i : reversal_vertices(command)) {
            const Vec2 dir = normalized(command[i].pos() - command[i - 1].pos());
            cmd_p[i] += u(rng) * dir;
        }
    }

    // Control clock anchored at t0; tracking error lives on the same lattice
    // and is linearly interpolated in between.
    if (!(cfg.control_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "control rate must be positive");
    const std::vector<double> control = frame_clock(t0, t_end, cfg.control_rate);
    const std::uint64_t tracking_seed = channel_seed(noise.seed, NoiseChannel::Tracking);
    auto tracking_at = [&](double t) -> Vec2 {
        if (noise.robot_tracking_sigma == 0.0) return {};
        const double u = (t - t0) * cfg.control_rate;
        const double k = std::floor(u + 1e-9);
        const double f = std::max(u - k, 0.0);
        const auto i = static_cast<std::uint64_t>(k);
        const auto [ax, ay] = hashed_normal_pair(tracking_seed, i);
        Vec2 e{ax, ay};
        if (f > 1e-9) {
            const auto [bx, by] = hashed_normal_pair(tracking_seed, i + 1);
            e = e + f * (Vec2{bx, by} - e);
        }
        return noise.robot_tracking_sigma * e;
    };

    std::vector<double> frames = cfg.frame_times ? *cfg.frame_times : frame_clock(t0, t_end, cfg.frame_rate);
    if (frames.empty()) throw Error(ErrorCode::InvalidConfig, "no frame times");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i] < t0 || frames[i] > t_end || (i > 0 && !(frames[i] > frames[i - 1]))) {
            throw Error(ErrorCode::InvalidConfig, "frame times must be increasing and inside the command span");
        }
    }

    std::vector<Event> events;
    events.reserve(cmd_t.size() + control.size() + frames.size());
    for (const double t : cmd_t) events.push_back({t, 0U});
    for (const double t : control) events.push_back({t, kControl});
    for (const double t : frames) events.push_back({t, kFrame});
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    std::vector<Event> merged;
    merged.reserve(events.size());
    for (const auto& e : events) {
        if (!merged.empty() && merged.back().t == e.t) {
            merged.back().flags |= e.flags;
        } else {
            merged.push_back(e);
        }
    }

    Interp cmd(cmd_t, cmd_p);
    auto probe_at = [&](double t) { return cmd.at(t) + tracking_at(t); };

    const double h = substep_length(params);
    const double bound = params.loading_distance + params.load_slip_span + 1e-9;

    std::vector<Sample> probe_out;
    std::vector<Sample> image_out;
    probe_out.reserve(control.size());
    image_out.reserve(frames.size());

    Vec2 p = probe_at(merged.front().t);
    TissueState state = initial_state(p);
    double max_lag = 0.0;

    for (std::size_t k = 0; k < merged.size(); ++k) {
        const Event& ev = merged[k];
        if (k > 0) {
            const Vec2 target = probe_at(ev.t);
            const double len = distance(target, p);
            const auto n = std::max<long long>(1, static_cast<long long>(std::ceil(len / h)));
            for (long long j = 1; j <= n; ++j) {
                const Vec2 q = j == n ? target : p + (static_cast<double>(j) / static_cast<double>(n)) * (target - p);
                state = tissue_step(state, params, q);
                const double lag = distance(q, state.image_pos);
                max_lag = std::max(max_lag, lag);
                if (lag > bound) throw std::logic_error("tissue containment violated");
            }
            p = target;
        }
        if (ev.flags & kControl) probe_out.push_back({ev.t, p.x, p.y});
        if (ev.flags & kFrame) image_out.push_back({ev.t, state.image_pos.x, state.image_pos.y});
    }

    // Measured = true + accumulated per-frame registration error.
    std::vector<Sample> measured(image_out.begin(), image_out.end());
    if (noise.online_step_sigma > 0.0) {
        Rng rng(channel_seed(noise.seed, NoiseChannel::OnlineStep));
        std::normal_distribution<double> n(0.0, noise.online_step_sigma);
        Vec2 drift{};
        for (std::size_t i = 1; i < measured.size(); ++i) {
            drift.x += n(rng);
            drift.y += n(rng);
            measured[i].x += drift.x;
            measured[i].y += drift.y;
        }
    }

    SimResult result;
    result.probe_measured = Trajectory(std::move(probe_out), TrajectoryLabel::Probe);
    result.image_true = Trajectory(std::move(image_out), TrajectoryLabel::Image);
    result.image_measured = Trajectory(std::move(measured), TrajectoryLabel::Image);
    result.max_lag = max_lag;
    return result;
}

}  // namespace loadslip

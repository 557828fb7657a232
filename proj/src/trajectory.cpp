#include "loadslip/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "loadslip/error.hpp"
#include "loadslip/text.hpp"

namespace loadslip {

Trajectory::Trajectory(std::vector<Sample> samples, TrajectoryLabel label)
    : samples_(std::move(samples)), label_(label) {
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const Sample& s = samples_[i];
        if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y)) {
            throw Error(ErrorCode::NonFinite, "sample " + std::to_string(i) + " is not finite");
        }
        if (i > 0 && !(s.t > samples_[i - 1].t)) {
            throw Error(ErrorCode::NonMonotoneTime, "time not strictly increasing at sample " + std::to_string(i));
        }
    }
}

double Trajectory::duration() const noexcept {
    return samples_.size() < 2 ? 0.0 : samples_.back().t - samples_.front().t;
}

double Trajectory::path_length() const noexcept {
    double len = 0.0;
    for (std::size_t i = 1; i < samples_.size(); ++i) len += distance(samples_[i].pos(), samples_[i - 1].pos());
    return len;
}

Vec2 Trajectory::position_at(double t) const {
    if (samples_.empty()) throw Error(ErrorCode::EmptyTrajectory, "position_at on empty trajectory");
    if (t <= samples_.front().t) return samples_.front().pos();
    if (t >= samples_.back().t) return samples_.back().pos();
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                     [](double tv, const Sample& s) { return tv < s.t; });
    const Sample& b = *it;
    const Sample& a = *(it - 1);
    const double f = (t - a.t) / (b.t - a.t);
    return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
}

double Trajectory::nominal_period() const {
    if (samples_.size() < 2) throw Error(ErrorCode::TooFewSamples, "nominal period needs two samples");
    std::vector<double> dts;
    dts.reserve(samples_.size() - 1);
    for (std::size_t i = 1; i < samples_.size(); ++i) dts.push_back(samples_[i].t - samples_[i - 1].t);
    const auto mid = dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2);
    std::nth_element(dts.begin(), mid, dts.end());
    return *mid;
}

double Trajectory::max_gap_ratio() const {
    const double nominal = nominal_period();
    double worst = 0.0;
    for (std::size_t i = 1; i < samples_.size(); ++i) worst = std::max(worst, samples_[i].t - samples_[i - 1].t);
    return worst / nominal;
}

bool Trajectory::is_uniform(double rel_tol) const {
    if (samples_.size() < 3) return true;
    const double dt = duration() / static_cast<double>(samples_.size() - 1);
    for (std::size_t i = 1; i < samples_.size(); ++i) {
        if (std::abs((samples_[i].t - samples_[i - 1].t) - dt) > rel_tol * dt) return false;
    }
    return true;
}

std::vector<double> VelocitySeries::along(Vec2 axis) const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.vx * axis.x + s.vy * axis.y);
    return out;
}

namespace {

// Interpolates `traj` at sorted `times`; the cursor only moves forward.
std::vector<Sample> interpolate_sorted(std::span<const Sample> src, std::span<const double> times) {
    std::vector<Sample> out;
    out.reserve(times.size());
    std::size_t i = 0;
    for (const double t : times) {
        while (i + 2 < src.size() && src[i + 1].t <= t) ++i;
        const Sample& a = src[i];
        const Sample& b = src[i + 1];
        if (t == a.t) {
            out.push_back({t, a.x, a.y});
        } else if (t >= b.t) {
            out.push_back({t, b.x, b.y});
        } else {
            const double f = (t - a.t) / (b.t - a.t);
            out.push_back({t, a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
        }
    }
    return out;
}

}  // namespace

std::vector<double> uniform_grid(double t0, double t1, double rate_hz) {
    if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "grid rate must be positive");
    if (!(t1 > t0)) throw Error(ErrorCode::InvalidConfig, "grid span must be positive");
    const double span = t1 - t0;
    const auto n = std::max<long long>(1, std::llround(span * rate_hz));
    std::vector<double> times(static_cast<std::size_t>(n) + 1);
    for (long long k = 0; k <= n; ++k) {
        times[static_cast<std::size_t>(k)] = t0 + span * static_cast<double>(k) / static_cast<double>(n);
    }
    times.back() = t1;
    return times;
}

Trajectory resample(const Trajectory& traj, double rate_hz) {
    if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "resample rate must be positive");
    if (traj.size() < 2) throw Error(ErrorCode::EmptyTrajectory, "resample needs at least two samples");
    const auto times = uniform_grid(traj.front().t, traj.back().t, rate_hz);
    return Trajectory(interpolate_sorted(traj.samples(), times), traj.label());
}

Trajectory resample_at(const Trajectory& traj, std::span<const double> times) {
    if (traj.size() < 2) throw Error(ErrorCode::EmptyTrajectory, "resample_at needs at least two samples");
    const double tol = 1e-9 * std::max(1.0, std::abs(traj.back().t));
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < traj.front().t - tol || times[i] > traj.back().t + tol) {
            throw Error(ErrorCode::OutOfBounds, "resample time outside trajectory span");
        }
        if (i > 0 && !(times[i] > times[i - 1])) throw Error(ErrorCode::NonMonotoneTime, "resample times not increasing");
    }
    return Trajectory(interpolate_sorted(traj.samples(), times), traj.label());
}

std::pair<Trajectory, Trajectory> common_grid(const Trajectory& a, const Trajectory& b, double rate_hz) {
    if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::EmptyTrajectory, "common_grid needs two samples each");
    if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "rate must be positive");
    const double t0 = std::max(a.front().t, b.front().t);
    const double t1 = std::min(a.back().t, b.back().t);
    if (!(t1 > t0)) throw Error(ErrorCode::GridMismatch, "trajectories do not overlap in time");
    const auto times = uniform_grid(t0, t1, rate_hz);
    return {resample_at(a, times), resample_at(b, times)};
}

Trajectory lowpass(const Trajectory& traj, double window_s) {
    if (window_s < 0.0) throw Error(ErrorCode::InvalidConfig, "lowpass window must be >= 0");
    if (!traj.is_uniform()) throw Error(ErrorCode::NonUniformGrid, "lowpass requires a uniform grid");
    const std::size_t n = traj.size();
    if (window_s == 0.0 || n < 3) return traj;
    const double dt = traj.duration() / static_cast<double>(n - 1);
    const auto width = static_cast<std::size_t>(std::llround(window_s / dt));
    const std::size_t half = width / 2;
    if (half == 0) return traj;

    const auto src = traj.samples();
    std::vector<Sample> out(src.begin(), src.end());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t h = std::min({half, i, n - 1 - i});
        double sx = 0.0;
        double sy = 0.0;
        for (std::size_t k = i - h; k <= i + h; ++k) {
            sx += src[k].x;
            sy += src[k].y;
        }
        const double count = static_cast<double>(2 * h + 1);
        out[i].x = sx / count;
        out[i].y = sy / count;
    }
    return Trajectory(std::move(out), traj.label());
}

VelocitySeries velocity(const Trajectory& traj) {
    const std::size_t n = traj.size();
    if (n < 3) throw Error(ErrorCode::TooFewSamples, "velocity needs at least three samples");
    if (!traj.is_uniform()) throw Error(ErrorCode::NonUniformGrid, "velocity requires a uniform grid");
    const double h = traj.duration() / static_cast<double>(n - 1);
    const auto s = traj.samples();

    // Stencils are applied to differences from the evaluation sample so that
    // constant signals give exactly zero.
    auto diff = [&](auto coord) {
        std::vector<double> d(n);
        if (n < 5) {
            auto f = [&](std::size_t j, std::size_t i) { return coord(s[j]) - coord(s[i]); };
            d[0] = f(1, 0) / h;
            d[n - 1] = f(n - 1, n - 2) / h;
            for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f(i + 1, i) - f(i - 1, i)) / (2.0 * h);
            return d;
        }
        const double k = 12.0 * h;
        auto f = [&](std::size_t j, std::size_t i) { return coord(s[j]) - coord(s[i]); };
        d[0] = (48.0 * f(1, 0) - 36.0 * f(2, 0) + 16.0 * f(3, 0) - 3.0 * f(4, 0)) / k;
        d[1] = (-3.0 * f(0, 1) + 18.0 * f(2, 1) - 6.0 * f(3, 1) + f(4, 1)) / k;
        for (std::size_t i = 2; i + 2 < n; ++i) {
            d[i] = (f(i - 2, i) - 8.0 * f(i - 1, i) + 8.0 * f(i + 1, i) - f(i + 2, i)) / k;
        }
        const std::size_t a = n - 2;
        const std::size_t b = n - 1;
        d[a] = (3.0 * f(b, a) - 18.0 * f(a - 1, a) + 6.0 * f(a - 2, a) - f(a - 3, a)) / k;
        d[b] = (-48.0 * f(b - 1, b) + 36.0 * f(b - 2, b) - 16.0 * f(b - 3, b) + 3.0 * f(b - 4, b)) / k;
        return d;
    };

    const auto vx = diff([](const Sample& p) { return p.x; });
    const auto vy = diff([](const Sample& p) { return p.y; });
    VelocitySeries out;
    out.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.samples.push_back({s[i].t, vx[i], vy[i], std::hypot(vx[i], vy[i])});
    return out;
}

std::vector<double> project(const Trajectory& traj, Vec2 axis) {
    std::vector<double> out;
    out.reserve(traj.size());
    for (const auto& s : traj.samples()) out.push_back(s.x * axis.x + s.y * axis.y);
    return out;
}

PeakToPeak peak_to_peak(const Trajectory& traj, Vec2 axis) {
    if (traj.empty()) throw Error(ErrorCode::EmptyTrajectory, "peak_to_peak on empty trajectory");
    const Vec2 u = normalized(axis);
    if (u == Vec2{}) throw Error(ErrorCode::InvalidConfig, "peak_to_peak axis must be non-zero");
    const auto p = project(traj, u);
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    return {*lo, *hi, u};
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t_s,x_mm,y_mm\n";
    for (const auto& s : traj.samples()) {
        os << format_double(s.t) << ',' << format_double(s.x) << ',' << format_double(s.y) << '\n';
    }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + path);
    write_trajectory_csv(os, traj);
}

Trajectory read_trajectory_csv(std::istream& is, TrajectoryLabel label) {
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::Io, "missing trajectory CSV header");
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"t_s", "x_mm", "y_mm"}) {
        throw Error(ErrorCode::Io, "unexpected trajectory CSV header: " + line);
    }
    std::vector<Sample> samples;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw Error(ErrorCode::Io, "line " + std::to_string(lineno) + ": expected 3 fields");
        double v[3];
        for (int k = 0; k < 3; ++k) {
            char* end = nullptr;
            v[k] = std::strtod(fields[static_cast<std::size_t>(k)].c_str(), &end);
            if (end == fields[static_cast<std::size_t>(k)].c_str() || *end != '\0') {
                throw Error(ErrorCode::Io, "line " + std::to_string(lineno) + ": not a number");
            }
        }
        samples.push_back({v[0], v[1], v[2]});
    }
    return Trajectory(std::move(samples), label);
}

Trajectory read_trajectory_csv(const std::string& path, TrajectoryLabel label) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
    return read_trajectory_csv(is, label);
}

}  // namespace loadslip

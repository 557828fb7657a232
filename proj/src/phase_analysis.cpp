#include "loadslip/phase_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "loadslip/error.hpp"
#include "loadslip/text.hpp"

namespace loadslip {

void PhaseConfig::validate() const {
    if (!(speed_threshold > 0.0) || !(min_segment_duration > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "phase thresholds must be > 0");
    }
}

std::string_view to_string(PhaseKind kind) noexcept {
    switch (kind) {
        case PhaseKind::Slip: return "Slip";
        case PhaseKind::LoadUnload: return "LoadUnload";
        case PhaseKind::LoadSlip: return "LoadSlip";
    }
    return "?";
}

PhaseKind phase_kind_from_string(std::string_view s) {
    if (s == "Slip") return PhaseKind::Slip;
    if (s == "LoadUnload") return PhaseKind::LoadUnload;
    if (s == "LoadSlip") return PhaseKind::LoadSlip;
    throw Error(ErrorCode::SchemaMismatch, "unknown phase kind: " + std::string(s));
}

std::string_view to_string(EstimateMethod m) noexcept {
    return m == EstimateMethod::PhaseDesignation ? "PhaseDesignation" : "PeakToPeak";
}

PhaseKind classify_sample(double dv, double v_img, double threshold) noexcept {
    if (std::abs(dv) < threshold) return PhaseKind::Slip;
    if (std::abs(v_img) < threshold) return PhaseKind::LoadUnload;
    return PhaseKind::LoadSlip;
}

Vec2 principal_axis(const Trajectory& traj) {
    if (traj.empty()) throw Error(ErrorCode::EmptyTrajectory, "principal_axis on empty trajectory");
    double mx = 0.0;
    double my = 0.0;
    for (const auto& s : traj.samples()) {
        mx += s.x;
        my += s.y;
    }
    const double n = static_cast<double>(traj.size());
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (const auto& s : traj.samples()) {
        sxx += (s.x - mx) * (s.x - mx);
        syy += (s.y - my) * (s.y - my);
        sxy += (s.x - mx) * (s.y - my);
    }
    if (sxx == 0.0 && syy == 0.0) return {1.0, 0.0};
    const double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    Vec2 axis{std::cos(angle), std::sin(angle)};
    if (std::abs(axis.x) < 1e-12) axis.x = 0.0;
    if (std::abs(axis.y) < 1e-12) axis.y = 0.0;
    if (axis.x < 0.0 || (axis.x == 0.0 && axis.y < 0.0)) axis = -axis;
    return normalized(axis);
}

std::vector<Reversal> detect_reversals(const Trajectory& probe, Vec2 axis, double threshold) {
    const auto v = velocity(probe).along(axis);
    const auto pos = project(probe, axis);
    std::vector<Reversal> out;
    int dir = 0;
    std::size_t extreme = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const int s = v[i] >= threshold ? 1 : (v[i] <= -threshold ? -1 : 0);
        if (dir != 0) {
            const bool further = dir > 0 ? pos[i] > pos[extreme] : pos[i] < pos[extreme];
            if (further) extreme = i;
        }
        if (s != 0 && s != dir) {
            if (dir != 0) out.push_back({extreme, probe[extreme].t});
            dir = s;
            extreme = i;
        }
    }
    return out;
}

namespace {

struct RawSegment {
    PhaseKind kind;
    std::size_t first;  // sample index of the start boundary
    std::size_t last;   // sample index of the end boundary
};

void merge_same_kind(std::vector<RawSegment>& segs) {
    std::vector<RawSegment> out;
    for (const auto& s : segs) {
        if (!out.empty() && out.back().kind == s.kind) {
            out.back().last = s.last;
        } else {
            out.push_back(s);
        }
    }
    segs = std::move(out);
}

}  // namespace

std::vector<PhaseSegment> classify_phases(const Trajectory& probe, const Trajectory& image, const PhaseConfig& cfg) {
    cfg.validate();
    if (probe.size() != image.size()) throw Error(ErrorCode::GridMismatch, "probe and image sample counts differ");
    for (std::size_t i = 0; i < probe.size(); ++i) {
        if (std::abs(probe[i].t - image[i].t) > 1e-9) throw Error(ErrorCode::GridMismatch, "time bases differ");
    }
    if (probe.size() < 3) throw Error(ErrorCode::TooFewSamples, "classification needs at least three samples");
    const double dt = probe.duration() / static_cast<double>(probe.size() - 1);
    if (probe.path_length() < 10.0 * cfg.speed_threshold * dt) {
        throw Error(ErrorCode::DegenerateScan, "probe barely moves");
    }

    const Vec2 axis = principal_axis(probe);
    const auto vp = velocity(probe).along(axis);
    const auto vi = velocity(image).along(axis);
    const std::size_t n = probe.size();

    std::vector<RawSegment> segs;
    for (std::size_t i = 0; i < n; ++i) {
        const PhaseKind k = classify_sample(vp[i] - vi[i], vi[i], cfg.speed_threshold);
        if (segs.empty() || segs.back().kind != k) {
            if (!segs.empty()) segs.back().last = i;
            segs.push_back({k, i, i});
        }
    }
    segs.back().last = n - 1;
    if (segs.size() > 1 && segs.back().first == segs.back().last) {
        segs.pop_back();
        segs.back().last = n - 1;
    }

    auto duration = [&](const RawSegment& s) { return probe[s.last].t - probe[s.first].t; };
    while (segs.size() > 1) {
        std::size_t shortest = segs.size();
        for (std::size_t i = 0; i < segs.size(); ++i) {
            if (duration(segs[i]) < cfg.min_segment_duration &&
                (shortest == segs.size() || duration(segs[i]) < duration(segs[shortest]))) {
                shortest = i;
            }
        }
        if (shortest == segs.size()) break;
        std::size_t target;
        if (shortest == 0) {
            target = 1;
        } else if (shortest + 1 == segs.size()) {
            target = shortest - 1;
        } else {
            target = duration(segs[shortest + 1]) > duration(segs[shortest - 1]) ? shortest + 1 : shortest - 1;
        }
        segs[shortest].kind = segs[target].kind;
        merge_same_kind(segs);
    }

    std::vector<double> cum(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) cum[i] = cum[i - 1] + distance(probe[i].pos(), probe[i - 1].pos());

    const auto reversals = detect_reversals(probe, axis, cfg.speed_threshold);
    const double delta = 0.5 * cfg.min_segment_duration;

    std::vector<PhaseSegment> out;
    out.reserve(segs.size());
    for (const auto& s : segs) {
        PhaseSegment seg;
        seg.kind = s.kind;
        seg.t_start = probe[s.first].t;
        seg.t_end = probe[s.last].t;
        seg.probe_span = cum[s.last] - cum[s.first];
        seg.interior = !reversals.empty() && seg.t_end > reversals.front().t + delta &&
                       seg.t_start < reversals.back().t + delta;
        out.push_back(seg);
    }
    return out;
}

LoadingDistanceEstimate estimate_by_phase_designation(const std::vector<PhaseSegment>& segments) {
    LoadingDistanceEstimate est;
    est.method = EstimateMethod::PhaseDesignation;
    for (const auto& s : segments) {
        if (!s.interior) continue;
        if (s.kind == PhaseKind::LoadUnload) est.load_unload_spans.push_back(s.probe_span);
        if (s.kind == PhaseKind::LoadSlip) est.load_slip_spans.push_back(s.probe_span);
    }
    if (est.load_unload_spans.empty()) throw Error(ErrorCode::NoLoadingSegments, "no interior LoadUnload segment");
    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    est.raw_value = mean(est.load_unload_spans) / 2.0 + mean(est.load_slip_spans) / 2.0;
    est.value = std::max(est.raw_value, 0.0);
    est.clamped = est.raw_value < 0.0;
    est.n_segments_or_cycles = est.load_unload_spans.size() + est.load_slip_spans.size();
    return est;
}

LoadingDistanceEstimate estimate_by_peak_to_peak(double d_r, const PeakToPeak& image_range) {
    if (!(d_r > 0.0)) throw Error(ErrorCode::InvalidConfig, "d_r must be > 0");
    const double range = image_range.range();
    if (range < 0.0) throw Error(ErrorCode::InvalidRange, "p_max < p_min");
    if (range > d_r + 0.1 * d_r) throw Error(ErrorCode::InvalidRange, "image range exceeds probe range by > 10%");
    LoadingDistanceEstimate est;
    est.method = EstimateMethod::PeakToPeak;
    est.raw_value = (d_r - range) / 2.0;
    est.value = std::max(est.raw_value, 0.0);
    est.clamped = est.raw_value < 0.0;
    est.n_segments_or_cycles = 1;
    est.cycle_values = {est.value};
    return est;
}

LoadingDistanceEstimate estimate_line_scan_peak_to_peak(const Trajectory& probe, const Trajectory& image,
                                                        double threshold) {
    return estimate_line_scan_peak_to_peak(probe, image, detect_reversals(probe, principal_axis(probe), threshold));
}

LoadingDistanceEstimate estimate_line_scan_peak_to_peak(const Trajectory& probe, const Trajectory& image,
                                                        const std::vector<Reversal>& reversals, std::size_t pad) {
    if (probe.size() != image.size()) throw Error(ErrorCode::GridMismatch, "probe and image sample counts differ");
    const Vec2 axis = principal_axis(probe);
    if (reversals.empty()) throw Error(ErrorCode::DegenerateScan, "line scan has no reversal");
    const auto pp = project(probe, axis);
    const auto pi = project(image, axis);

    LoadingDistanceEstimate est;
    est.method = EstimateMethod::PeakToPeak;
    double raw_sum = 0.0;
    for (std::size_t k = 0; k < reversals.size(); ++k) {
        const std::size_t a = reversals[k].index > pad ? reversals[k].index - pad : 0;
        const std::size_t b =
            k + 1 < reversals.size() ? std::min(reversals[k + 1].index + pad, probe.size() - 1) : probe.size() - 1;
        if (b <= a) continue;
        const auto [plo, phi] = std::minmax_element(pp.begin() + static_cast<std::ptrdiff_t>(a),
                                                    pp.begin() + static_cast<std::ptrdiff_t>(b) + 1);
        const auto [ilo, ihi] = std::minmax_element(pi.begin() + static_cast<std::ptrdiff_t>(a),
                                                    pi.begin() + static_cast<std::ptrdiff_t>(b) + 1);
        const auto one = estimate_by_peak_to_peak(*phi - *plo, PeakToPeak{*ilo, *ihi, axis});
        est.cycle_values.push_back(one.value);
        raw_sum += one.raw_value;
        est.clamped = est.clamped || one.clamped;
    }
    if (est.cycle_values.empty()) throw Error(ErrorCode::DegenerateScan, "no complete stroke");
    const double n = static_cast<double>(est.cycle_values.size());
    est.raw_value = raw_sum / n;
    est.value = std::accumulate(est.cycle_values.begin(), est.cycle_values.end(), 0.0) / n;
    est.n_segments_or_cycles = est.cycle_values.size();
    return est;
}

LineScanAnalysis analyze_line_scan(const Trajectory& probe, const Trajectory& image, const AnalysisConfig& cfg) {
    auto [p, i] = common_grid(probe, image, cfg.rate);
    LineScanAnalysis out;
    out.probe = lowpass(p, cfg.window);
    out.image = lowpass(i, cfg.window);
    out.axis = principal_axis(out.probe);
    out.segments = classify_phases(out.probe, out.image, cfg.phase);
    out.phase_estimate = estimate_by_phase_designation(out.segments);
    const auto reversals = detect_reversals(out.probe, out.axis, cfg.phase.speed_threshold);
    const auto pad = static_cast<std::size_t>(std::llround(cfg.window * cfg.rate));
    out.p2p_estimate = estimate_line_scan_peak_to_peak(p, i, reversals, pad);
    return out;
}

void write_segments_csv(std::ostream& os, const std::vector<PhaseSegment>& segments) {
    os << "kind,t_start_s,t_end_s,probe_span_mm\n";
    for (const auto& s : segments) {
        os << to_string(s.kind) << ',' << format_double(s.t_start) << ',' << format_double(s.t_end) << ','
           << format_double(s.probe_span) << '\n';
    }
}

}  // namespace loadslip

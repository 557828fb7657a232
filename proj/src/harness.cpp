#include "loadslip/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "loadslip/error.hpp"
#include "loadslip/rng.hpp"
#include "loadslip/scan_planner.hpp"
#include "loadslip/text.hpp"

namespace loadslip {

using ojson = nlohmann::ordered_json;

std::string_view to_string(ExperimentMethod m) noexcept {
    return m == ExperimentMethod::Protocol ? "protocol" : "line_scan";
}

ExperimentMethod experiment_method_from_string(std::string_view s) {
    if (s == "protocol") return ExperimentMethod::Protocol;
    if (s == "line_scan") return ExperimentMethod::LineScan;
    throw Error(ErrorCode::InvalidConfig, "unknown experiment method: " + std::string(s));
}

void ExperimentSpec::validate() const {
    if (name.empty()) throw Error(ErrorCode::InvalidConfig, "experiment needs a name");
    if (locations.empty()) throw Error(ErrorCode::InvalidConfig, "experiment needs at least one location");
    for (const auto& l : locations) l.tissue.validate();
    noise.validate();
    if (!(sim.control_rate > 0.0) || !(sim.frame_rate > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "simulation rates must be > 0");
    }
    protocol.validate();
    analysis.phase.validate();
    if (!(analysis.rate > 0.0) || !(analysis.window >= 0.0)) throw Error(ErrorCode::InvalidConfig, "bad analysis config");
    if (!(line.length > 0.0) || line.cycles < 1) throw Error(ErrorCode::InvalidConfig, "bad line scan setup");
    for (double s : speeds) {
        if (!(s > 0.0)) throw Error(ErrorCode::InvalidConfig, "sweep speeds must be > 0");
    }
    for (double d : distances) {
        if (!(d > 0.0)) throw Error(ErrorCode::InvalidConfig, "sweep distances must be > 0");
    }
    if (repetitions < 1) throw Error(ErrorCode::InvalidConfig, "repetitions must be >= 1");
}

// ---------------------------------------------------------------- spec JSON

namespace {

void check_keys(const ojson& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorCode::SchemaMismatch, where + " must be an object");
    for (const auto& item : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw Error(ErrorCode::InvalidConfig, "unknown key '" + item.key() + "' in " + where);
        }
    }
}

template <class T>
void read(const ojson& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::SchemaMismatch, std::string("field '") + key + "' has the wrong type");
    }
}

void read_tissue(const ojson& j, TissueParams& t, const std::string& where) {
    check_keys(j, {"label", "loading_distance", "load_slip_span", "indentation_depth"}, where);
    read(j, "loading_distance", t.loading_distance);
    read(j, "load_slip_span", t.load_slip_span);
    read(j, "indentation_depth", t.indentation_depth);
}

ojson tissue_json(const TissueParams& t) {
    return {{"loading_distance", t.loading_distance},
            {"load_slip_span", t.load_slip_span},
            {"indentation_depth", t.indentation_depth}};
}

}  // namespace

ExperimentSpec parse_experiment_spec(std::string_view json_text) {
    ojson j;
    try {
        j = ojson::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("experiment spec is not valid JSON: ") + e.what());
    }
    check_keys(j, {"name", "seed", "method", "tissue", "locations", "noise", "sim", "protocol", "line_scan", "analysis",
                   "sweep"},
               "experiment spec");
    ExperimentSpec s;
    read(j, "name", s.name);
    read(j, "seed", s.seed);
    if (j.contains("method")) {
        std::string m;
        read(j, "method", m);
        s.method = experiment_method_from_string(m);
    }
    TissueParams base;
    if (j.contains("tissue")) read_tissue(j["tissue"], base, "tissue");
    s.locations = {{"", base}};
    if (j.contains("locations")) {
        if (!j["locations"].is_array()) throw Error(ErrorCode::SchemaMismatch, "locations must be an array");
        s.locations.clear();
        for (const auto& l : j["locations"]) {
            Location loc{"", base};
            read_tissue(l, loc.tissue, "location");
            read(l, "label", loc.label);
            s.locations.push_back(std::move(loc));
        }
    }
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        check_keys(n, {"robot_tracking_sigma", "corner_error_max", "online_step_sigma"}, "noise");
        read(n, "robot_tracking_sigma", s.noise.robot_tracking_sigma);
        read(n, "corner_error_max", s.noise.corner_error_max);
        read(n, "online_step_sigma", s.noise.online_step_sigma);
    }
    if (j.contains("sim")) {
        const auto& n = j["sim"];
        check_keys(n, {"control_rate", "frame_rate"}, "sim");
        read(n, "control_rate", s.sim.control_rate);
        read(n, "frame_rate", s.sim.frame_rate);
    }
    if (j.contains("protocol")) {
        const auto& n = j["protocol"];
        check_keys(n, {"speed", "d_i", "d_r", "direction"}, "protocol");
        read(n, "speed", s.protocol.speed);
        read(n, "d_i", s.protocol.d_i);
        read(n, "d_r", s.protocol.d_r);
        if (n.contains("direction")) {
            std::vector<double> d;
            read(n, "direction", d);
            if (d.size() != 2) throw Error(ErrorCode::SchemaMismatch, "protocol direction must have two entries");
            s.protocol.direction = {d[0], d[1]};
        }
    }
    if (j.contains("line_scan")) {
        const auto& n = j["line_scan"];
        check_keys(n, {"length", "cycles"}, "line_scan");
        read(n, "length", s.line.length);
        read(n, "cycles", s.line.cycles);
    }
    if (j.contains("analysis")) {
        const auto& n = j["analysis"];
        check_keys(n, {"rate", "window", "speed_threshold", "min_segment_duration"}, "analysis");
        read(n, "rate", s.analysis.rate);
        read(n, "window", s.analysis.window);
        read(n, "speed_threshold", s.analysis.phase.speed_threshold);
        read(n, "min_segment_duration", s.analysis.phase.min_segment_duration);
    }
    if (j.contains("sweep")) {
        const auto& n = j["sweep"];
        check_keys(n, {"speeds", "distances", "repetitions"}, "sweep");
        read(n, "speeds", s.speeds);
        read(n, "distances", s.distances);
        read(n, "repetitions", s.repetitions);
    }
    s.validate();
    return s;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_experiment_spec(ss.str());
}

std::string experiment_spec_to_json(const ExperimentSpec& s) {
    ojson j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["method"] = std::string(to_string(s.method));
    ojson locs = ojson::array();
    for (const auto& l : s.locations) {
        ojson t = tissue_json(l.tissue);
        t["label"] = l.label;
        locs.push_back(std::move(t));
    }
    j["locations"] = std::move(locs);
    j["noise"] = {{"robot_tracking_sigma", s.noise.robot_tracking_sigma},
                  {"corner_error_max", s.noise.corner_error_max},
                  {"online_step_sigma", s.noise.online_step_sigma}};
    j["sim"] = {{"control_rate", s.sim.control_rate}, {"frame_rate", s.sim.frame_rate}};
    j["protocol"] = {{"speed", s.protocol.speed},
                     {"d_i", s.protocol.d_i},
                     {"d_r", s.protocol.d_r},
                     {"direction", {s.protocol.direction.x, s.protocol.direction.y}}};
    j["line_scan"] = {{"length", s.line.length}, {"cycles", s.line.cycles}};
    j["analysis"] = {{"rate", s.analysis.rate},
                     {"window", s.analysis.window},
                     {"speed_threshold", s.analysis.phase.speed_threshold},
                     {"min_segment_duration", s.analysis.phase.min_segment_duration}};
    j["sweep"] = {{"speeds", s.speeds}, {"distances", s.distances}, {"repetitions", s.repetitions}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- tables

ColumnStats column_stats(const std::vector<double>& values) {
    ColumnStats c;
    double sum = 0.0;
    c.min = std::numeric_limits<double>::infinity();
    c.max = -c.min;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        ++c.n;
        sum += v;
        c.min = std::min(c.min, v);
        c.max = std::max(c.max, v);
    }
    if (c.n == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {0, nan, nan, nan, nan};
    }
    c.mean = sum / static_cast<double>(c.n);
    if (c.n >= 2) {
        double ss = 0.0;
        for (double v : values) {
            if (std::isfinite(v)) ss += (v - c.mean) * (v - c.mean);
        }
        c.std = std::sqrt(ss / static_cast<double>(c.n - 1));
    }
    return c;
}

void SummaryTable::compute_footer() {
    footer.clear();
    for (std::size_t k = 0; k < columns.size(); ++k) {
        std::vector<double> col;
        for (const auto& r : rows) col.push_back(k < r.values.size() ? r.values[k] : std::nan(""));
        footer.push_back(column_stats(col));
    }
}

std::vector<std::string> SummaryTable::conditions() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
        if (std::find(out.begin(), out.end(), r.condition) == out.end()) out.push_back(r.condition);
    }
    return out;
}

// ---------------------------------------------------------------- runs

namespace {

std::string condition_label(const Location& loc, bool show_loc, double speed, double dist) {
    std::string s;
    if (show_loc) s += "loc=" + (loc.label.empty() ? std::string("-") : loc.label) + ";";
    s += "speed=" + format_double(speed, 6) + ";dist=" + format_double(dist, 6);
    return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + p.string());
    os << text;
}

ojson number_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

}  // namespace

SummaryTable run_experiment(const ExperimentSpec& spec, const std::optional<std::filesystem::path>& out_dir) {
    spec.validate();
    SummaryTable table;
    table.name = spec.name;
    table.method = std::string(to_string(spec.method));
    table.columns = spec.method == ExperimentMethod::Protocol
                        ? std::vector<std::string>{"estimate_mm"}
                        : std::vector<std::string>{"phase_designation_mm", "peak_to_peak_mm"};

    const std::vector<double> speeds = spec.speeds.empty() ? std::vector<double>{spec.protocol.speed} : spec.speeds;
    const double default_dist = spec.method == ExperimentMethod::Protocol ? spec.protocol.d_r : spec.line.length;
    const std::vector<double> dists = spec.distances.empty() ? std::vector<double>{default_dist} : spec.distances;
    const bool show_loc = spec.locations.size() > 1 || !spec.locations.front().label.empty();

    if (out_dir) std::filesystem::create_directories(*out_dir / "runs");

    std::size_t cond_idx = 0;
    std::size_t run_idx = 0;
    for (const auto& loc : spec.locations) {
        for (double speed : speeds) {
            for (double dist : dists) {
                const std::string cond = condition_label(loc, show_loc, speed, dist);
                const std::uint64_t cond_seed = derive_seed(spec.seed, cond_idx);
                for (int rep = 0; rep < spec.repetitions; ++rep, ++run_idx) {
                    char id[32];
                    std::snprintf(id, sizeof id, "r%03zu", run_idx);
                    RunRow row{id, cond, rep, {}, "Valid"};
                    NoiseConfig noise = spec.noise;
                    noise.seed = derive_seed(cond_seed, static_cast<std::uint64_t>(rep));

                    Trajectory probe, image;
                    std::vector<PhaseSegment> segments;
                    try {
                        if (spec.method == ExperimentMethod::Protocol) {
                            SimulatedExecutor ex(loc.tissue, noise, spec.sim);
                            ProtocolConfig pc = spec.protocol;
                            pc.speed = speed;
                            pc.d_r = dist;
                            const auto res = run_protocol(ex, pc);
                            row.values = {res.estimate.value};
                            row.validity = std::string(to_string(res.validity));
                            probe = res.recorded_probe;
                            image = res.recorded_image;
                        } else {
                            ScanConfig sc;
                            sc.shape = ScanShape::Line;
                            sc.extent = {dist, 0.0};
                            sc.speed = speed;
                            sc.repetitions = spec.line.cycles;
                            const auto sim = simulate_scan(loc.tissue, plan_line(sc).waypoints, noise, spec.sim);
                            const auto a = analyze_line_scan(sim.probe_measured, sim.image_measured, spec.analysis);
                            row.values = {a.phase_estimate.value, a.p2p_estimate.value};
                            if (a.p2p_estimate.clamped) row.validity = "Clamped";
                            probe = sim.probe_measured;
                            image = sim.image_measured;
                            segments = a.segments;
                        }
                    } catch (const Error& e) {
                        throw Error(e.code(), "run " + row.run_id + " (" + cond + "): " + e.what());
                    }

                    if (out_dir) {
                        const auto dir = *out_dir / "runs" / row.run_id;
                        std::filesystem::create_directories(dir);
                        write_trajectory_csv((dir / "probe.csv").string(), probe);
                        write_trajectory_csv((dir / "image.csv").string(), image);
                        if (!segments.empty()) {
                            std::ostringstream ss;
                            write_segments_csv(ss, segments);
                            write_text(dir / "segments.csv", ss.str());
                        }
                        ojson est;
                        est["run_id"] = row.run_id;
                        est["condition"] = row.condition;
                        est["repetition"] = row.repetition;
                        est["seed"] = noise.seed;
                        est["tissue"] = tissue_json(loc.tissue);
                        ojson vals;
                        for (std::size_t k = 0; k < table.columns.size(); ++k) {
                            vals[table.columns[k]] = number_or_null(row.values[k]);
                        }
                        est["values"] = std::move(vals);
                        est["validity"] = row.validity;
                        write_text(dir / "estimate.json", est.dump(2) + "\n");
                    }
                    table.rows.push_back(std::move(row));
                }
                ++cond_idx;
            }
        }
    }
    table.compute_footer();
    if (out_dir) {
        std::ostringstream csv;
        write_summary_csv(csv, table);
        write_text(*out_dir / "summary.csv", csv.str());
        write_text(*out_dir / "summary.json", summary_to_json(table));
        write_text(*out_dir / "experiment.json", experiment_spec_to_json(spec));
    }
    return table;
}

// ---------------------------------------------------------------- summary I/O

namespace {

std::string csv_num(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace

void write_summary_csv(std::ostream& os, const SummaryTable& t) {
    os << "run_id,condition,repetition";
    for (const auto& c : t.columns) os << ',' << c;
    os << ",validity\n";
    for (const auto& r : t.rows) {
        os << r.run_id << ',' << r.condition << ',' << r.repetition;
        for (std::size_t k = 0; k < t.columns.size(); ++k) os << ',' << csv_num(k < r.values.size() ? r.values[k] : NAN);
        os << ',' << r.validity << '\n';
    }
    const char* names[] = {"mean", "std", "min", "max"};
    for (int f = 0; f < 4; ++f) {
        os << names[f] << ",,";
        for (const auto& s : t.footer) {
            const double v = f == 0 ? s.mean : f == 1 ? s.std : f == 2 ? s.min : s.max;
            os << ',' << csv_num(v);
        }
        os << ",\n";
    }
}

std::string summary_to_json(const SummaryTable& t) {
    ojson j;
    j["schema"] = "loadslip.summary/1";
    j["name"] = t.name;
    j["method"] = t.method;
    j["columns"] = t.columns;
    ojson rows = ojson::array();
    for (const auto& r : t.rows) {
        ojson vals = ojson::array();
        for (double v : r.values) vals.push_back(number_or_null(v));
        rows.push_back({{"run_id", r.run_id},
                        {"condition", r.condition},
                        {"repetition", r.repetition},
                        {"values", std::move(vals)},
                        {"validity", r.validity}});
    }
    j["rows"] = std::move(rows);
    ojson foot = ojson::array();
    for (const auto& s : t.footer) {
        foot.push_back({{"n", s.n},
                        {"mean", number_or_null(s.mean)},
                        {"std", number_or_null(s.std)},
                        {"min", number_or_null(s.min)},
                        {"max", number_or_null(s.max)}});
    }
    j["footer"] = std::move(foot);
    return j.dump(2) + "\n";
}

SummaryTable summary_from_json(std::string_view json_text) {
    try {
        const ojson j = ojson::parse(json_text);
        if (!j.is_object() || j.value("schema", "") != "loadslip.summary/1") {
            throw Error(ErrorCode::SchemaMismatch, "document is not a loadslip summary");
        }
        SummaryTable t;
        t.name = j.at("name").get<std::string>();
        t.method = j.at("method").get<std::string>();
        t.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto& r : j.at("rows")) {
            RunRow row;
            row.run_id = r.at("run_id").get<std::string>();
            row.condition = r.at("condition").get<std::string>();
            row.repetition = r.at("repetition").get<int>();
            row.validity = r.at("validity").get<std::string>();
            for (const auto& v : r.at("values")) row.values.push_back(v.is_null() ? std::nan("") : v.get<double>());
            if (row.values.size() != t.columns.size()) {
                throw Error(ErrorCode::SchemaMismatch, "row " + row.run_id + " does not match the column count");
            }
            t.rows.push_back(std::move(row));
        }
        t.compute_footer();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("malformed summary: ") + e.what());
    }
}

// ---------------------------------------------------------------- report

double agreement_percent(double a, double b) noexcept { return std::abs(a - b) / (0.5 * (a + b)) * 100.0; }

Report make_report(const std::vector<SummaryTable>& summaries) {
    if (summaries.empty()) throw Error(ErrorCode::SchemaMismatch, "report needs at least one summary");
    Report rep;
    SummaryTable& m = rep.merged;
    m.name = summaries.size() == 1 ? summaries.front().name : "report";
    m.method = summaries.front().method;
    for (const auto& s : summaries) {
        if (s.method != m.method) m.method = "mixed";
        for (const auto& c : s.columns) {
            if (std::find(m.columns.begin(), m.columns.end(), c) == m.columns.end()) m.columns.push_back(c);
        }
    }
    for (const auto& s : summaries) {
        for (const auto& r : s.rows) {
            RunRow row = r;
            if (summaries.size() > 1) row.run_id = s.name + "/" + r.run_id;
            row.values.assign(m.columns.size(), std::nan(""));
            for (std::size_t k = 0; k < s.columns.size(); ++k) {
                const auto pos = std::find(m.columns.begin(), m.columns.end(), s.columns[k]) - m.columns.begin();
                row.values[static_cast<std::size_t>(pos)] = r.values.at(k);
            }
            m.rows.push_back(std::move(row));
        }
    }
    m.compute_footer();

    auto means_for = [&](const std::string& cond) {
        std::vector<std::vector<double>> cols(m.columns.size());
        for (const auto& r : m.rows) {
            if (r.condition != cond) continue;
            for (std::size_t k = 0; k < m.columns.size(); ++k) cols[k].push_back(r.values[k]);
        }
        std::vector<ColumnStats> st;
        for (const auto& c : cols) st.push_back(column_stats(c));
        return st;
    };
    for (const auto& cond : m.conditions()) {
        const auto st = means_for(cond);
        for (std::size_t a = 0; a < st.size(); ++a) {
            for (std::size_t b = a + 1; b < st.size(); ++b) {
                if (st[a].n == 0 || st[b].n == 0) continue;
                rep.agreement.push_back({cond, m.columns[a], m.columns[b], st[a].mean, st[b].mean,
                                         agreement_percent(st[a].mean, st[b].mean)});
            }
        }
    }
    if (!rep.agreement.empty()) {
        std::set<std::pair<std::string, std::string>> pairs;
        for (const auto& a : rep.agreement) pairs.insert({a.column_a, a.column_b});
        for (std::size_t a = 0; a < m.columns.size(); ++a) {
            for (std::size_t b = a + 1; b < m.columns.size(); ++b) {
                if (!pairs.count({m.columns[a], m.columns[b]})) continue;
                const auto& fa = m.footer[a];
                const auto& fb = m.footer[b];
                rep.agreement.push_back(
                    {"(all)", m.columns[a], m.columns[b], fa.mean, fb.mean, agreement_percent(fa.mean, fb.mean)});
            }
        }
    }
    return rep;
}

void write_report_text(std::ostream& os, const Report& r) {
    const SummaryTable& m = r.merged;
    char buf[256];
    os << "Summary: " << m.name << " (" << m.method << ", simulated analog)\n";
    std::snprintf(buf, sizeof buf, "%-24s %-36s", "run", "condition");
    os << buf;
    for (const auto& c : m.columns) {
        std::snprintf(buf, sizeof buf, " %22s", c.c_str());
        os << buf;
    }
    os << "  validity\n";
    auto cell = [&](double v) {
        if (std::isfinite(v)) {
            std::snprintf(buf, sizeof buf, " %22.6f", v);
        } else {
            std::snprintf(buf, sizeof buf, " %22s", "-");
        }
        os << buf;
    };
    for (const auto& row : m.rows) {
        std::snprintf(buf, sizeof buf, "%-24s %-36s", row.run_id.c_str(), row.condition.c_str());
        os << buf;
        for (double v : row.values) cell(v);
        os << "  " << row.validity << '\n';
    }
    const char* names[] = {"Mean", "Std. dev.", "Min", "Max"};
    for (int f = 0; f < 4; ++f) {
        std::snprintf(buf, sizeof buf, "%-24s %-36s", names[f], "");
        os << buf;
        for (const auto& s : m.footer) cell(f == 0 ? s.mean : f == 1 ? s.std : f == 2 ? s.min : s.max);
        os << '\n';
    }
    if (!r.agreement.empty()) {
        os << "\nMethod agreement |a - b| / mean(a, b):\n";
        for (const auto& a : r.agreement) {
            std::snprintf(buf, sizeof buf, "%-36s %s %.6f vs %s %.6f -> %.2f%%\n", a.condition.c_str(), a.column_a.c_str(),
                          a.mean_a, a.column_b.c_str(), a.mean_b, a.percent);
            os << buf;
        }
    }
}

void write_report_csv(std::ostream& os, const Report& r) {
    os << "condition,column_a,column_b,mean_a,mean_b,agreement_pct\n";
    for (const auto& a : r.agreement) {
        os << a.condition << ',' << a.column_a << ',' << a.column_b << ',' << format_double(a.mean_a) << ','
           << format_double(a.mean_b) << ',' << format_double(a.percent) << '\n';
    }
}

}  // namespace loadslip

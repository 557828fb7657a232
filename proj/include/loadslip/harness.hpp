#pragma once

// Experiment registry: JSON experiment specs, speed/distance/location sweeps
// over simulated tissue, summary tables and cross-method reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loadslip/calibration.hpp"
#include "loadslip/phase_analysis.hpp"
#include "loadslip/tissue_sim.hpp"

namespace loadslip {

enum class ExperimentMethod { Protocol, LineScan };

[[nodiscard]] std::string_view to_string(ExperimentMethod m) noexcept;
[[nodiscard]] ExperimentMethod experiment_method_from_string(std::string_view s);

struct Location {
    std::string label;
    TissueParams tissue;
};

struct LineScanSetup {
    double length{1.0};  // mm
    int cycles{10};
};

struct ExperimentSpec {
    std::string name{"experiment"};
    std::uint64_t seed{0};
    ExperimentMethod method{ExperimentMethod::Protocol};
    std::vector<Location> locations{{"", {}}};
    NoiseConfig noise{NoiseConfig::none()};
    SimConfig sim{};
    ProtocolConfig protocol{};
    LineScanSetup line{};
    AnalysisConfig analysis{};
    // Empty sweeps fall back to the protocol speed and d_r (or line length).
    std::vector<double> speeds;
    std::vector<double> distances;
    int repetitions{1};

    void validate() const;
};

// Throws InvalidConfig on bad values or unknown keys, SchemaMismatch on
// wrongly typed fields.
[[nodiscard]] ExperimentSpec parse_experiment_spec(std::string_view json_text);
[[nodiscard]] ExperimentSpec load_experiment_spec(const std::filesystem::path& path);
[[nodiscard]] std::string experiment_spec_to_json(const ExperimentSpec& spec);

struct RunRow {
    std::string run_id;
    std::string condition;
    int repetition{0};
    std::vector<double> values;  // one per column, NaN when unavailable
    std::string validity;
};

struct ColumnStats {
    std::size_t n{0};
    double mean{0.0};
    double std{0.0};  // sample (n - 1); 0 for n < 2
    double min{0.0};
    double max{0.0};
};

[[nodiscard]] ColumnStats column_stats(const std::vector<double>& values);

struct SummaryTable {
    std::string name;
    std::string method;
    std::vector<std::string> columns;
    std::vector<RunRow> rows;
    std::vector<ColumnStats> footer;

    void compute_footer();
    // Rows of one condition, in order of appearance.
    [[nodiscard]] std::vector<std::string> conditions() const;
};

// Runs every (location, speed, distance) condition `repetitions` times. Run
// seeds derive from (seed, condition index, repetition). When out_dir is set,
// per-run CSV/JSON artifacts and summary.{csv,json} are written below it.
[[nodiscard]] SummaryTable run_experiment(const ExperimentSpec& spec,
                                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_summary_csv(std::ostream& os, const SummaryTable& table);
[[nodiscard]] std::string summary_to_json(const SummaryTable& table);
// Throws SchemaMismatch when the document is not a summary.
[[nodiscard]] SummaryTable summary_from_json(std::string_view json_text);

struct AgreementRow {
    std::string condition;  // "(all)" for whole-table means
    std::string column_a;
    std::string column_b;
    double mean_a{0.0};
    double mean_b{0.0};
    double percent{0.0};  // |a - b| / mean(a, b) * 100
};

struct Report {
    SummaryTable merged;
    std::vector<AgreementRow> agreement;
};

[[nodiscard]] double agreement_percent(double a, double b) noexcept;

// Concatenates rows; for every condition (and for the whole table) where two
// different columns both have values, reports their agreement.
[[nodiscard]] Report make_report(const std::vector<SummaryTable>& summaries);
void write_report_text(std::ostream& os, const Report& report);
void write_report_csv(std::ostream& os, const Report& report);

}  // namespace loadslip

#pragma once

#include "dosemav/mle_fit.hpp"
#include "dosemav/simlab.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace dosemav {

/// Malformed CSV input; `line` is 1-based (0 when not tied to a line).
class CsvError : public std::runtime_error {
public:
    CsvError(std::size_t line, const std::string& message)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message),
          line_(line)
    {
    }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Parsed analysis input. Long-form files (`dose,response`) keep the
/// observations; per-arm summaries (`dose,n,mean,sd`) carry statistics only.
struct AnalysisInput {
    std::optional<Dataset> data;
    GroupStats stats;
};

AnalysisInput read_analysis_csv(std::istream& in);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

// Study reports. Every CSV starts with a "# dosemav-<kind> v<version>" line.

inline constexpr const char* kScenarioCsvHeader = "# dosemav-scenario-metrics v1";
inline constexpr const char* kCurveCsvHeader = "# dosemav-selection-curve v1";

/// One row per scenario x estimator x metric (mse per dose, amse, smse,
/// mse_td, smse_td, td_used, td_excluded), plus selection probabilities.
void write_scenario_csv(std::ostream& out, std::span<const ScenarioReport> reports);

/// Reads back the smse/smse_td rows written by write_scenario_csv.
std::vector<SmseRow> read_smse_rows(std::istream& in);

nlohmann::json summary_json(const StudySummary& summary);

/// ASMSE tables: selection estimators, then averaging and bootstrap ones.
void print_summary_tables(std::ostream& out, const StudySummary& summary);

void write_selection_curve_csv(std::ostream& out, const std::string& experiment,
                               std::span<const SelectionCurvePoint> points);

}  // namespace dosemav

#pragma once

#include "dosemav/averaging.hpp"
#include "dosemav/bootstrap.hpp"
#include "dosemav/io.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dosemav {

enum class AnalysisMode { Select, Average, Bootstrap };
std::string_view to_string(AnalysisMode m);
std::optional<AnalysisMode> parse_analysis_mode(std::string_view name);

struct AnalysisOptions {
    std::vector<ModelTag> models{ModelTag::Linear, ModelTag::Quadratic, ModelTag::Emax,
                                 ModelTag::SigEmax, ModelTag::Anova};
    std::vector<Criterion> criteria{kAllCriteria.begin(), kAllCriteria.end()};
    AnalysisMode mode = AnalysisMode::Average;
    std::optional<double> delta;   ///< target effect over placebo
    std::size_t boot_reps = 500;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::size_t grid_points = 11;   ///< even grid added when ANOVA is not a candidate
    unsigned threads = 1;
    FitOptions fit{};
    CriterionOptions criterion{};
};

struct CriterionReport {
    Criterion criterion = Criterion::AIC;
    std::vector<CriterionScore> scores;
    std::vector<double> weights;
    std::size_t selected = 0;
    std::vector<double> boot_freq;   ///< empty unless mode is bootstrap
    std::vector<double> curve;       ///< estimate on the report's dose grid
    std::vector<double> curve_lower, curve_upper;  ///< bootstrap mode only
    std::optional<double> td;
    std::optional<double> td_lower, td_upper;
    double td_retained = 0.0;        ///< averaged weight, or share of kept resamples
};

struct AnalysisReport {
    AnalysisMode mode = AnalysisMode::Average;
    std::vector<FitResult> fits;
    std::vector<double> grid;
    std::optional<double> delta;
    DoseRange range{};
    double level = 0.95;
    std::size_t boot_reps = 0;
    std::uint64_t seed = 0;
    std::vector<CriterionReport> criteria;
};

/// Fits every candidate, scores it under each criterion and forms the
/// selection, weight-averaging or bootstrap estimates of the curve and
/// target dose. Throws PreconditionError for bootstrap without at least two
/// observations per dose.
AnalysisReport analyze(const AnalysisInput& input, const AnalysisOptions& options);

/// Percentage with half-up rounding, e.g. 0.145 -> "15%".
std::string format_percent(double share);

void write_analysis_text(std::ostream& out, const AnalysisReport& report);
void write_analysis_csv(std::ostream& out, const AnalysisReport& report);
nlohmann::json analysis_json(const AnalysisReport& report);

inline constexpr const char* kAnalysisCsvHeader = "# dosemav-analysis v1";
inline constexpr const char* kFitCsvHeader = "# dosemav-fit v1";

/// Parameter names of a model, in ParamVector order.
std::vector<std::string> parameter_names(const ModelKind& model);

void write_fits_csv(std::ostream& out, std::span<const FitResult> fits);
nlohmann::json fits_json(std::span<const FitResult> fits);

}  // namespace dosemav

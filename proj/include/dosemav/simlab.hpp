#pragma once

#include "dosemav/averaging.hpp"
#include "dosemav/bootstrap.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dosemav {

/// Splits N subjects over k arms as evenly as possible (largest remainder on
/// equal weights, extra subjects to the lowest dose indices).
std::vector<std::size_t> allocate(std::size_t total, std::size_t arms);

/// Dose grids A-D of the simulation study; throws for other names.
std::vector<double> study_design(const std::string& name);

/// Data-generating parameters of the study for each model. ANOVA means are
/// tabulated on doses 0..8.
ParamVector study_theta(ModelTag tag);
inline constexpr double kStudyNoiseSd = 2.1213203435596424;  // sqrt(4.5)
inline constexpr double kStudyDelta = -1.3;

/// Data-generating dose-response curve. ANOVA truth is defined on its own
/// grid and interpolated linearly for the target dose.
struct TrueCurve {
    ModelKind model;
    ParamVector theta;

    double operator()(double dose) const { return eval(model, theta, dose); }
    std::optional<double> target(double delta, DoseRange range) const
    {
        return target_dose(model, theta, delta, range).dose;
    }
};

TrueCurve study_truth(ModelTag tag);

struct Scenario {
    std::size_t index = 0;          ///< position in the grid, keys the RNG
    std::string design_name;
    std::vector<double> doses;
    std::size_t total = 0;
    TrueCurve truth;
    double noise_sd = kStudyNoiseSd;
    std::vector<ModelKind> candidates;
    double delta = kStudyDelta;
    std::size_t n_sim = 1000;
    std::size_t boot_reps = 500;
    std::uint64_t seed = 0;

    DoseRange range() const { return {0.0, doses.back()}; }
    std::string label() const;
};

enum class Method { Selection, Averaging, Bootstrap };
std::string_view to_string(Method m);

struct EstimatorKey {
    Method method = Method::Selection;
    Criterion criterion = Criterion::AIC;
    friend bool operator==(const EstimatorKey&, const EstimatorKey&) = default;
};

/// Selection and weight averaging for every criterion, then AIC and BIC bootstrap.
std::vector<EstimatorKey> estimator_keys(bool with_bootstrap = true);

/// One estimator's output in one simulation run: the mean curve at the
/// design doses and the target dose (nullopt when excluded).
struct EstimateRecord {
    std::vector<double> curve;
    std::optional<double> td;
};

struct RunRecord {
    std::vector<EstimateRecord> estimators;  ///< aligned with the estimator keys
    std::vector<EstimateRecord> models;      ///< every always-fit candidate
    std::vector<std::size_t> selected;       ///< per criterion (kAllCriteria order)
    std::vector<std::vector<std::size_t>> boot_counts;  ///< AIC, BIC bootstrap selections
    std::size_t tic_fallbacks = 0;
    std::size_t nonconverged = 0;
};

struct Truth {
    std::vector<double> curve;
    double td = 0.0;
};

/// Mean squared errors of one estimator over the runs.
struct ErrorSummary {
    std::vector<double> mse;  ///< per design dose
    double amse = 0.0;
    double mse_td = std::nan("");
    std::size_t td_used = 0;
    std::size_t td_excluded = 0;
};

class DegenerateMetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Metrics {
    std::vector<ErrorSummary> estimators;
    std::vector<ErrorSummary> models;
    double mmse = 0.0;
    std::optional<double> mmse_td;
    std::vector<std::optional<double>> smse;
    std::vector<std::optional<double>> smse_td;
};

ErrorSummary summarize_errors(std::span<const RunRecord> runs, bool single_model, std::size_t index,
                              const Truth& truth);

/// MSE, AMSE, the best single-model AMSE and the standardized errors.
/// Throws DegenerateMetricsError when the best single model has zero error.
Metrics metrics(std::span<const RunRecord> runs, const Truth& truth);

/// Mean of the available values; nullopt when none are.
std::optional<double> asmse(std::span<const std::optional<double>> smse);

struct ScenarioReport {
    Scenario scenario;
    std::vector<EstimatorKey> keys;
    std::vector<ErrorSummary> estimators;
    std::vector<ErrorSummary> models;
    double mmse = 0.0;
    std::optional<double> mmse_td;
    std::vector<std::optional<double>> smse;
    std::vector<std::optional<double>> smse_td;
    /// selection_prob[c][m]: share of runs where criterion c picked candidate m.
    std::vector<std::vector<double>> selection_prob;
    /// bootstrap_freq[b][m]: share of resamples (AIC, BIC) picking candidate m.
    std::vector<std::vector<double>> bootstrap_freq;
    std::size_t bootstrap_runs = 0;
    std::size_t tic_fallbacks = 0;
    std::size_t nonconverged = 0;
    bool degenerate = false;  ///< best single model had zero error; no SMSE
};

struct RunOptions {
    unsigned threads = 1;
    FitOptions fit{};
    CriterionOptions criterion{};
};

/// Simulates one data set of the scenario and applies every estimator.
RunRecord simulate_run(const Scenario& s, std::size_t replication, const FitOptions& fit_options,
                       const CriterionOptions& crit_options);

ScenarioReport run_scenario(const Scenario& s, const RunOptions& options = {});

/// Draws one data set of the scenario (stream: seed, scenario index, replication, 0).
Dataset simulate_data(const Scenario& s, std::size_t replication);

struct StudyConfig {
    std::vector<Scenario> scenarios;
    std::vector<std::string> warnings;
};

/// One row per design of ASMSE values, per estimator.
struct StudySummary {
    std::vector<EstimatorKey> keys;
    std::vector<std::string> designs;
    /// asmse[design][estimator]; nullopt when no scenario had a value.
    std::vector<std::vector<std::optional<double>>> asmse;
    std::vector<std::optional<double>> asmse_td;
};

/// Per-scenario standardized errors, the inputs of the study summary.
struct SmseRow {
    std::size_t scenario = 0;
    std::string design;
    EstimatorKey key;
    std::optional<double> smse;
    std::optional<double> smse_td;
};

std::vector<SmseRow> smse_rows(std::span<const ScenarioReport> reports);
StudySummary summarize_study(std::span<const SmseRow> rows);

using ProgressFn = std::function<void(std::size_t done, std::size_t total, const Scenario&)>;

std::vector<ScenarioReport> run_study(const StudyConfig& config, const RunOptions& options,
                                      const ProgressFn& progress = {});

/// Probability of choosing the sigmoid Emax model, per criterion and
/// sample size, among the candidates {Emax, SigEmax}.
struct SelectionCurvePoint {
    Criterion criterion = Criterion::AIC;
    double size = 0.0;   ///< total N, or per-dose n for the variance experiment
    double probability = 0.0;
    std::size_t reps = 0;
};

struct ConsistencyOptions {
    ModelTag true_model = ModelTag::SigEmax;
    std::vector<std::size_t> sizes;   ///< total sample sizes
    std::size_t reps = 1000;
    double noise_sd = kStudyNoiseSd;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    FitOptions fit{};
    CriterionOptions criterion{};
};

/// Log-spaced integer grid of `points` sizes from lo to hi inclusive.
std::vector<std::size_t> log_spaced_sizes(std::size_t lo, std::size_t hi, std::size_t points);

std::vector<SelectionCurvePoint> consistency_experiment(const ConsistencyOptions& options);

struct VarianceScalingOptions {
    std::vector<std::size_t> group_sizes{1, 2, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
    std::size_t reps = 1000;
    std::uint64_t seed = 2;
    unsigned threads = 1;
    FitOptions fit{};
    CriterionOptions criterion{};
};

/// Sigmoid Emax truth with sd sqrt(0.01 n) so the standard error of the
/// fitted curve stays constant across group sizes n.
std::vector<SelectionCurvePoint> variance_scaling_experiment(const VarianceScalingOptions& options);

/// Dose grid 0..8 and parameters used by the two selection experiments.
std::vector<double> experiment_doses();
ParamVector experiment_theta(ModelTag tag);

}  // namespace dosemav

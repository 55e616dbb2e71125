#pragma once

#include "dosemav/model_zoo.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dosemav {

/// Per-dose sufficient statistics of a normal sample: group size, mean and
/// within-group sum of squares. Every likelihood quantity used for fitting
/// and for the criteria depends on the data only through these.
struct GroupStats {
    std::vector<double> doses;
    std::vector<std::size_t> n;
    std::vector<double> mean;
    std::vector<double> ss;  ///< sum over the group of (y - group mean)^2
    std::size_t total = 0;
    double mean_abs = 0.0;   ///< mean |y|, scales the variance floor

    std::size_t k() const noexcept { return doses.size(); }
    double max_dose() const noexcept { return doses.back(); }
    double ss_within() const noexcept;

    /// Builds statistics from published per-arm summaries (sd uses divisor n-1).
    static GroupStats from_summaries(std::vector<double> doses, std::vector<std::size_t> n,
                                     std::vector<double> mean, std::vector<double> sd);
};

/// Responses grouped by dose level.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<double> doses, std::vector<std::vector<double>> responses);

    /// Groups long-form (dose, response) observations; doses are sorted.
    static Dataset from_observations(std::span<const double> doses, std::span<const double> responses);

    const Design& design() const noexcept { return design_; }
    const std::vector<std::vector<double>>& responses() const noexcept { return responses_; }
    const std::vector<double>& group(std::size_t i) const { return responses_.at(i); }

    GroupStats stats() const;

private:
    Design design_;
    std::vector<std::vector<double>> responses_;
};

struct FitOptions {
    int max_iterations = 200;
    double rel_tolerance = 1e-10;
    /// Largest accepted move in (log ED50, h) at convergence.
    double step_tolerance = 1e-6;
    /// Newton curvature (differenced exact gradient) instead of Gauss-Newton.
    bool newton = true;
    /// ED50 box as fractions of the largest dose.
    double ed50_lower = 0.001;
    double ed50_upper = 1.5;
    double hill_lower = 0.5;
    double hill_upper = 10.0;
    std::size_t ed50_grid = 7;
    std::size_t hill_grid = 5;
    /// Replaces the start grid when non-empty (tabulated parameterization).
    std::vector<ParamVector> starts;
};

struct FitResult {
    ModelKind model;
    ParamVector theta;
    double sigma2 = 0.0;   ///< ML residual variance (divisor N), floored
    double rss = 0.0;
    double log_lik = 0.0;
    std::size_t n_obs = 0;
    bool converged = false;
    bool identifiable = true;
    std::size_t n_starts_used = 0;
    std::size_t best_start_index = 0;
    int iterations = 0;

    double predict(double dose) const { return eval(model, theta, dose); }
};

/// Lower bound applied to the ML variance before taking logs.
double variance_floor(const GroupStats& stats);

FitResult fit(const ModelKind& model, const GroupStats& stats, const FitOptions& options = {});
FitResult fit(const ModelKind& model, const Dataset& data, const FitOptions& options = {});

/// Sum of log normal densities over every observation.
double log_likelihood(const ModelKind& model, const Dataset& data, std::span<const double> theta,
                      double sigma2);

/// Residual sum of squares from sufficient statistics.
double residual_sum_of_squares(const ModelKind& model, const GroupStats& stats,
                               std::span<const double> theta);

}  // namespace dosemav

#pragma once

#include "dosemav/mle_fit.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace dosemav {

enum class Criterion { AIC, AICc, BIC, BIC2, TIC };

inline constexpr std::array<Criterion, 5> kAllCriteria{Criterion::AIC, Criterion::AICc,
                                                       Criterion::BIC, Criterion::BIC2,
                                                       Criterion::TIC};

std::string_view to_string(Criterion c);
std::optional<Criterion> parse_criterion(std::string_view name);

/// Thrown when the TIC curvature matrix cannot be inverted.
class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(const std::string& what, double condition)
        : std::runtime_error(what), condition_(condition)
    {
    }
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

struct CriterionOptions {
    /// Count the residual variance as a parameter (d_M + 1).
    bool count_variance = false;
    /// TIC over (theta, sigma^2) jointly instead of the mean parameters only.
    /// Needs observation-level data.
    bool tic_joint = false;
};

/// One model's criterion value 2 logL - 2 pen; larger is better.
struct CriterionScore {
    ModelKind model;
    Criterion criterion = Criterion::AIC;
    double value = 0.0;
    double penalty = 0.0;
    std::size_t dim = 0;
};

std::size_t parameter_count(const FitResult& fit, const CriterionOptions& options = {});

/// Penalty for the criteria that depend on the data only through N and d_M.
double penalty(Criterion criterion, std::size_t dim, std::size_t n_obs);

double penalty(Criterion criterion, const FitResult& fit, const GroupStats& stats,
               const CriterionOptions& options = {});
double penalty(Criterion criterion, const FitResult& fit, const Dataset& data,
               const CriterionOptions& options = {});

CriterionScore score(Criterion criterion, const FitResult& fit, const GroupStats& stats,
                     const CriterionOptions& options = {});
CriterionScore score(Criterion criterion, const FitResult& fit, const Dataset& data,
                     const CriterionOptions& options = {});

/// Empirical K (outer product of scores) and J (negative mean Hessian) of the
/// per-observation normal log-density at the fitted parameters, both
/// normalised by 1/N.
struct TicMatrices {
    Eigen::MatrixXd k;
    Eigen::MatrixXd j;
};

/// Mean parameters only, from sufficient statistics.
TicMatrices tic_matrices(const FitResult& fit, const GroupStats& stats);
/// Observation-level sums; `joint` appends sigma^2 as a final parameter.
TicMatrices tic_matrices(const FitResult& fit, const Dataset& data, bool joint = false);

/// trace(J^{-1} K); throws SingularMatrixError when J is singular.
double tic_trace(const TicMatrices& m);

/// Index of the best score: largest value, ties to fewer parameters, then
/// to the earlier candidate.
std::size_t select_index(std::span<const CriterionScore> scores);
ModelKind select(std::span<const CriterionScore> scores);

}  // namespace dosemav

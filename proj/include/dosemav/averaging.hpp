#pragma once

#include "dosemav/criteria.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dosemav {

struct ModelWeights {
    Criterion criterion = Criterion::AIC;
    std::vector<double> weights;
};

/// Softmax of half the criterion values, shifted by the maximum.
ModelWeights weights(std::span<const CriterionScore> scores);

/// Weighted mean response at `dose`; zero-weight models are not evaluated.
double average_effect(std::span<const FitResult> fits, const ModelWeights& w, double dose);

/// Minimum retained weight for an averaged target dose.
inline constexpr double kMinRetainedWeight = 0.20;

struct AveragedTargetDose {
    std::optional<double> dose;
    double retained_weight = 0.0;
};

/// Averages the per-model target doses of the models whose estimate lies in
/// range, renormalising their weights. Absent when the retained weight does
/// not exceed 20%.
AveragedTargetDose average_target_dose(std::span<const FitResult> fits, const ModelWeights& w,
                                       double delta, DoseRange range);

/// Same rule applied to precomputed per-model target doses.
AveragedTargetDose average_target_dose(std::span<const std::optional<double>> per_model,
                                       std::span<const double> w);

}  // namespace dosemav

#include "dosemav/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dosemav {

ModelWeights weights(std::span<const CriterionScore> scores)
{
    if (scores.empty())
        throw std::invalid_argument("weights need at least one score");
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& s : scores) {
        if (!std::isfinite(s.value))
            throw std::invalid_argument("non-finite criterion value for " + s.model.name());
        if (s.criterion != scores[0].criterion)
            throw std::invalid_argument("weights across different criteria");
        top = std::max(top, s.value);
    }
    ModelWeights w;
    w.criterion = scores[0].criterion;
    w.weights.reserve(scores.size());
    double total = 0.0;
    for (const auto& s : scores) {
        w.weights.push_back(std::exp(0.5 * (s.value - top)));
        total += w.weights.back();
    }
    for (double& v : w.weights)
        v /= total;
    return w;
}

double average_effect(std::span<const FitResult> fits, const ModelWeights& w, double dose)
{
    if (fits.size() != w.weights.size())
        throw std::invalid_argument("weights and fits are not aligned");
    double acc = 0.0;
    for (std::size_t i = 0; i < fits.size(); ++i)
        if (w.weights[i] != 0.0)
            acc += w.weights[i] * fits[i].predict(dose);
    return acc;
}

AveragedTargetDose average_target_dose(std::span<const std::optional<double>> per_model,
                                       std::span<const double> w)
{
    if (per_model.size() != w.size())
        throw std::invalid_argument("weights and target doses are not aligned");
    AveragedTargetDose out;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!per_model[i])
            continue;
        out.retained_weight += w[i];
        acc += w[i] * *per_model[i];
    }
    if (out.retained_weight > kMinRetainedWeight)
        out.dose = acc / out.retained_weight;
    return out;
}

AveragedTargetDose average_target_dose(std::span<const FitResult> fits, const ModelWeights& w,
                                       double delta, DoseRange range)
{
    if (fits.size() != w.weights.size())
        throw std::invalid_argument("weights and fits are not aligned");
    std::vector<std::optional<double>> td;
    td.reserve(fits.size());
    for (const auto& f : fits)
        td.push_back(target_dose(f.model, f.theta, delta, range).dose);
    return average_target_dose(td, w.weights);
}

}  // namespace dosemav

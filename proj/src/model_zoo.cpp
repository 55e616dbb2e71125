#include "dosemav/model_zoo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace dosemav {

std::string_view to_string(ModelTag tag)
{
    switch (tag) {
    case ModelTag::Linear: return "Linear";
    case ModelTag::Quadratic: return "Quadratic";
    case ModelTag::Emax: return "Emax";
    case ModelTag::SigEmax: return "SigEmax";
    case ModelTag::Anova: return "ANOVA";
    }
    return "?";
}

std::optional<ModelTag> parse_model_tag(std::string_view name)
{
    std::string s;
    for (char c : name) {
        if (c == '-' || c == '_' || c == ' ')
            continue;
        s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (s == "linear") return ModelTag::Linear;
    if (s == "quadratic") return ModelTag::Quadratic;
    if (s == "emax") return ModelTag::Emax;
    if (s == "sigemax" || s == "sigmoidemax") return ModelTag::SigEmax;
    if (s == "anova") return ModelTag::Anova;
    return std::nullopt;
}

ModelKind::ModelKind(ModelTag tag) : tag_(tag)
{
    if (tag == ModelTag::Anova)
        throw std::invalid_argument("ANOVA model needs a dose grid; use ModelKind::anova");
}

ModelKind ModelKind::anova(std::vector<double> doses)
{
    if (doses.empty())
        throw std::invalid_argument("ANOVA model needs at least one dose");
    if (!std::is_sorted(doses.begin(), doses.end()) ||
        std::adjacent_find(doses.begin(), doses.end()) != doses.end())
        throw std::invalid_argument("ANOVA doses must be strictly increasing");
    ModelKind m;
    m.tag_ = ModelTag::Anova;
    m.anova_doses_ = std::move(doses);
    return m;
}

std::size_t ModelKind::param_dim() const noexcept
{
    switch (tag_) {
    case ModelTag::Linear: return 2;
    case ModelTag::Quadratic: return 3;
    case ModelTag::Emax: return 3;
    case ModelTag::SigEmax: return 4;
    case ModelTag::Anova: return anova_doses_.size();
    }
    return 0;
}

std::size_t ModelKind::anova_index(double dose) const
{
    auto it = std::lower_bound(anova_doses_.begin(), anova_doses_.end(), dose);
    if (it == anova_doses_.end() || *it != dose)
        throw DomainError("ANOVA model evaluated off its dose grid at d=" + std::to_string(dose));
    return static_cast<std::size_t>(it - anova_doses_.begin());
}

Design::Design(std::vector<double> doses, std::vector<std::size_t> group_sizes)
    : doses_(std::move(doses)), sizes_(std::move(group_sizes))
{
    if (doses_.empty())
        throw std::invalid_argument("design has no doses");
    if (doses_.size() != sizes_.size())
        throw std::invalid_argument("design doses and group sizes differ in length");
    if (doses_.front() < 0.0 || !std::isfinite(doses_.back()))
        throw std::invalid_argument("design doses must be finite and non-negative");
    for (std::size_t i = 1; i < doses_.size(); ++i)
        if (!(doses_[i] > doses_[i - 1]))
            throw std::invalid_argument("design doses must be strictly increasing");
    if (std::any_of(sizes_.begin(), sizes_.end(), [](std::size_t n) { return n == 0; }))
        throw std::invalid_argument("every dose group needs at least one observation");
    total_ = std::accumulate(sizes_.begin(), sizes_.end(), std::size_t{0});
}

void check_params(const ModelKind& model, std::span<const double> theta)
{
    if (theta.size() != model.param_dim())
        throw DomainError(model.name() + ": expected " + std::to_string(model.param_dim()) +
                          " parameters, got " + std::to_string(theta.size()));
    for (double v : theta)
        if (!std::isfinite(v))
            throw DomainError(model.name() + ": non-finite parameter");
    if (model.tag() == ModelTag::Emax && !(theta[2] > 0.0))
        throw DomainError("Emax: ED50 must be positive");
    if (model.tag() == ModelTag::SigEmax && !(theta[2] > 0.0 && theta[3] > 0.0))
        throw DomainError("SigEmax: c and Hill must be positive");
}

namespace {

void check_dose(double d)
{
    if (!(d >= 0.0) || !std::isfinite(d))
        throw DomainError("dose must be finite and non-negative");
}

// d^h with the continuous extension 0^h = 0 for h > 0.
double hill_power(double d, double h) { return d == 0.0 ? 0.0 : std::pow(d, h); }

}  // namespace

double eval(const ModelKind& model, std::span<const double> theta, double d)
{
    check_params(model, theta);
    check_dose(d);
    switch (model.tag()) {
    case ModelTag::Linear: return theta[0] + theta[1] * d;
    case ModelTag::Quadratic: return theta[0] + theta[1] * d + theta[2] * d * d;
    case ModelTag::Emax: return theta[0] + theta[1] * d / (theta[2] + d);
    case ModelTag::SigEmax: {
        const double u = hill_power(d, theta[3]);
        return theta[0] + theta[1] * u / (theta[2] + u);
    }
    case ModelTag::Anova: return theta[model.anova_index(d)];
    }
    return 0.0;
}

std::vector<double> gradient(const ModelKind& model, std::span<const double> theta, double d)
{
    check_params(model, theta);
    check_dose(d);
    std::vector<double> g(model.param_dim(), 0.0);
    switch (model.tag()) {
    case ModelTag::Linear:
        g = {1.0, d};
        break;
    case ModelTag::Quadratic:
        g = {1.0, d, d * d};
        break;
    case ModelTag::Emax: {
        const double den = theta[2] + d;
        g = {1.0, d / den, -theta[1] * d / (den * den)};
        break;
    }
    case ModelTag::SigEmax: {
        const double c = theta[2];
        const double u = hill_power(d, theta[3]);
        const double den = c + u;
        const double ulog = d == 0.0 ? 0.0 : u * std::log(d);
        g = {1.0, u / den, -theta[1] * u / (den * den), theta[1] * c * ulog / (den * den)};
        break;
    }
    case ModelTag::Anova:
        g[model.anova_index(d)] = 1.0;
        break;
    }
    return g;
}

std::vector<double> hessian(const ModelKind& model, std::span<const double> theta, double d)
{
    check_params(model, theta);
    check_dose(d);
    const std::size_t p = model.param_dim();
    std::vector<double> h(p * p, 0.0);
    auto set = [&](std::size_t i, std::size_t j, double v) {
        h[i * p + j] = v;
        h[j * p + i] = v;
    };
    switch (model.tag()) {
    case ModelTag::Linear:
    case ModelTag::Quadratic:
        break;
    case ModelTag::Anova:
        model.anova_index(d);
        break;
    case ModelTag::Emax: {
        const double den = theta[2] + d;
        set(1, 2, -d / (den * den));
        set(2, 2, 2.0 * theta[1] * d / (den * den * den));
        break;
    }
    case ModelTag::SigEmax: {
        if (d == 0.0)
            break;
        const double b = theta[1], c = theta[2];
        const double u = std::pow(d, theta[3]);
        const double ld = std::log(d);
        const double den = c + u;
        const double den2 = den * den, den3 = den2 * den;
        set(1, 2, -u / den2);
        set(1, 3, c * u * ld / den2);
        set(2, 2, 2.0 * b * u / den3);
        set(2, 3, -b * u * ld * (c - u) / den3);
        set(3, 3, b * c * ld * ld * u * (c - u) / den3);
        break;
    }
    }
    return h;
}

ParamVector sigemax_from_ed50(std::span<const double> p)
{
    if (p.size() != 4)
        throw DomainError("SigEmax ED50 form needs 4 parameters");
    return {p[0], p[1], std::pow(p[2], p[3]), p[3]};
}

ParamVector sigemax_to_ed50(std::span<const double> theta)
{
    check_params(ModelKind(ModelTag::SigEmax), theta);
    return {theta[0], theta[1], std::pow(theta[2], 1.0 / theta[3]), theta[3]};
}

namespace {

TargetDose classify(double d, DoseRange range)
{
    TargetDose td;
    td.unconstrained = d;
    if (range.contains(d)) {
        td.dose = d;
        td.status = TargetDoseStatus::Found;
    } else {
        td.status = TargetDoseStatus::OutOfRange;
    }
    return td;
}

TargetDose no_crossing()
{
    return TargetDose{std::nullopt, TargetDoseStatus::NoCrossing, std::nullopt};
}

// Effect of a hyperbolic term b*u/(c+u) equals delta at u = delta*c/(b-delta),
// attainable only when delta/b lies in (0, 1).
std::optional<double> invert_hyperbola(double b, double c, double delta)
{
    const double ratio = delta / b;
    if (!(ratio > 0.0 && ratio < 1.0))
        return std::nullopt;
    return delta * c / (b - delta);
}

TargetDose quadratic_target(double b1, double b2, double delta, DoseRange range)
{
    // b2 d^2 + b1 d - delta = 0
    std::vector<double> roots;
    if (b2 == 0.0) {
        if (b1 != 0.0)
            roots.push_back(delta / b1);
    } else {
        const double disc = b1 * b1 + 4.0 * b2 * delta;
        if (disc < 0.0)
            return no_crossing();
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (b1 + std::copysign(sq, b1));
        if (q != 0.0) {
            roots.push_back(q / b2);
            roots.push_back(-delta / q);
        } else {
            roots.push_back(0.0);
        }
    }
    std::sort(roots.begin(), roots.end());
    std::optional<double> first_positive;
    for (double r : roots) {
        if (!(r > 0.0))
            continue;
        if (!first_positive)
            first_positive = r;
        if (range.contains(r))
            return classify(r, range);
    }
    if (first_positive)
        return classify(*first_positive, range);
    return no_crossing();
}

TargetDose anova_target(const ModelKind& model, std::span<const double> theta, double delta,
                        DoseRange range)
{
    const auto& doses = model.anova_doses();
    const double placebo = theta[model.anova_index(0.0)];
    for (std::size_t i = 1; i < doses.size(); ++i) {
        const double prev = theta[i - 1] - placebo;
        const double cur = theta[i] - placebo;
        if (cur == delta)
            return classify(doses[i], range);
        if ((prev - delta) * (cur - delta) < 0.0) {
            const double t = (delta - prev) / (cur - prev);
            return classify(doses[i - 1] + t * (doses[i] - doses[i - 1]), range);
        }
    }
    return no_crossing();
}

}  // namespace

TargetDose target_dose(const ModelKind& model, std::span<const double> theta, double delta,
                       DoseRange range)
{
    check_params(model, theta);
    if (delta == 0.0)
        return TargetDose{std::nullopt, TargetDoseStatus::ZeroEffect, std::nullopt};
    if (!std::isfinite(delta))
        throw DomainError("target effect must be finite");

    switch (model.tag()) {
    case ModelTag::Linear: {
        const double d = delta / theta[1];
        if (theta[1] == 0.0 || !(d > 0.0))
            return no_crossing();
        return classify(d, range);
    }
    case ModelTag::Quadratic:
        return quadratic_target(theta[1], theta[2], delta, range);
    case ModelTag::Emax: {
        auto d = invert_hyperbola(theta[1], theta[2], delta);
        return d ? classify(*d, range) : no_crossing();
    }
    case ModelTag::SigEmax: {
        auto u = invert_hyperbola(theta[1], theta[2], delta);
        return u ? classify(std::pow(*u, 1.0 / theta[3]), range) : no_crossing();
    }
    case ModelTag::Anova:
        return anova_target(model, theta, delta, range);
    }
    return no_crossing();
}

}  // namespace dosemav

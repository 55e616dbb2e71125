#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dosemav {

/// Raised when a mean function is evaluated outside its domain (off-grid
/// ANOVA dose, non-finite or inadmissible parameters, negative dose).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

enum class ModelTag { Linear, Quadratic, Emax, SigEmax, Anova };

std::string_view to_string(ModelTag tag);
/// Case-insensitive; accepts "sigemax", "sigmoid-emax", "sig_emax".
std::optional<ModelTag> parse_model_tag(std::string_view name);

/// A candidate dose-response mean function. ANOVA carries the dose grid it
/// is defined on, since its parameter vector has one mean per dose.
class ModelKind {
public:
    ModelKind() = default;
    explicit ModelKind(ModelTag tag);
    static ModelKind anova(std::vector<double> doses);

    ModelTag tag() const noexcept { return tag_; }
    std::size_t param_dim() const noexcept;
    const std::vector<double>& anova_doses() const noexcept { return anova_doses_; }
    std::string name() const { return std::string(to_string(tag_)); }

    /// Index of `dose` in the ANOVA grid (exact match), throws DomainError off-grid.
    std::size_t anova_index(double dose) const;

    friend bool operator==(const ModelKind&, const ModelKind&) = default;

private:
    ModelTag tag_ = ModelTag::Linear;
    std::vector<double> anova_doses_;
};

/// Parameters in the tabulated parameterization:
///   Linear     (e0, slope)
///   Quadratic  (e0, b1, b2)
///   Emax       (e0, emax, ed50)
///   SigEmax    (e0, emax, c, hill) with mean e0 + emax d^h / (c + d^h)
///   Anova      one mean per grid dose
using ParamVector = std::vector<double>;

/// Strictly increasing doses with per-dose group sizes.
/// Fitting accepts a single dose level (reported as non-identifiable);
/// analysis, bootstrap and simulation require at least two.
class Design {
public:
    Design() = default;
    Design(std::vector<double> doses, std::vector<std::size_t> group_sizes);

    const std::vector<double>& doses() const noexcept { return doses_; }
    const std::vector<std::size_t>& group_sizes() const noexcept { return sizes_; }
    std::size_t k() const noexcept { return doses_.size(); }
    std::size_t total() const noexcept { return total_; }
    double max_dose() const noexcept { return doses_.back(); }

private:
    std::vector<double> doses_;
    std::vector<std::size_t> sizes_;
    std::size_t total_ = 0;
};

/// Validates finiteness and the ED50/Hill positivity constraints.
void check_params(const ModelKind& model, std::span<const double> theta);

double eval(const ModelKind& model, std::span<const double> theta, double dose);

/// Analytic gradient of the mean with respect to theta.
std::vector<double> gradient(const ModelKind& model, std::span<const double> theta, double dose);

/// Analytic Hessian of the mean with respect to theta, row-major p x p.
std::vector<double> hessian(const ModelKind& model, std::span<const double> theta, double dose);

/// Sigmoid Emax conversions between (e0, emax, c, h) and (e0, emax, ED50, h), c = ED50^h.
ParamVector sigemax_from_ed50(std::span<const double> ed50_form);
ParamVector sigemax_to_ed50(std::span<const double> theta);

struct DoseRange {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double d) const noexcept { return d >= lo && d <= hi; }
};

enum class TargetDoseStatus {
    Found,
    ZeroEffect,     // requested effect is zero
    NoCrossing,     // the curve never attains the effect
    OutOfRange,     // attained, but beyond the dose range
};

struct TargetDose {
    std::optional<double> dose;
    TargetDoseStatus status = TargetDoseStatus::NoCrossing;
    /// Crossing location even when it lies outside the range.
    std::optional<double> unconstrained;
};

/// Smallest dose d in `range` with eta(d) - eta(0) = delta (signed effect).
TargetDose target_dose(const ModelKind& model, std::span<const double> theta, double delta,
                       DoseRange range);

}  // namespace dosemav

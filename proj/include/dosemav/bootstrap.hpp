#pragma once

#include "dosemav/criteria.hpp"
#include "dosemav/random.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace dosemav {

/// Raised when a dose group is too small to resample.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Draws n_i responses with replacement within every dose group.
Dataset stratified_resample(const Dataset& data, RandomStream& stream);

/// Sufficient statistics of a stratified resample; consumes the stream
/// exactly as stratified_resample does. `scratch` is reused between calls.
void stratified_resample_stats(const Dataset& data, RandomStream& stream, GroupStats& out,
                               std::vector<double>& scratch);

struct Estimand {
    enum class Kind { DoseEffect, TargetDose };
    Kind kind = Kind::DoseEffect;
    double dose = 0.0;      ///< DoseEffect: mean response at this dose
    double delta = 0.0;     ///< TargetDose: signed effect over placebo
    DoseRange range{};

    static Estimand dose_effect(double d) { return {Kind::DoseEffect, d, 0.0, {}}; }
    static Estimand target_dose(double delta, DoseRange range)
    {
        return {Kind::TargetDose, 0.0, delta, range};
    }
};

struct BootstrapOptions {
    std::size_t reps = 500;
    double level = 0.95;
    unsigned threads = 1;
    /// Seed, scenario and replication; resample r uses stream id r + 1.
    StreamId stream{};
    FitOptions fit{};
    CriterionOptions criterion{};
};

/// Per-resample model selections for one or more criteria.
struct BootstrapEnsemble {
    std::vector<ModelKind> candidates;
    std::vector<Criterion> criteria;
    std::size_t reps = 0;
    /// selected[c][r]: index of the candidate chosen by criteria[c] in resample r.
    std::vector<std::vector<std::size_t>> selected;
    /// fits[r][m]: parameters of candidate m in resample r.
    std::vector<std::vector<ParamVector>> fits;

    std::size_t criterion_index(Criterion c) const;
    /// Selected model's estimate in resample r; nullopt for an absent or
    /// out-of-range target dose.
    std::optional<double> estimate(std::size_t crit, std::size_t r, const Estimand& e) const;
    std::vector<std::size_t> selection_counts(std::size_t crit) const;
};

BootstrapEnsemble bootstrap_select(const Dataset& data, std::span<const ModelKind> candidates,
                                   std::span<const Criterion> criteria,
                                   const BootstrapOptions& options);

/// Share of excluded resamples above which a simulation run's bootstrap
/// target dose is discarded.
inline constexpr double kMaxExcludedShare = 0.80;

struct BootstrapResult {
    Estimand estimand;
    Criterion criterion = Criterion::AIC;
    std::size_t reps_requested = 0;
    std::size_t reps_used = 0;
    std::vector<double> estimates;   ///< retained, in resample order
    std::optional<double> median;
    std::optional<double> lower;
    std::optional<double> upper;
    double level = 0.95;
    std::vector<std::size_t> selection_counts;

    bool empty() const noexcept { return reps_used == 0; }
    /// More than 80% of the resample estimates were excluded.
    bool mostly_excluded() const noexcept;
};

BootstrapResult summarize(const BootstrapEnsemble& ensemble, Criterion criterion,
                          const Estimand& estimand, double level = 0.95);

BootstrapResult bootstrap_average(const Dataset& data, std::span<const ModelKind> candidates,
                                  Criterion criterion, const Estimand& estimand,
                                  const BootstrapOptions& options);

/// Median (midpoint of the two central values for even counts).
double median(std::vector<double> values);
/// Nearest-rank quantile, p in (0, 1]; `sorted` must be ascending.
double nearest_rank(std::span<const double> sorted, double p);

}  // namespace dosemav

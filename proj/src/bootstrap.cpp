#include "dosemav/bootstrap.hpp"

#include "dosemav/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dosemav {

namespace {

void check_resamplable(const Dataset& data)
{
    const auto& sizes = data.design().group_sizes();
    for (std::size_t i = 0; i < sizes.size(); ++i)
        if (sizes[i] <= 1)
            throw PreconditionError("stratified bootstrap needs more than one observation per dose "
                                    "(dose " +
                                    std::to_string(data.design().doses()[i]) + " has " +
                                    std::to_string(sizes[i]) + ")");
}

}  // namespace

Dataset stratified_resample(const Dataset& data, RandomStream& stream)
{
    check_resamplable(data);
    std::vector<std::vector<double>> groups;
    groups.reserve(data.design().k());
    for (const auto& g : data.responses()) {
        const auto n = static_cast<std::uint32_t>(g.size());
        std::vector<double> out(g.size());
        for (auto& y : out)
            y = g[stream.below(n)];
        groups.push_back(std::move(out));
    }
    return Dataset(data.design().doses(), std::move(groups));
}

void stratified_resample_stats(const Dataset& data, RandomStream& stream, GroupStats& out,
                               std::vector<double>& scratch)
{
    const auto& design = data.design();
    const std::size_t k = design.k();
    out.doses = design.doses();
    out.n = design.group_sizes();
    out.mean.resize(k);
    out.ss.resize(k);
    out.total = design.total();
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& g = data.group(i);
        const auto n = static_cast<std::uint32_t>(g.size());
        scratch.resize(g.size());
        double m = 0.0;
        for (auto& y : scratch) {
            y = g[stream.below(n)];
            m += y;
            abs_sum += std::abs(y);
        }
        m /= static_cast<double>(n);
        // same refinement as Dataset::stats
        double corr = 0.0;
        for (double y : scratch)
            corr += y - m;
        m += corr / static_cast<double>(n);
        double ss = 0.0;
        for (double y : scratch)
            ss += (y - m) * (y - m);
        out.mean[i] = m;
        out.ss[i] = ss;
    }
    out.mean_abs = abs_sum / static_cast<double>(out.total);
}

std::size_t BootstrapEnsemble::criterion_index(Criterion c) const
{
    for (std::size_t i = 0; i < criteria.size(); ++i)
        if (criteria[i] == c)
            return i;
    throw std::invalid_argument("criterion " + std::string(to_string(c)) +
                                " was not part of the bootstrap");
}

std::optional<double> BootstrapEnsemble::estimate(std::size_t crit, std::size_t r,
                                                  const Estimand& e) const
{
    const std::size_t m = selected[crit][r];
    const ParamVector& theta = fits[r][m];
    if (e.kind == Estimand::Kind::DoseEffect)
        return eval(candidates[m], theta, e.dose);
    return target_dose(candidates[m], theta, e.delta, e.range).dose;
}

std::vector<std::size_t> BootstrapEnsemble::selection_counts(std::size_t crit) const
{
    std::vector<std::size_t> counts(candidates.size(), 0);
    for (std::size_t m : selected[crit])
        ++counts[m];
    return counts;
}

BootstrapEnsemble bootstrap_select(const Dataset& data, std::span<const ModelKind> candidates,
                                   std::span<const Criterion> criteria,
                                   const BootstrapOptions& options)
{
    check_resamplable(data);
    if (candidates.empty())
        throw std::invalid_argument("bootstrap needs at least one candidate model");
    if (options.reps == 0)
        throw std::invalid_argument("bootstrap needs at least one resample");
    for (Criterion c : criteria)
        if (c == Criterion::TIC)
            throw std::invalid_argument("bootstrap selection supports AIC, AICc, BIC and BIC2");

    BootstrapEnsemble ens;
    ens.candidates.assign(candidates.begin(), candidates.end());
    ens.criteria.assign(criteria.begin(), criteria.end());
    ens.reps = options.reps;
    ens.selected.assign(criteria.size(), std::vector<std::size_t>(options.reps, 0));
    ens.fits.resize(options.reps);

    const std::size_t n_models = candidates.size();
    std::vector<std::size_t> dims;
    for (const auto& m : candidates)
        dims.push_back(m.param_dim() + (options.criterion.count_variance ? 1 : 0));

    parallel_for(options.reps, options.threads, [&](std::size_t r) {
        StreamId id = options.stream;
        id.resample = static_cast<std::uint32_t>(r + 1);
        RandomStream stream(id);
        GroupStats stats;
        std::vector<double> scratch;
        stratified_resample_stats(data, stream, stats, scratch);

        std::vector<double> loglik(n_models);
        auto& thetas = ens.fits[r];
        thetas.resize(n_models);
        for (std::size_t m = 0; m < n_models; ++m) {
            FitResult f = fit(candidates[m], stats, options.fit);
            loglik[m] = f.log_lik;
            thetas[m] = std::move(f.theta);
        }
        for (std::size_t c = 0; c < criteria.size(); ++c) {
            std::size_t best = 0;
            double best_value = 0.0;
            for (std::size_t m = 0; m < n_models; ++m) {
                const double v =
                    2.0 * loglik[m] - 2.0 * penalty(criteria[c], dims[m], stats.total);
                if (m == 0 || v > best_value || (v == best_value && dims[m] < dims[best])) {
                    best = m;
                    best_value = v;
                }
            }
            ens.selected[c][r] = best;
        }
    });
    return ens;
}

bool BootstrapResult::mostly_excluded() const noexcept
{
    if (reps_requested == 0)
        return true;
    const double excluded = static_cast<double>(reps_requested - reps_used);
    return excluded > kMaxExcludedShare * static_cast<double>(reps_requested);
}

double median(std::vector<double> values)
{
    if (values.empty())
        throw std::invalid_argument("median of an empty sample");
    const std::size_t n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    const double upper = *mid;
    if (n % 2 == 1)
        return upper;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

double nearest_rank(std::span<const double> sorted, double p)
{
    if (sorted.empty())
        throw std::invalid_argument("quantile of an empty sample");
    const double n = static_cast<double>(sorted.size());
    // Small slack keeps exact products such as 0.025 * 400 on their rank.
    auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

BootstrapResult summarize(const BootstrapEnsemble& ensemble, Criterion criterion,
                          const Estimand& estimand, double level)
{
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("interval level must lie in (0, 1)");
    const std::size_t c = ensemble.criterion_index(criterion);
    BootstrapResult res;
    res.estimand = estimand;
    res.criterion = criterion;
    res.level = level;
    res.reps_requested = ensemble.reps;
    res.selection_counts = ensemble.selection_counts(c);
    for (std::size_t r = 0; r < ensemble.reps; ++r)
        if (auto v = ensemble.estimate(c, r, estimand))
            res.estimates.push_back(*v);
    res.reps_used = res.estimates.size();
    if (res.empty())
        return res;
    res.median = median(res.estimates);
    std::vector<double> sorted = res.estimates;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = 1.0 - level;
    res.lower = nearest_rank(sorted, 0.5 * alpha);
    res.upper = nearest_rank(sorted, 1.0 - 0.5 * alpha);
    return res;
}

BootstrapResult bootstrap_average(const Dataset& data, std::span<const ModelKind> candidates,
                                  Criterion criterion, const Estimand& estimand,
                                  const BootstrapOptions& options)
{
    const Criterion crit[] = {criterion};
    return summarize(bootstrap_select(data, candidates, crit, options), criterion, estimand,
                     options.level);
}

}  // namespace dosemav

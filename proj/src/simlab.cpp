#include "dosemav/simlab.hpp"

#include "dosemav/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace dosemav {

std::vector<std::size_t> allocate(std::size_t total, std::size_t arms)
{
    if (arms == 0 || total < arms)
        throw std::invalid_argument("allocation needs N >= k >= 1 (N=" + std::to_string(total) +
                                    ", k=" + std::to_string(arms) + ")");
    std::vector<std::size_t> sizes(arms, total / arms);
    const std::size_t extra = total % arms;
    for (std::size_t i = 0; i < extra; ++i)
        ++sizes[i];
    return sizes;
}

std::vector<double> study_design(const std::string& name)
{
    if (name == "A") return {0, 2, 4, 6, 8};
    if (name == "B") return {0, 2, 3, 4, 5, 6, 8};
    if (name == "C") return {0, 1, 2, 3, 4, 5, 6, 7, 8};
    if (name == "D") return {0, 2, 4, 8};
    throw std::invalid_argument("unknown study design '" + name + "' (expected A, B, C or D)");
}

ParamVector study_theta(ModelTag tag)
{
    switch (tag) {
    case ModelTag::Linear: return {0.0, -1.65 / 8.0};
    case ModelTag::Quadratic: return {0.0, -1.65 / 3.0, 1.65 / 36.0};
    case ModelTag::Emax: return {0.0, -1.81, 0.79};
    case ModelTag::SigEmax: return {0.0, -1.7, 4.0, 5.0};
    case ModelTag::Anova: return {0.0, -1.29, -1.35, -1.42, -1.5, -1.6, -1.63, -1.65, -1.65};
    }
    throw std::invalid_argument("unknown model");
}

TrueCurve study_truth(ModelTag tag)
{
    if (tag == ModelTag::Anova)
        return {ModelKind::anova(study_design("C")), study_theta(tag)};
    return {ModelKind(tag), study_theta(tag)};
}

std::vector<double> experiment_doses() { return study_design("C"); }

ParamVector experiment_theta(ModelTag tag)
{
    if (tag == ModelTag::Emax)
        return {0.0, -1.81, 0.79};
    if (tag == ModelTag::SigEmax)
        return {0.0, -1.81, 0.79, 2.0};
    throw std::invalid_argument("selection experiments use Emax or SigEmax truths");
}

std::string Scenario::label() const
{
    return design_name + "/N=" + std::to_string(total) + "/" + truth.model.name();
}

std::string_view to_string(Method m)
{
    switch (m) {
    case Method::Selection: return "selection";
    case Method::Averaging: return "averaging";
    case Method::Bootstrap: return "bootstrap";
    }
    return "?";
}

std::vector<EstimatorKey> estimator_keys(bool with_bootstrap)
{
    std::vector<EstimatorKey> keys;
    for (Method m : {Method::Selection, Method::Averaging})
        for (Criterion c : kAllCriteria)
            keys.push_back({m, c});
    if (with_bootstrap) {
        keys.push_back({Method::Bootstrap, Criterion::AIC});
        keys.push_back({Method::Bootstrap, Criterion::BIC});
    }
    return keys;
}

namespace {

bool bootstrap_possible(const Scenario& s, const std::vector<std::size_t>& sizes)
{
    return s.boot_reps > 0 &&
           std::all_of(sizes.begin(), sizes.end(), [](std::size_t n) { return n > 1; });
}

// Scores of every candidate under every criterion. A singular TIC curvature
// matrix falls back to the parameter count (the AIC penalty).
struct CriterionTable {
    std::vector<std::vector<CriterionScore>> scores;  // [criterion][model]
    std::size_t tic_fallbacks = 0;
};

CriterionTable score_all(std::span<const FitResult> fits, const GroupStats& stats,
                         const CriterionOptions& options)
{
    CriterionTable t;
    t.scores.resize(kAllCriteria.size());
    for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
        for (const auto& f : fits) {
            try {
                t.scores[c].push_back(score(kAllCriteria[c], f, stats, options));
            } catch (const SingularMatrixError&) {
                ++t.tic_fallbacks;
                CriterionScore s;
                s.model = f.model;
                s.criterion = kAllCriteria[c];
                s.dim = parameter_count(f, options);
                s.penalty = static_cast<double>(s.dim);
                s.value = 2.0 * f.log_lik - 2.0 * s.penalty;
                t.scores[c].push_back(s);
            }
        }
    }
    return t;
}

std::size_t criterion_slot(Criterion c)
{
    return static_cast<std::size_t>(std::find(kAllCriteria.begin(), kAllCriteria.end(), c) -
                                    kAllCriteria.begin());
}

}  // namespace

Dataset simulate_data(const Scenario& s, std::size_t replication)
{
    const auto sizes = allocate(s.total, s.doses.size());
    RandomStream stream(StreamId{s.seed, static_cast<std::uint32_t>(s.index),
                                 static_cast<std::uint32_t>(replication), 0});
    std::vector<std::vector<double>> groups(s.doses.size());
    for (std::size_t i = 0; i < s.doses.size(); ++i) {
        const double mu = s.truth(s.doses[i]);
        groups[i].resize(sizes[i]);
        for (auto& y : groups[i])
            y = mu + s.noise_sd * stream.normal();
    }
    return Dataset(s.doses, std::move(groups));
}

RunRecord simulate_run(const Scenario& s, std::size_t replication, const FitOptions& fit_options,
                       const CriterionOptions& crit_options)
{
    const Dataset data = simulate_data(s, replication);
    const GroupStats stats = data.stats();
    const DoseRange range = s.range();
    const std::size_t k = s.doses.size();
    const std::size_t n_models = s.candidates.size();

    RunRecord rec;
    std::vector<FitResult> fits;
    fits.reserve(n_models);
    std::vector<std::optional<double>> model_td;
    for (const auto& m : s.candidates) {
        fits.push_back(fit(m, stats, fit_options));
        const auto& f = fits.back();
        if (!f.converged)
            ++rec.nonconverged;
        EstimateRecord er;
        er.curve.resize(k);
        for (std::size_t i = 0; i < k; ++i)
            er.curve[i] = f.predict(s.doses[i]);
        er.td = target_dose(f.model, f.theta, s.delta, range).dose;
        model_td.push_back(er.td);
        rec.models.push_back(std::move(er));
    }

    const CriterionTable table = score_all(fits, stats, crit_options);
    rec.tic_fallbacks = table.tic_fallbacks;
    std::vector<ModelWeights> w;
    for (const auto& sc : table.scores) {
        rec.selected.push_back(select_index(sc));
        w.push_back(weights(sc));
    }

    const bool with_boot = bootstrap_possible(s, data.design().group_sizes());
    const auto keys = estimator_keys(with_boot);
    std::optional<BootstrapEnsemble> ens;
    if (with_boot) {
        BootstrapOptions bo;
        bo.reps = s.boot_reps;
        bo.threads = 1;
        bo.stream = StreamId{s.seed, static_cast<std::uint32_t>(s.index),
                             static_cast<std::uint32_t>(replication), 0};
        bo.fit = fit_options;
        bo.criterion = crit_options;
        const Criterion boot_criteria[] = {Criterion::AIC, Criterion::BIC};
        ens = bootstrap_select(data, s.candidates, boot_criteria, bo);
    }

    for (const auto& key : keys) {
        const std::size_t c = criterion_slot(key.criterion);
        EstimateRecord er;
        switch (key.method) {
        case Method::Selection:
            er = rec.models[rec.selected[c]];
            break;
        case Method::Averaging: {
            er.curve.assign(k, 0.0);
            for (std::size_t m = 0; m < n_models; ++m)
                for (std::size_t i = 0; i < k; ++i)
                    er.curve[i] += w[c].weights[m] * rec.models[m].curve[i];
            er.td = average_target_dose(model_td, w[c].weights).dose;
            break;
        }
        case Method::Bootstrap: {
            const std::size_t b = ens->criterion_index(key.criterion);
            er.curve.resize(k);
            std::vector<double> values(ens->reps);
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t r = 0; r < ens->reps; ++r)
                    values[r] = *ens->estimate(b, r, Estimand::dose_effect(s.doses[i]));
                er.curve[i] = median(values);
            }
            const auto td = summarize(*ens, key.criterion, Estimand::target_dose(s.delta, range));
            if (!td.mostly_excluded())
                er.td = td.median;
            rec.boot_counts.push_back(td.selection_counts);
            break;
        }
        }
        rec.estimators.push_back(std::move(er));
    }
    return rec;
}

ErrorSummary summarize_errors(std::span<const RunRecord> runs, bool single_model, std::size_t index,
                              const Truth& truth)
{
    const std::size_t k = truth.curve.size();
    ErrorSummary e;
    e.mse.assign(k, 0.0);
    double td_sum = 0.0;
    for (const auto& run : runs) {
        const auto& rec = single_model ? run.models.at(index) : run.estimators.at(index);
        if (rec.curve.size() != k)
            throw std::invalid_argument("estimate curve does not match the design");
        for (std::size_t i = 0; i < k; ++i) {
            const double err = rec.curve[i] - truth.curve[i];
            e.mse[i] += err * err;
        }
        if (rec.td) {
            const double err = *rec.td - truth.td;
            td_sum += err * err;
            ++e.td_used;
        } else {
            ++e.td_excluded;
        }
    }
    const double n = static_cast<double>(runs.size());
    for (double& v : e.mse)
        v /= n;
    e.amse = std::accumulate(e.mse.begin(), e.mse.end(), 0.0) / static_cast<double>(k);
    if (e.td_used > 0)
        e.mse_td = td_sum / static_cast<double>(e.td_used);
    return e;
}

namespace {

Metrics compute_metrics(std::span<const RunRecord> runs, const Truth& truth, bool allow_degenerate,
                        bool& degenerate)
{
    if (runs.empty())
        throw std::invalid_argument("metrics need at least one run");
    Metrics m;
    const std::size_t n_est = runs.front().estimators.size();
    const std::size_t n_models = runs.front().models.size();
    for (std::size_t e = 0; e < n_est; ++e)
        m.estimators.push_back(summarize_errors(runs, false, e, truth));
    for (std::size_t j = 0; j < n_models; ++j)
        m.models.push_back(summarize_errors(runs, true, j, truth));

    m.mmse = std::numeric_limits<double>::infinity();
    for (const auto& s : m.models) {
        m.mmse = std::min(m.mmse, s.amse);
        if (s.td_used > 0 && (!m.mmse_td || s.mse_td < *m.mmse_td))
            m.mmse_td = s.mse_td;
    }
    degenerate = !(m.mmse > 0.0) || !std::isfinite(m.mmse);
    if (degenerate) {
        if (!allow_degenerate)
            throw DegenerateMetricsError("best single-model AMSE is zero; SMSE undefined");
        m.smse.assign(n_est, std::nullopt);
        m.smse_td.assign(n_est, std::nullopt);
        return m;
    }
    for (const auto& s : m.estimators) {
        m.smse.push_back(s.amse / m.mmse);
        if (s.td_used > 0 && m.mmse_td && *m.mmse_td > 0.0)
            m.smse_td.push_back(s.mse_td / *m.mmse_td);
        else
            m.smse_td.push_back(std::nullopt);
    }
    return m;
}

}  // namespace

Metrics metrics(std::span<const RunRecord> runs, const Truth& truth)
{
    bool degenerate = false;
    return compute_metrics(runs, truth, false, degenerate);
}

std::optional<double> asmse(std::span<const std::optional<double>> smse)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : smse) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0)
        return std::nullopt;
    return sum / static_cast<double>(n);
}

ScenarioReport run_scenario(const Scenario& s, const RunOptions& options)
{
    if (s.doses.size() < 2)
        throw std::invalid_argument("scenario needs at least two doses");
    if (s.candidates.empty())
        throw std::invalid_argument("scenario needs at least one candidate model");

    ScenarioReport rep;
    rep.scenario = s;
    const auto sizes = allocate(s.total, s.doses.size());
    rep.keys = estimator_keys(bootstrap_possible(s, sizes));
    rep.selection_prob.assign(kAllCriteria.size(), std::vector<double>(s.candidates.size(), 0.0));
    if (s.n_sim == 0)
        return rep;

    std::vector<RunRecord> runs(s.n_sim);
    parallel_for(s.n_sim, options.threads, [&](std::size_t r) {
        runs[r] = simulate_run(s, r, options.fit, options.criterion);
    });

    Truth truth;
    for (double d : s.doses)
        truth.curve.push_back(s.truth(d));
    const auto true_td = s.truth.target(s.delta, s.range());
    if (!true_td)
        throw std::invalid_argument("true curve of " + s.label() + " never reaches the target effect");
    truth.td = *true_td;

    bool degenerate = false;
    Metrics m = compute_metrics(runs, truth, true, degenerate);
    rep.estimators = std::move(m.estimators);
    rep.models = std::move(m.models);
    rep.mmse = m.mmse;
    rep.mmse_td = m.mmse_td;
    rep.smse = std::move(m.smse);
    rep.smse_td = std::move(m.smse_td);
    rep.degenerate = degenerate;

    const double n = static_cast<double>(s.n_sim);
    for (const auto& run : runs) {
        for (std::size_t c = 0; c < run.selected.size(); ++c)
            rep.selection_prob[c][run.selected[c]] += 1.0 / n;
        rep.tic_fallbacks += run.tic_fallbacks;
        rep.nonconverged += run.nonconverged;
    }
    if (!runs.front().boot_counts.empty()) {
        rep.bootstrap_runs = s.n_sim;
        rep.bootstrap_freq.assign(runs.front().boot_counts.size(),
                                  std::vector<double>(s.candidates.size(), 0.0));
        const double total = n * static_cast<double>(s.boot_reps);
        for (const auto& run : runs)
            for (std::size_t b = 0; b < run.boot_counts.size(); ++b)
                for (std::size_t j = 0; j < run.boot_counts[b].size(); ++j)
                    rep.bootstrap_freq[b][j] += static_cast<double>(run.boot_counts[b][j]) / total;
    }
    return rep;
}

std::vector<SmseRow> smse_rows(std::span<const ScenarioReport> reports)
{
    std::vector<SmseRow> rows;
    for (const auto& r : reports) {
        for (std::size_t e = 0; e < r.keys.size(); ++e) {
            SmseRow row;
            row.scenario = r.scenario.index;
            row.design = r.scenario.design_name;
            row.key = r.keys[e];
            if (e < r.smse.size()) {
                row.smse = r.smse[e];
                row.smse_td = r.smse_td[e];
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

StudySummary summarize_study(std::span<const SmseRow> rows)
{
    StudySummary sum;
    for (const auto& row : rows) {
        if (std::find(sum.keys.begin(), sum.keys.end(), row.key) == sum.keys.end())
            sum.keys.push_back(row.key);
        if (std::find(sum.designs.begin(), sum.designs.end(), row.design) == sum.designs.end())
            sum.designs.push_back(row.design);
    }
    auto key_index = [&](const EstimatorKey& k) {
        return static_cast<std::size_t>(std::find(sum.keys.begin(), sum.keys.end(), k) -
                                        sum.keys.begin());
    };
    auto design_index = [&](const std::string& d) {
        return static_cast<std::size_t>(std::find(sum.designs.begin(), sum.designs.end(), d) -
                                        sum.designs.begin());
    };
    std::vector<std::vector<std::vector<std::optional<double>>>> per_design(
        sum.designs.size(), std::vector<std::vector<std::optional<double>>>(sum.keys.size()));
    std::vector<std::vector<std::optional<double>>> td(sum.keys.size());
    for (const auto& row : rows) {
        const std::size_t e = key_index(row.key);
        per_design[design_index(row.design)][e].push_back(row.smse);
        td[e].push_back(row.smse_td);
    }
    sum.asmse.resize(sum.designs.size());
    for (std::size_t d = 0; d < sum.designs.size(); ++d)
        for (std::size_t e = 0; e < sum.keys.size(); ++e)
            sum.asmse[d].push_back(asmse(per_design[d][e]));
    for (std::size_t e = 0; e < sum.keys.size(); ++e)
        sum.asmse_td.push_back(asmse(td[e]));
    return sum;
}

std::vector<ScenarioReport> run_study(const StudyConfig& config, const RunOptions& options,
                                      const ProgressFn& progress)
{
    std::vector<ScenarioReport> out;
    out.reserve(config.scenarios.size());
    for (std::size_t i = 0; i < config.scenarios.size(); ++i) {
        out.push_back(run_scenario(config.scenarios[i], options));
        if (progress)
            progress(i + 1, config.scenarios.size(), config.scenarios[i]);
    }
    return out;
}

std::vector<std::size_t> log_spaced_sizes(std::size_t lo, std::size_t hi, std::size_t points)
{
    if (points == 0 || lo == 0 || hi < lo)
        throw std::invalid_argument("log-spaced grid needs 0 < lo <= hi and at least one point");
    if (points == 1)
        return {hi};
    std::vector<std::size_t> out;
    const double step = std::log(static_cast<double>(hi) / static_cast<double>(lo)) /
                        static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) {
        const auto v = static_cast<std::size_t>(
            std::llround(static_cast<double>(lo) * std::exp(step * static_cast<double>(i))));
        if (out.empty() || v > out.back())
            out.push_back(v);
    }
    out.back() = hi;
    return out;
}

namespace {

// Fits Emax and sigmoid Emax; result[c] is true when criterion c prefers SigEmax.
std::array<bool, kAllCriteria.size()> prefers_sigemax(const Dataset& data, const FitOptions& fo,
                                                      const CriterionOptions& co)
{
    const GroupStats stats = data.stats();
    const std::array<FitResult, 2> fits{fit(ModelKind(ModelTag::Emax), stats, fo),
                                        fit(ModelKind(ModelTag::SigEmax), stats, fo)};
    const CriterionTable table = score_all(fits, stats, co);
    std::array<bool, kAllCriteria.size()> out{};
    for (std::size_t c = 0; c < kAllCriteria.size(); ++c)
        out[c] = select_index(table.scores[c]) == 1;
    return out;
}

std::vector<SelectionCurvePoint> selection_curve(
    std::span<const std::size_t> sizes, std::size_t reps, unsigned threads,
    const std::function<Dataset(std::size_t point, std::size_t rep)>& draw, const FitOptions& fo,
    const CriterionOptions& co)
{
    std::vector<SelectionCurvePoint> out;
    if (reps == 0)
        return out;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
        std::vector<std::array<bool, kAllCriteria.size()>> picks(reps);
        parallel_for(reps, threads, [&](std::size_t r) {
            picks[r] = prefers_sigemax(draw(p, r), fo, co);
        });
        for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
            std::size_t count = 0;
            for (const auto& pk : picks)
                count += pk[c] ? 1 : 0;
            out.push_back({kAllCriteria[c], static_cast<double>(sizes[p]),
                           static_cast<double>(count) / static_cast<double>(reps), reps});
        }
    }
    return out;
}

Dataset draw_experiment_data(const ModelKind& model, const ParamVector& theta,
                             std::span<const std::size_t> group_sizes, double sd, StreamId id)
{
    const auto doses = experiment_doses();
    RandomStream stream(id);
    std::vector<std::vector<double>> groups(doses.size());
    for (std::size_t i = 0; i < doses.size(); ++i) {
        const double mu = eval(model, theta, doses[i]);
        groups[i].resize(group_sizes[i]);
        for (auto& y : groups[i])
            y = mu + sd * stream.normal();
    }
    return Dataset(doses, std::move(groups));
}

}  // namespace

std::vector<SelectionCurvePoint> consistency_experiment(const ConsistencyOptions& o)
{
    const ModelKind model(o.true_model);
    const ParamVector theta = experiment_theta(o.true_model);
    const std::uint32_t stream_base = o.true_model == ModelTag::Emax ? 0x10000u : 0x20000u;
    auto draw = [&](std::size_t p, std::size_t r) {
        const auto sizes = allocate(o.sizes[p], experiment_doses().size());
        return draw_experiment_data(model, theta, sizes, o.noise_sd,
                                    StreamId{o.seed, stream_base + static_cast<std::uint32_t>(p),
                                             static_cast<std::uint32_t>(r), 0});
    };
    return selection_curve(o.sizes, o.reps, o.threads, draw, o.fit, o.criterion);
}

std::vector<SelectionCurvePoint> variance_scaling_experiment(const VarianceScalingOptions& o)
{
    const ModelKind model(ModelTag::SigEmax);
    const ParamVector theta = experiment_theta(ModelTag::SigEmax);
    const std::size_t k = experiment_doses().size();
    auto draw = [&](std::size_t p, std::size_t r) {
        const std::size_t n = o.group_sizes[p];
        const std::vector<std::size_t> sizes(k, n);
        return draw_experiment_data(model, theta, sizes, std::sqrt(0.01 * static_cast<double>(n)),
                                    StreamId{o.seed, 0x30000u + static_cast<std::uint32_t>(p),
                                             static_cast<std::uint32_t>(r), 0});
    };
    return selection_curve(o.group_sizes, o.reps, o.threads, draw, o.fit, o.criterion);
}

}  // namespace dosemav

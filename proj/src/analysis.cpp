#include "dosemav/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace dosemav {

std::string_view to_string(AnalysisMode m)
{
    switch (m) {
    case AnalysisMode::Select: return "select";
    case AnalysisMode::Average: return "average";
    case AnalysisMode::Bootstrap: return "bootstrap";
    }
    return "?";
}

std::optional<AnalysisMode> parse_analysis_mode(std::string_view name)
{
    for (auto m : {AnalysisMode::Select, AnalysisMode::Average, AnalysisMode::Bootstrap})
        if (name == to_string(m))
            return m;
    return std::nullopt;
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    if (n <= 1 || hi == lo)
        return {hi};
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    g.back() = hi;
    return g;
}

}  // namespace

AnalysisReport analyze(const AnalysisInput& input, const AnalysisOptions& options)
{
    const GroupStats& stats = input.stats;
    if (stats.k() < 2)
        throw std::invalid_argument("analysis needs at least two dose levels");
    if (options.models.empty())
        throw std::invalid_argument("no candidate models");
    if (options.criteria.empty())
        throw std::invalid_argument("no criteria");
    if (options.delta && *options.delta == 0.0)
        throw std::invalid_argument("target effect --delta must be non-zero");
    if (!(options.level > 0.0 && options.level < 1.0))
        throw std::invalid_argument("interval level must lie in (0, 1)");

    AnalysisReport rep;
    rep.mode = options.mode;
    rep.delta = options.delta;
    rep.range = {stats.doses.front(), stats.doses.back()};
    rep.level = options.level;
    // ANOVA is only defined at the design doses; otherwise add an even grid.
    rep.grid = stats.doses;
    const bool has_anova =
        std::find(options.models.begin(), options.models.end(), ModelTag::Anova) != options.models.end();
    if (!has_anova) {
        for (double d : linspace(rep.range.lo, rep.range.hi, options.grid_points))
            rep.grid.push_back(d);
        std::sort(rep.grid.begin(), rep.grid.end());
        rep.grid.erase(std::unique(rep.grid.begin(), rep.grid.end()), rep.grid.end());
    }

    std::vector<ModelKind> candidates;
    for (ModelTag t : options.models) {
        ModelKind m = t == ModelTag::Anova ? ModelKind::anova(stats.doses) : ModelKind(t);
        if (std::find(candidates.begin(), candidates.end(), m) != candidates.end())
            throw std::invalid_argument("model " + m.name() + " listed twice");
        candidates.push_back(std::move(m));
    }
    for (const auto& m : candidates)
        rep.fits.push_back(fit(m, stats, options.fit));

    std::optional<BootstrapEnsemble> ens;
    if (options.mode == AnalysisMode::Bootstrap) {
        if (!input.data)
            throw std::invalid_argument(
                "bootstrap needs observation-level data (dose,response), not arm summaries");
        BootstrapOptions bo;
        bo.reps = options.boot_reps;
        bo.level = options.level;
        bo.threads = options.threads;
        bo.stream = StreamId{options.seed, 0, 0, 0};
        bo.fit = options.fit;
        bo.criterion = options.criterion;
        ens = bootstrap_select(*input.data, candidates, options.criteria, bo);
        rep.boot_reps = options.boot_reps;
        rep.seed = options.seed;
    }

    for (Criterion c : options.criteria) {
        CriterionReport cr;
        cr.criterion = c;
        for (const auto& f : rep.fits)
            cr.scores.push_back(input.data ? score(c, f, *input.data, options.criterion)
                                           : score(c, f, stats, options.criterion));
        cr.selected = select_index(cr.scores);
        const ModelWeights w = weights(cr.scores);
        cr.weights = w.weights;

        switch (options.mode) {
        case AnalysisMode::Select: {
            const auto& f = rep.fits[cr.selected];
            for (double d : rep.grid)
                cr.curve.push_back(f.predict(d));
            if (options.delta) {
                cr.td = target_dose(f.model, f.theta, *options.delta, rep.range).dose;
                cr.td_retained = cr.td ? 1.0 : 0.0;
            }
            break;
        }
        case AnalysisMode::Average: {
            for (double d : rep.grid)
                cr.curve.push_back(average_effect(rep.fits, w, d));
            if (options.delta) {
                const auto td = average_target_dose(rep.fits, w, *options.delta, rep.range);
                cr.td = td.dose;
                cr.td_retained = td.retained_weight;
            }
            break;
        }
        case AnalysisMode::Bootstrap: {
            const std::size_t b = ens->criterion_index(c);
            const auto counts = ens->selection_counts(b);
            for (std::size_t n : counts)
                cr.boot_freq.push_back(static_cast<double>(n) / static_cast<double>(ens->reps));
            for (double d : rep.grid) {
                const auto r = summarize(*ens, c, Estimand::dose_effect(d), options.level);
                cr.curve.push_back(*r.median);
                cr.curve_lower.push_back(*r.lower);
                cr.curve_upper.push_back(*r.upper);
            }
            if (options.delta) {
                const auto r =
                    summarize(*ens, c, Estimand::target_dose(*options.delta, rep.range), options.level);
                cr.td = r.median;
                cr.td_lower = r.lower;
                cr.td_upper = r.upper;
                cr.td_retained = static_cast<double>(r.reps_used) / static_cast<double>(ens->reps);
            }
            break;
        }
        }
        rep.criteria.push_back(std::move(cr));
    }
    return rep;
}

std::string format_percent(double share)
{
    // slack so decimal ties such as 0.145 round up despite binary error
    const double pct = std::floor(share * 100.0 + 0.5 + 1e-9);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f%%", pct == 0.0 ? 0.0 : pct);
    return buf;
}

std::vector<std::string> parameter_names(const ModelKind& model)
{
    switch (model.tag()) {
    case ModelTag::Linear: return {"e0", "delta"};
    case ModelTag::Quadratic: return {"e0", "b1", "b2"};
    case ModelTag::Emax: return {"e0", "emax", "ed50"};
    case ModelTag::SigEmax: return {"e0", "emax", "c", "h"};
    case ModelTag::Anova: {
        std::vector<std::string> names;
        for (double d : model.anova_doses())
            names.push_back("mu[" + format_double(d) + "]");
        return names;
    }
    }
    return {};
}

namespace {

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false)
{
    if (s.size() >= width)
        return s;
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

void write_analysis_text(std::ostream& out, const AnalysisReport& rep)
{
    const bool boot = rep.mode == AnalysisMode::Bootstrap;
    out << "mode: " << to_string(rep.mode);
    if (boot)
        out << "  (" << rep.boot_reps << " resamples, seed " << rep.seed << ")";
    out << "\n\n";

    for (const auto& f : rep.fits) {
        if (!f.identifiable)
            out << "warning: " << f.model.name() << " is not identifiable from these doses\n";
        else if (!f.converged)
            out << "warning: " << f.model.name() << " fit did not converge\n";
    }

    out << pad("model", 11, true);
    for (const auto& cr : rep.criteria) {
        const std::string c(to_string(cr.criterion));
        out << " | " << pad(c + " value", 11) << pad("weight", 8);
        if (boot)
            out << pad("boot", 7);
    }
    out << '\n';
    for (std::size_t m = 0; m < rep.fits.size(); ++m) {
        out << pad(rep.fits[m].model.name(), 11, true);
        for (const auto& cr : rep.criteria) {
            out << " | " << pad(fixed(cr.scores[m].value, 2), 11) << pad(format_percent(cr.weights[m]), 8);
            if (boot)
                out << pad(format_percent(cr.boot_freq[m]), 7);
        }
        out << '\n';
    }
    out << '\n';
    for (const auto& cr : rep.criteria)
        out << "selected by " << to_string(cr.criterion) << ": " << rep.fits[cr.selected].model.name()
            << '\n';
    out << '\n';

    const char* what = rep.mode == AnalysisMode::Select    ? "selected-model"
                       : rep.mode == AnalysisMode::Average ? "weight-averaged"
                                                           : "bootstrap median";
    out << what << " dose-response curve\n" << pad("dose", 10);
    for (const auto& cr : rep.criteria)
        out << pad(std::string(to_string(cr.criterion)), 10);
    out << '\n';
    for (std::size_t i = 0; i < rep.grid.size(); ++i) {
        out << pad(fixed(rep.grid[i], 3), 10);
        for (const auto& cr : rep.criteria)
            out << pad(fixed(cr.curve[i], 4), 10);
        out << '\n';
    }

    if (rep.delta) {
        out << "\ntarget dose for an effect of " << format_double(*rep.delta) << " over placebo\n";
        for (const auto& cr : rep.criteria) {
            out << pad(std::string(to_string(cr.criterion)), 6, true) << ": ";
            if (!cr.td) {
                out << "not reached within the dose range\n";
                continue;
            }
            out << fixed(*cr.td, 3);
            if (cr.td_lower)
                out << "  " << format_percent(rep.level) << " CI [" << fixed(*cr.td_lower, 3) << ", "
                    << fixed(*cr.td_upper, 3) << "]";
            if (rep.mode == AnalysisMode::Average)
                out << "  (retained weight " << format_percent(cr.td_retained) << ")";
            else if (boot)
                out << "  (" << format_percent(cr.td_retained) << " of resamples in range)";
            out << '\n';
        }
    }
}

void write_analysis_csv(std::ostream& out, const AnalysisReport& rep)
{
    out << kAnalysisCsvHeader << '\n';
    out << "section,criterion,model,key,value\n";
    auto row = [&](std::string_view section, std::string_view crit, std::string_view model,
                   const std::string& key, const std::string& value) {
        out << section << ',' << crit << ',' << model << ',' << key << ',' << value << '\n';
    };
    row("meta", "", "", "mode", std::string(to_string(rep.mode)));
    if (rep.mode == AnalysisMode::Bootstrap) {
        row("meta", "", "", "boot_reps", std::to_string(rep.boot_reps));
        row("meta", "", "", "seed", std::to_string(rep.seed));
        row("meta", "", "", "level", format_double(rep.level));
    }
    if (rep.delta)
        row("meta", "", "", "delta", format_double(*rep.delta));
    for (const auto& cr : rep.criteria) {
        const auto c = to_string(cr.criterion);
        for (std::size_t m = 0; m < rep.fits.size(); ++m) {
            const std::string name = rep.fits[m].model.name();
            row("criterion", c, name, "value", format_double(cr.scores[m].value));
            row("criterion", c, name, "penalty", format_double(cr.scores[m].penalty));
            row("criterion", c, name, "weight", format_double(cr.weights[m]));
            if (!cr.boot_freq.empty())
                row("criterion", c, name, "boot_freq", format_double(cr.boot_freq[m]));
        }
        row("selected", c, rep.fits[cr.selected].model.name(), "", "");
        for (std::size_t i = 0; i < rep.grid.size(); ++i) {
            row("curve", c, "", format_double(rep.grid[i]), format_double(cr.curve[i]));
            if (!cr.curve_lower.empty()) {
                row("curve_lower", c, "", format_double(rep.grid[i]), format_double(cr.curve_lower[i]));
                row("curve_upper", c, "", format_double(rep.grid[i]), format_double(cr.curve_upper[i]));
            }
        }
        if (rep.delta) {
            row("target_dose", c, "", "estimate", format_optional(cr.td));
            if (rep.mode == AnalysisMode::Bootstrap) {
                row("target_dose", c, "", "lower", format_optional(cr.td_lower));
                row("target_dose", c, "", "upper", format_optional(cr.td_upper));
            }
            row("target_dose", c, "", "retained", format_double(cr.td_retained));
        }
    }
}

nlohmann::json analysis_json(const AnalysisReport& rep)
{
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["schema"] = "dosemav-analysis";
    j["version"] = 1;
    j["mode"] = to_string(rep.mode);
    if (rep.mode == AnalysisMode::Bootstrap) {
        j["boot_reps"] = rep.boot_reps;
        j["seed"] = rep.seed;
        j["level"] = rep.level;
    }
    j["delta"] = opt(rep.delta);
    j["fits"] = fits_json(rep.fits);
    j["grid"] = rep.grid;
    json crits = json::array();
    for (const auto& cr : rep.criteria) {
        json c;
        c["criterion"] = to_string(cr.criterion);
        json models = json::array();
        for (std::size_t m = 0; m < rep.fits.size(); ++m) {
            json e{{"model", rep.fits[m].model.name()},
                   {"value", cr.scores[m].value},
                   {"penalty", cr.scores[m].penalty},
                   {"weight", cr.weights[m]}};
            if (!cr.boot_freq.empty())
                e["boot_freq"] = cr.boot_freq[m];
            models.push_back(e);
        }
        c["models"] = models;
        c["selected"] = rep.fits[cr.selected].model.name();
        c["curve"] = cr.curve;
        if (!cr.curve_lower.empty()) {
            c["curve_lower"] = cr.curve_lower;
            c["curve_upper"] = cr.curve_upper;
        }
        if (rep.delta) {
            json td{{"estimate", opt(cr.td)}, {"retained", cr.td_retained}};
            if (rep.mode == AnalysisMode::Bootstrap) {
                td["lower"] = opt(cr.td_lower);
                td["upper"] = opt(cr.td_upper);
            }
            c["target_dose"] = td;
        }
        crits.push_back(c);
    }
    j["criteria"] = crits;
    return j;
}

void write_fits_csv(std::ostream& out, std::span<const FitResult> fits)
{
    out << kFitCsvHeader << '\n';
    out << "model,converged,identifiable,n_obs,sigma2,log_lik,parameter,value\n";
    for (const auto& f : fits) {
        const auto names = parameter_names(f.model);
        const std::string prefix = f.model.name() + "," + (f.converged ? "1" : "0") + "," +
                                   (f.identifiable ? "1" : "0") + "," + std::to_string(f.n_obs) +
                                   "," + format_double(f.sigma2) + "," + format_double(f.log_lik) +
                                   ",";
        for (std::size_t j = 0; j < f.theta.size(); ++j)
            out << prefix << names[j] << ',' << format_double(f.theta[j]) << '\n';
    }
}

nlohmann::json fits_json(std::span<const FitResult> fits)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : fits) {
        const auto names = parameter_names(f.model);
        nlohmann::json theta = nlohmann::json::object();
        for (std::size_t j = 0; j < f.theta.size(); ++j)
            theta[names[j]] = f.theta[j];
        arr.push_back({{"model", f.model.name()},
                       {"converged", f.converged},
                       {"identifiable", f.identifiable},
                       {"n_obs", f.n_obs},
                       {"sigma2", f.sigma2},
                       {"log_lik", f.log_lik},
                       {"theta", theta},
                       {"theta_vector", f.theta}});
    }
    return arr;
}

}  // namespace dosemav

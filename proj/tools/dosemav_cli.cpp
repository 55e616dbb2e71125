// dosemav: dose-response fitting, model selection/averaging and the
// simulation study driver.

#include "dosemav/analysis.hpp"
#include "dosemav/io.hpp"
#include "dosemav/parallel.hpp"
#include "dosemav/sim_config.hpp"
#include "dosemav/simlab.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dosemav;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

// Usage and input problems map to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

std::vector<ModelTag> parse_models(const std::string& list)
{
    std::vector<ModelTag> tags;
    for (const auto& name : split_list(list)) {
        auto t = parse_model_tag(name);
        if (!t)
            throw UsageError("unknown model '" + name +
                             "' (expected linear, quadratic, emax, sigemax, anova)");
        tags.push_back(*t);
    }
    if (tags.empty())
        throw UsageError("--models is empty");
    return tags;
}

std::vector<Criterion> parse_criteria(const std::string& list)
{
    if (list == "all")
        return {kAllCriteria.begin(), kAllCriteria.end()};
    std::vector<Criterion> out;
    for (const auto& name : split_list(list)) {
        auto c = parse_criterion(name);
        if (!c)
            throw UsageError("unknown criterion '" + name + "' (expected aic, aicc, bic, bic2, tic)");
        out.push_back(*c);
    }
    if (out.empty())
        throw UsageError("--criterion is empty");
    return out;
}

AnalysisInput load_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open " + path);
    try {
        return read_analysis_csv(in);
    } catch (const CsvError& e) {
        throw UsageError(path + ": " + e.what());
    }
}

// Writes to --out when given, stdout otherwise.
template <typename Fn>
void emit(const std::string& out_path, Fn&& write)
{
    if (out_path.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out)
        throw UsageError("cannot write " + out_path);
    write(out);
}

struct FitArgs {
    std::string input, models = "linear,quadratic,emax,sigemax,anova", out, format = "csv";
};

int cmd_fit(const FitArgs& a)
{
    const auto tags = parse_models(a.models);
    const AnalysisInput input = load_input(a.input);
    std::vector<FitResult> fits;
    for (ModelTag t : tags) {
        const ModelKind m = t == ModelTag::Anova ? ModelKind::anova(input.stats.doses) : ModelKind(t);
        fits.push_back(fit(m, input.stats));
        const auto& f = fits.back();
        if (!f.identifiable)
            std::cerr << "warning: " << m.name()
                      << " is not identifiable from these doses; estimates are not meaningful\n";
        else if (!f.converged)
            std::cerr << "warning: " << m.name() << " fit did not converge\n";
    }
    emit(a.out, [&](std::ostream& os) {
        if (a.format == "json")
            os << fits_json(fits).dump(2) << '\n';
        else
            write_fits_csv(os, fits);
    });
    return 0;
}

struct AnalyzeArgs {
    std::string input, models = "linear,quadratic,emax,sigemax,anova", criterion, mode = "average";
    std::string out, format = "text";
    std::optional<double> delta;
    std::size_t boot_reps = 500;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::size_t grid_points = 11;
    unsigned threads = 0;
    bool count_variance = false;
};

int cmd_analyze(const AnalyzeArgs& a)
{
    AnalysisOptions opt;
    opt.models = parse_models(a.models);
    opt.mode = *parse_analysis_mode(a.mode);
    // TIC has no bootstrap variant; the default list drops it in bootstrap mode.
    std::string crit = a.criterion;
    if (crit.empty())
        crit = opt.mode == AnalysisMode::Bootstrap ? "aic,aicc,bic,bic2" : "all";
    opt.criteria = parse_criteria(crit);
    opt.delta = a.delta;
    opt.boot_reps = a.boot_reps;
    opt.seed = a.seed;
    opt.level = a.level;
    opt.grid_points = a.grid_points;
    opt.threads = a.threads ? a.threads : default_thread_count();
    opt.criterion.count_variance = a.count_variance;

    const AnalysisInput input = load_input(a.input);
    const AnalysisReport rep = analyze(input, opt);
    emit(a.out, [&](std::ostream& os) {
        if (a.format == "json")
            os << analysis_json(rep).dump(2) << '\n';
        else if (a.format == "csv")
            write_analysis_csv(os, rep);
        else
            write_analysis_text(os, rep);
    });
    return 0;
}

struct SimulateArgs {
    std::string config, out = "simulation_out", experiment = "study", true_model = "sigemax";
    std::string sizes;
    std::size_t reps = 1000;
    std::optional<std::size_t> n_sim, boot_reps;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool quiet = false;
};

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& write)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UsageError("cannot write " + path.string());
    write(out);
}

int cmd_simulate(const SimulateArgs& a)
{
    const unsigned threads = a.threads ? a.threads : default_thread_count();
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec)
        throw UsageError("cannot create " + a.out + ": " + ec.message());

    if (a.experiment == "consistency" || a.experiment == "variance") {
        std::vector<std::size_t> sizes;
        for (const auto& s : split_list(a.sizes))
            sizes.push_back(std::stoul(s));
        std::vector<SelectionCurvePoint> pts;
        std::string name = a.experiment;
        if (a.experiment == "consistency") {
            ConsistencyOptions o;
            auto tag = parse_model_tag(a.true_model);
            if (!tag || (*tag != ModelTag::Emax && *tag != ModelTag::SigEmax))
                throw UsageError("--true-model must be emax or sigemax");
            o.true_model = *tag;
            o.sizes = sizes.empty() ? log_spaced_sizes(150, 15000, 8) : sizes;
            o.reps = a.reps;
            o.threads = threads;
            if (a.seed)
                o.seed = *a.seed;
            name += "-" + std::string(to_string(*tag));
            pts = consistency_experiment(o);
        } else {
            VarianceScalingOptions o;
            if (!sizes.empty())
                o.group_sizes = sizes;
            o.reps = a.reps;
            o.threads = threads;
            if (a.seed)
                o.seed = *a.seed;
            pts = variance_scaling_experiment(o);
        }
        const fs::path path = fs::path(a.out) / (name + ".csv");
        write_file(path, [&](std::ostream& os) { write_selection_curve_csv(os, name, pts); });
        write_selection_curve_csv(std::cout, name, pts);
        std::cerr << "wrote " << path.string() << '\n';
        return 0;
    }
    if (a.experiment != "study")
        throw UsageError("--experiment must be study, consistency or variance");
    if (a.config.empty())
        throw UsageError("simulate needs --config (or --input) with a study configuration");

    StudyConfig cfg = load_study_config(a.config);
    for (const auto& w : cfg.warnings)
        std::cerr << "warning: " << w << '\n';
    for (auto& s : cfg.scenarios) {
        if (a.n_sim)
            s.n_sim = *a.n_sim;
        if (a.boot_reps)
            s.boot_reps = *a.boot_reps;
        if (a.seed)
            s.seed = *a.seed;
        if (s.n_sim == 0)
            throw UsageError("n_sim must be positive");
    }
    RunOptions ro;
    ro.threads = threads;
    ProgressFn progress;
    if (!a.quiet)
        progress = [](std::size_t done, std::size_t total, const Scenario& s) {
            std::cerr << "[" << done << "/" << total << "] " << s.label() << '\n';
        };
    const auto reports = run_study(cfg, ro, progress);
    const auto rows = smse_rows(reports);
    const StudySummary summary = summarize_study(rows);

    const fs::path csv = fs::path(a.out) / "scenarios.csv";
    const fs::path json = fs::path(a.out) / "summary.json";
    write_file(csv, [&](std::ostream& os) { write_scenario_csv(os, reports); });
    write_file(json, [&](std::ostream& os) { os << summary_json(summary).dump(2) << '\n'; });
    print_summary_tables(std::cout, summary);
    std::cerr << "wrote " << csv.string() << " and " << json.string() << '\n';
    return 0;
}

struct SummarizeArgs {
    std::string input, out;
};

// Recomputes the study summary from a scenario metrics CSV.
int cmd_summarize(const SummarizeArgs& a)
{
    std::ifstream in(a.input);
    if (!in)
        throw UsageError("cannot open " + a.input);
    std::vector<SmseRow> rows;
    try {
        rows = read_smse_rows(in);
    } catch (const CsvError& e) {
        throw UsageError(a.input + ": " + e.what());
    }
    const StudySummary summary = summarize_study(rows);
    if (!a.out.empty())
        emit(a.out, [&](std::ostream& os) { os << summary_json(summary).dump(2) << '\n'; });
    print_summary_tables(std::cout, summary);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dose-response model selection and averaging"};
    app.require_subcommand(1);

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "Fit candidate models and print their parameters");
    fit_cmd->add_option("--input", fa.input, "CSV with dose,response or dose,n,mean,sd")->required();
    fit_cmd->add_option("--models", fa.models, "Comma-separated candidate models");
    fit_cmd->add_option("--out", fa.out, "Output file (default stdout)");
    fit_cmd->add_option("--format", fa.format)->check(CLI::IsMember({"csv", "json"}));

    AnalyzeArgs aa;
    auto* an = app.add_subcommand("analyze", "Criteria, weights and model-averaged estimates");
    an->add_option("--input", aa.input, "CSV with dose,response or dose,n,mean,sd")->required();
    an->add_option("--models", aa.models, "Comma-separated candidate models");
    an->add_option("--criterion", aa.criterion,
                   "Comma-separated subset of aic,aicc,bic,bic2,tic, or all");
    an->add_option("--mode", aa.mode)->check(CLI::IsMember({"select", "average", "bootstrap"}));
    an->add_option("--delta", aa.delta, "Target effect over placebo for the target dose");
    an->add_option("--boot-reps", aa.boot_reps, "Bootstrap resamples")->check(CLI::PositiveNumber);
    an->add_option("--seed", aa.seed, "Bootstrap seed");
    an->add_option("--level", aa.level, "Percentile interval level")->check(CLI::Range(0.0, 1.0));
    an->add_option("--grid-points", aa.grid_points, "Doses on the reported curve grid")
        ->check(CLI::PositiveNumber);
    an->add_option("--threads", aa.threads, "Worker threads (default DOSEMAV_THREADS or all cores)");
    an->add_flag("--count-variance", aa.count_variance, "Count sigma^2 in the parameter dimension");
    an->add_option("--out", aa.out, "Output file (default stdout)");
    an->add_option("--format", aa.format)->check(CLI::IsMember({"text", "csv", "json"}));

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Run the simulation study or a selection experiment");
    sim->add_option("--config,--input", sa.config, "Study configuration (JSON)");
    sim->add_option("--out", sa.out, "Output directory");
    sim->add_option("--experiment", sa.experiment)
        ->check(CLI::IsMember({"study", "consistency", "variance"}));
    sim->add_option("--true-model", sa.true_model, "Consistency experiment truth: emax or sigemax");
    sim->add_option("--sizes", sa.sizes, "Comma-separated sample sizes for the experiments");
    sim->add_option("--reps", sa.reps, "Replications per size (experiments)")->check(CLI::PositiveNumber);
    sim->add_option("--n-sim", sa.n_sim, "Override the config's n_sim");
    sim->add_option("--boot-reps", sa.boot_reps, "Override the config's boot_reps");
    sim->add_option("--seed", sa.seed, "Override the config's seed");
    sim->add_option("--threads", sa.threads, "Worker threads (default DOSEMAV_THREADS or all cores)");
    sim->add_flag("--quiet", sa.quiet, "No progress lines");

    SummarizeArgs su;
    auto* sum = app.add_subcommand("summarize", "Recompute ASMSE tables from scenarios.csv");
    sum->add_option("--input", su.input, "scenarios.csv written by simulate")->required();
    sum->add_option("--out", su.out, "Write summary JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*fit_cmd)
            return cmd_fit(fa);
        if (*an)
            return cmd_analyze(aa);
        if (*sim)
            return cmd_simulate(sa);
        if (*sum)
            return cmd_summarize(su);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: config " << e.what() << '\n';
        return kExitUsage;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const SingularMatrixError& e) {
        std::cerr << "error: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DegenerateMetricsError& e) {
        std::cerr << "error: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitUsage;
}

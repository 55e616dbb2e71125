#include "dosemav/sim_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>

namespace dosemav {

using nlohmann::json;

namespace {

std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }
std::string child(const std::string& ptr, std::size_t i) { return ptr + "/" + std::to_string(i); }

const json& require(const json& obj, const std::string& key, const std::string& ptr)
{
    if (!obj.contains(key))
        throw ConfigError(child(ptr, key), "required field is missing");
    return obj.at(key);
}

double as_number(const json& v, const std::string& ptr)
{
    if (!v.is_number())
        throw ConfigError(ptr, "expected a number");
    return v.get<double>();
}

std::uint64_t as_count(const json& v, const std::string& ptr)
{
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
        throw ConfigError(ptr, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

std::vector<double> as_numbers(const json& v, const std::string& ptr)
{
    if (!v.is_array() || v.empty())
        throw ConfigError(ptr, "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as_number(v[i], child(ptr, i)));
    return out;
}

ModelTag as_model(const json& v, const std::string& ptr)
{
    if (!v.is_string())
        throw ConfigError(ptr, "expected a model name");
    auto tag = parse_model_tag(v.get<std::string>());
    if (!tag)
        throw ConfigError(ptr, "unknown model '" + v.get<std::string>() + "'");
    return *tag;
}

struct DesignSpec {
    std::string name;
    std::vector<double> doses;
};

DesignSpec parse_design(const json& v, const std::string& ptr)
{
    if (v.is_string()) {
        try {
            return {v.get<std::string>(), study_design(v.get<std::string>())};
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ptr, e.what());
        }
    }
    if (!v.is_object())
        throw ConfigError(ptr, "expected a design name or {\"name\", \"doses\"}");
    const json& name = require(v, "name", ptr);
    if (!name.is_string())
        throw ConfigError(child(ptr, "name"), "expected a string");
    DesignSpec d{name.get<std::string>(), as_numbers(require(v, "doses", ptr), child(ptr, "doses"))};
    if (d.doses.size() < 2)
        throw ConfigError(child(ptr, "doses"), "a design needs at least two doses");
    if (d.doses.front() != 0.0)
        throw ConfigError(child(ptr, "doses"), "the first dose must be placebo (0)");
    for (std::size_t i = 1; i < d.doses.size(); ++i)
        if (!(d.doses[i] > d.doses[i - 1]))
            throw ConfigError(child(child(ptr, "doses"), i), "doses must be strictly increasing");
    return d;
}

TrueCurve parse_truth(ModelTag tag, const json& overrides, const std::string& ptr)
{
    TrueCurve truth = study_truth(tag);
    const std::string key(to_string(tag));
    std::string lower;
    for (char c : key)
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (!overrides.is_object() || !overrides.contains(lower))
        return truth;
    const std::string p = child(ptr, lower);
    const json& v = overrides.at(lower);
    if (tag == ModelTag::Anova && v.is_object()) {
        auto doses = as_numbers(require(v, "doses", p), child(p, "doses"));
        auto means = as_numbers(require(v, "means", p), child(p, "means"));
        if (doses.size() != means.size())
            throw ConfigError(child(p, "means"), "needs one mean per dose");
        try {
            truth.model = ModelKind::anova(std::move(doses));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(child(p, "doses"), e.what());
        }
        truth.theta = std::move(means);
    } else {
        truth.theta = as_numbers(v, p);
    }
    try {
        check_params(truth.model, truth.theta);
    } catch (const DomainError& e) {
        throw ConfigError(p, e.what());
    }
    return truth;
}

}  // namespace

StudyConfig parse_study_config(const json& cfg)
{
    if (!cfg.is_object())
        throw ConfigError("", "configuration must be a JSON object");
    if (cfg.contains("schema_version")) {
        const auto v = as_count(cfg.at("schema_version"), "/schema_version");
        if (v != kConfigSchemaVersion)
            throw ConfigError("/schema_version", "unsupported schema version " + std::to_string(v));
    }

    const json& designs_json = require(cfg, "designs", "");
    if (!designs_json.is_array() || designs_json.empty())
        throw ConfigError("/designs", "expected a non-empty array");
    std::vector<DesignSpec> designs;
    for (std::size_t i = 0; i < designs_json.size(); ++i)
        designs.push_back(parse_design(designs_json[i], child("/designs", i)));

    const json& ns_json = require(cfg, "sample_sizes", "");
    if (!ns_json.is_array() || ns_json.empty())
        throw ConfigError("/sample_sizes", "expected a non-empty array");
    std::vector<std::size_t> ns;
    for (std::size_t i = 0; i < ns_json.size(); ++i)
        ns.push_back(as_count(ns_json[i], child("/sample_sizes", i)));

    const json& models_json = require(cfg, "true_models", "");
    if (!models_json.is_array() || models_json.empty())
        throw ConfigError("/true_models", "expected a non-empty array");
    std::vector<ModelTag> truths;
    for (std::size_t i = 0; i < models_json.size(); ++i)
        truths.push_back(as_model(models_json[i], child("/true_models", i)));

    const json& cand_json = require(cfg, "candidates", "");
    if (!cand_json.is_array() || cand_json.empty())
        throw ConfigError("/candidates", "expected a non-empty array");
    std::vector<ModelTag> cands;
    for (std::size_t i = 0; i < cand_json.size(); ++i) {
        const ModelTag t = as_model(cand_json[i], child("/candidates", i));
        if (std::find(cands.begin(), cands.end(), t) != cands.end())
            throw ConfigError(child("/candidates", i), "duplicate candidate");
        cands.push_back(t);
    }

    const json overrides = cfg.value("theta", json::object());
    if (!overrides.is_object())
        throw ConfigError("/theta", "expected an object keyed by model name");

    Scenario base;
    if (cfg.contains("noise_sd")) {
        base.noise_sd = as_number(cfg.at("noise_sd"), "/noise_sd");
        if (!(base.noise_sd >= 0.0))
            throw ConfigError("/noise_sd", "must be non-negative");
    }
    if (cfg.contains("delta")) {
        base.delta = as_number(cfg.at("delta"), "/delta");
        if (base.delta == 0.0)
            throw ConfigError("/delta", "target effect must be non-zero");
    }
    if (cfg.contains("n_sim"))
        base.n_sim = as_count(cfg.at("n_sim"), "/n_sim");
    if (cfg.contains("boot_reps"))
        base.boot_reps = as_count(cfg.at("boot_reps"), "/boot_reps");
    if (cfg.contains("seed"))
        base.seed = as_count(cfg.at("seed"), "/seed");

    StudyConfig out;
    std::size_t index = 0;
    for (std::size_t di = 0; di < designs.size(); ++di) {
        const auto& d = designs[di];
        std::vector<ModelKind> candidates;
        for (ModelTag t : cands) {
            if (t == ModelTag::SigEmax && d.doses.size() < kMinDosesForSigEmax) {
                out.warnings.push_back("design " + d.name + ": SigEmax dropped from the candidates (" +
                                       std::to_string(d.doses.size()) +
                                       " doses cannot identify its 4 parameters)");
                continue;
            }
            candidates.push_back(t == ModelTag::Anova ? ModelKind::anova(d.doses) : ModelKind(t));
        }
        if (candidates.empty())
            throw ConfigError(child("/designs", di), "no candidate model is usable with this design");
        for (std::size_t ni = 0; ni < ns.size(); ++ni) {
            if (ns[ni] < d.doses.size())
                throw ConfigError(child("/sample_sizes", ni),
                                  "smaller than the number of doses of design " + d.name);
            for (std::size_t mi = 0; mi < truths.size(); ++mi) {
                Scenario s = base;
                s.index = index++;
                s.design_name = d.name;
                s.doses = d.doses;
                s.total = ns[ni];
                s.truth = parse_truth(truths[mi], overrides, "/theta");
                s.candidates = candidates;
                if (s.truth.model.tag() == ModelTag::Anova) {
                    for (double dose : s.doses)
                        if (!std::binary_search(s.truth.model.anova_doses().begin(),
                                                s.truth.model.anova_doses().end(), dose))
                            throw ConfigError(child("/true_models", mi),
                                              "ANOVA truth is not defined at dose " +
                                                  std::to_string(dose) + " of design " + d.name);
                }
                if (!s.truth.target(s.delta, s.range()))
                    throw ConfigError(child("/true_models", mi),
                                      "true curve never reaches the target effect within design " +
                                          d.name);
                out.scenarios.push_back(std::move(s));
            }
        }
    }
    return out;
}

StudyConfig load_study_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("", "cannot open " + path.string());
    json cfg;
    try {
        in >> cfg;
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_study_config(cfg);
}

json default_study_config()
{
    return json{
        {"schema_version", kConfigSchemaVersion},
        {"designs", {"A", "B", "C", "D"}},
        {"sample_sizes", {150, 250}},
        {"true_models", {"linear", "quadratic", "emax", "sigemax", "anova"}},
        {"candidates", {"linear", "quadratic", "emax", "sigemax"}},
        {"noise_sd", kStudyNoiseSd},
        {"delta", kStudyDelta},
        {"n_sim", 1000},
        {"boot_reps", 500},
        {"seed", 20170615},
    };
}

}  // namespace dosemav

#include "dosemav/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dosemav {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ','))
        out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::string lower(std::string s)
{
    for (auto& c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

double parse_number(const std::string& field, std::size_t line, const char* what)
{
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(v))
        throw CsvError(line, std::string("invalid ") + what + " '" + field + "'");
    return v;
}

bool skippable(const std::string& line)
{
    const std::string t = trim(line);
    return t.empty() || t.front() == '#';
}

}  // namespace

AnalysisInput read_analysis_csv(std::istream& in)
{
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line))
            continue;
        header = split(line);
        for (auto& h : header)
            h = lower(h);
        break;
    }
    if (header.empty())
        throw CsvError(0, "no observations");

    const bool long_form = header == std::vector<std::string>{"dose", "response"};
    const bool summary = header == std::vector<std::string>{"dose", "n", "mean", "sd"};
    if (!long_form && !summary)
        throw CsvError(lineno, "expected header 'dose,response' or 'dose,n,mean,sd'");

    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> row_lines;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line))
            continue;
        const auto fields = split(line);
        if (fields.size() != header.size())
            throw CsvError(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
        std::vector<double> row;
        for (std::size_t i = 0; i < fields.size(); ++i)
            row.push_back(parse_number(fields[i], lineno, header[i].c_str()));
        if (row[0] < 0.0)
            throw CsvError(lineno, "dose must be non-negative");
        if (summary) {
            if (row[1] < 1.0 || row[1] != std::floor(row[1]))
                throw CsvError(lineno, "n must be a positive integer");
            if (row[3] < 0.0)
                throw CsvError(lineno, "sd must be non-negative");
        }
        rows.push_back(std::move(row));
        row_lines.push_back(lineno);
    }
    if (rows.empty())
        throw CsvError(0, "no observations");

    AnalysisInput input;
    if (long_form) {
        std::vector<double> doses, ys;
        for (const auto& r : rows) {
            doses.push_back(r[0]);
            ys.push_back(r[1]);
        }
        input.data = Dataset::from_observations(doses, ys);
        input.stats = input.data->stats();
        return input;
    }
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rows[a][0] < rows[b][0]; });
    std::vector<double> doses, means, sds;
    std::vector<std::size_t> ns;
    for (std::size_t j = 0; j < order.size(); ++j) {
        const auto& r = rows[order[j]];
        if (j > 0 && r[0] == rows[order[j - 1]][0])
            throw CsvError(std::max(row_lines[order[j]], row_lines[order[j - 1]]),
                           "dose " + format_double(r[0]) + " listed twice");
        doses.push_back(r[0]);
        ns.push_back(static_cast<std::size_t>(r[1]));
        means.push_back(r[2]);
        sds.push_back(r[3]);
    }
    input.stats = GroupStats::from_summaries(doses, ns, means, sds);
    return input;
}

std::string format_double(double v)
{
    if (std::isnan(v))
        return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& v)
{
    return v ? format_double(*v) : "NA";
}

namespace {

std::string estimator_label(const EstimatorKey& k)
{
    return std::string(to_string(k.method)) + "/" + std::string(to_string(k.criterion));
}

}  // namespace

void write_scenario_csv(std::ostream& out, std::span<const ScenarioReport> reports)
{
    out << kScenarioCsvHeader << '\n';
    out << "scenario,design,n_total,true_model,method,criterion,metric,key,value\n";
    for (const auto& r : reports) {
        const auto& s = r.scenario;
        const std::string prefix = std::to_string(s.index) + "," + s.design_name + "," +
                                   std::to_string(s.total) + "," + s.truth.model.name() + ",";
        auto row = [&](std::string_view method, std::string_view crit, std::string_view metric,
                       const std::string& key, const std::string& value) {
            out << prefix << method << ',' << crit << ',' << metric << ',' << key << ',' << value
                << '\n';
        };
        for (std::size_t e = 0; e < r.keys.size(); ++e) {
            const auto method = to_string(r.keys[e].method);
            const auto crit = to_string(r.keys[e].criterion);
            if (e < r.estimators.size()) {
                const auto& es = r.estimators[e];
                for (std::size_t i = 0; i < es.mse.size(); ++i)
                    row(method, crit, "mse", format_double(s.doses[i]), format_double(es.mse[i]));
                row(method, crit, "amse", "", format_double(es.amse));
                row(method, crit, "mse_td", "", format_double(es.mse_td));
                row(method, crit, "td_used", "", std::to_string(es.td_used));
                row(method, crit, "td_excluded", "", std::to_string(es.td_excluded));
            }
            row(method, crit, "smse", "", e < r.smse.size() ? format_optional(r.smse[e]) : "NA");
            row(method, crit, "smse_td", "",
                e < r.smse_td.size() ? format_optional(r.smse_td[e]) : "NA");
        }
        for (std::size_t m = 0; m < r.models.size(); ++m) {
            const std::string name = s.candidates[m].name();
            row("model", "", "amse", name, format_double(r.models[m].amse));
            row("model", "", "mse_td", name, format_double(r.models[m].mse_td));
        }
        row("scenario", "", "mmse", "", format_double(r.mmse));
        row("scenario", "", "mmse_td", "", format_optional(r.mmse_td));
        for (std::size_t c = 0; c < r.selection_prob.size(); ++c)
            for (std::size_t m = 0; m < r.selection_prob[c].size(); ++m)
                row("selection", to_string(kAllCriteria[c]), "select_prob", s.candidates[m].name(),
                    format_double(r.selection_prob[c][m]));
        const Criterion boot[] = {Criterion::AIC, Criterion::BIC};
        for (std::size_t b = 0; b < r.bootstrap_freq.size(); ++b)
            for (std::size_t m = 0; m < r.bootstrap_freq[b].size(); ++m)
                row("bootstrap", to_string(boot[b]), "boot_freq", s.candidates[m].name(),
                    format_double(r.bootstrap_freq[b][m]));
        row("scenario", "", "n_sim", "", std::to_string(s.n_sim));
        row("scenario", "", "tic_fallbacks", "", std::to_string(r.tic_fallbacks));
        row("scenario", "", "nonconverged", "", std::to_string(r.nonconverged));
        row("scenario", "", "degenerate", "", r.degenerate ? "1" : "0");
    }
}

std::vector<SmseRow> read_smse_rows(std::istream& in)
{
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::vector<SmseRow> rows;
    std::map<std::pair<std::size_t, std::string>, std::size_t> slot;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line))
            continue;
        const auto f = split(line);
        if (!header_seen) {
            if (f.size() != 9 || f[0] != "scenario")
                throw CsvError(lineno, "not a scenario metrics file");
            header_seen = true;
            continue;
        }
        if (f.size() != 9)
            throw CsvError(lineno, "expected 9 fields");
        const std::string& metric = f[6];
        if (metric != "smse" && metric != "smse_td")
            continue;
        EstimatorKey key;
        if (f[4] == "selection") key.method = Method::Selection;
        else if (f[4] == "averaging") key.method = Method::Averaging;
        else if (f[4] == "bootstrap") key.method = Method::Bootstrap;
        else throw CsvError(lineno, "unknown method '" + f[4] + "'");
        auto crit = parse_criterion(f[5]);
        if (!crit)
            throw CsvError(lineno, "unknown criterion '" + f[5] + "'");
        key.criterion = *crit;
        const auto scenario = static_cast<std::size_t>(parse_number(f[0], lineno, "scenario"));
        std::optional<double> value;
        if (f[8] != "NA")
            value = parse_number(f[8], lineno, "value");
        const auto id = std::make_pair(scenario, f[4] + "/" + f[5]);
        auto it = slot.find(id);
        if (it == slot.end()) {
            it = slot.emplace(id, rows.size()).first;
            rows.push_back(SmseRow{scenario, f[1], key, std::nullopt, std::nullopt});
        }
        (metric == "smse" ? rows[it->second].smse : rows[it->second].smse_td) = value;
    }
    return rows;
}

nlohmann::json summary_json(const StudySummary& summary)
{
    using nlohmann::ordered_json;
    auto value = [](const std::optional<double>& v) -> nlohmann::json {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["schema"] = "dosemav-study-summary";
    j["version"] = 1;
    j["designs"] = summary.designs;
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& k : summary.keys)
        keys.push_back(estimator_label(k));
    j["estimators"] = keys;
    nlohmann::json rows = nlohmann::json::object();
    for (std::size_t d = 0; d < summary.designs.size(); ++d) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& v : summary.asmse[d])
            row.push_back(value(v));
        rows[summary.designs[d]] = row;
    }
    j["asmse"] = rows;
    nlohmann::json td = nlohmann::json::array();
    for (const auto& v : summary.asmse_td)
        td.push_back(value(v));
    j["asmse_td"] = td;
    return j;
}

namespace {

void print_table(std::ostream& out, const StudySummary& s, const std::vector<EstimatorKey>& cols,
                 const std::string& title)
{
    std::vector<std::size_t> idx;
    std::vector<EstimatorKey> shown;
    for (const auto& c : cols) {
        auto it = std::find(s.keys.begin(), s.keys.end(), c);
        if (it != s.keys.end()) {
            idx.push_back(static_cast<std::size_t>(it - s.keys.begin()));
            shown.push_back(c);
        }
    }
    if (idx.empty())
        return;
    auto cell = [](const std::optional<double>& v) {
        char buf[32];
        if (v)
            std::snprintf(buf, sizeof buf, "%9.2f", *v);
        else
            std::snprintf(buf, sizeof buf, "%9s", "NA");
        return std::string(buf);
    };
    out << title << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-12s", "criterion");
    out << buf;
    for (const auto& k : shown) {
        std::string name(to_string(k.criterion));
        if (k.method == Method::Bootstrap)
            name += "-Boot";
        std::snprintf(buf, sizeof buf, "%9s", name.c_str());
        out << buf;
    }
    out << '\n';
    for (std::size_t d = 0; d < s.designs.size(); ++d) {
        std::snprintf(buf, sizeof buf, "%-12s", ("ASMSE(" + s.designs[d] + ")").c_str());
        out << buf;
        for (std::size_t i : idx)
            out << cell(s.asmse[d][i]);
        out << '\n';
    }
    std::snprintf(buf, sizeof buf, "%-12s", "ASMSE_td");
    out << buf;
    for (std::size_t i : idx)
        out << cell(s.asmse_td[i]);
    out << "\n\n";
}

}  // namespace

void print_summary_tables(std::ostream& out, const StudySummary& summary)
{
    const Criterion order[] = {Criterion::AIC, Criterion::BIC, Criterion::BIC2, Criterion::TIC,
                               Criterion::AICc};
    std::vector<EstimatorKey> sel, avg;
    for (Criterion c : order) {
        sel.push_back({Method::Selection, c});
        avg.push_back({Method::Averaging, c});
    }
    avg.push_back({Method::Bootstrap, Criterion::AIC});
    avg.push_back({Method::Bootstrap, Criterion::BIC});
    print_table(out, summary, sel, "Model selection");
    print_table(out, summary, avg, "Model averaging (weights and bootstrap)");
}

void write_selection_curve_csv(std::ostream& out, const std::string& experiment,
                               std::span<const SelectionCurvePoint> points)
{
    out << kCurveCsvHeader << '\n';
    out << "experiment,criterion,size,probability,reps\n";
    for (const auto& p : points)
        out << experiment << ',' << to_string(p.criterion) << ',' << format_double(p.size) << ','
            << format_double(p.probability) << ',' << p.reps << '\n';
}

}  // namespace dosemav

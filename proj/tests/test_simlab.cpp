#include "dosemav/simlab.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dosemav;

namespace {

Scenario scenario(const std::string& design, ModelTag truth, std::vector<ModelKind> candidates,
                  std::size_t total, std::size_t n_sim, std::size_t boot_reps)
{
    Scenario s;
    s.index = 3;
    s.design_name = design;
    s.doses = study_design(design);
    s.total = total;
    s.truth = study_truth(truth);
    s.candidates = std::move(candidates);
    s.n_sim = n_sim;
    s.boot_reps = boot_reps;
    s.seed = 99;
    return s;
}

std::vector<ModelKind> four()
{
    return {ModelKind(ModelTag::Linear), ModelKind(ModelTag::Quadratic), ModelKind(ModelTag::Emax),
            ModelKind(ModelTag::SigEmax)};
}

EstimateRecord rec(std::vector<double> curve, std::optional<double> td)
{
    return {std::move(curve), td};
}

}  // namespace

TEST_SUITE("simlab") {

TEST_CASE("allocation examples")
{
    CHECK(allocate(150, 5) == std::vector<std::size_t>{30, 30, 30, 30, 30});
    CHECK(allocate(150, 7) == std::vector<std::size_t>{22, 22, 22, 21, 21, 21, 21});
    CHECK(allocate(250, 4) == std::vector<std::size_t>{63, 63, 62, 62});
    CHECK(allocate(3, 3) == std::vector<std::size_t>{1, 1, 1});
    CHECK_THROWS_AS(allocate(2, 3), std::invalid_argument);
    CHECK_THROWS_AS(allocate(5, 0), std::invalid_argument);
}

TEST_CASE("allocation is balanced and complete")
{
    for (std::size_t k = 1; k <= 12; ++k)
        for (std::size_t n = k; n <= 400; n += 7) {
            const auto a = allocate(n, k);
            CHECK(std::accumulate(a.begin(), a.end(), std::size_t{0}) == n);
            const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
            CHECK(*hi - *lo <= 1);
            CHECK(std::is_sorted(a.rbegin(), a.rend()));
        }
}

TEST_CASE("study designs and true curves")
{
    CHECK(study_design("A") == std::vector<double>{0, 2, 4, 6, 8});
    CHECK(study_design("B") == std::vector<double>{0, 2, 3, 4, 5, 6, 8});
    CHECK(study_design("C").size() == 9);
    CHECK(study_design("D") == std::vector<double>{0, 2, 4, 8});
    CHECK_THROWS(study_design("E"));
    // every truth reaches the target effect inside [0, 8]
    for (ModelTag t : {ModelTag::Linear, ModelTag::Quadratic, ModelTag::Emax, ModelTag::SigEmax}) {
        const auto truth = study_truth(t);
        const auto td = truth.target(kStudyDelta, {0, 8});
        REQUIRE(td);
        CHECK(truth(*td) - truth(0) == doctest::Approx(kStudyDelta).epsilon(1e-10));
    }
    // ANOVA means 0, -1.29, -1.35 at doses 0, 1, 2: linear interpolation
    const auto anova_td = study_truth(ModelTag::Anova).target(kStudyDelta, {0, 8});
    REQUIRE(anova_td);
    CHECK(*anova_td == doctest::Approx(1.0 + 0.01 / 0.06).epsilon(1e-12));
}

TEST_CASE("hand-worked metrics on two runs and two doses")
{
    // truth curve (0, -1), td 2
    const Truth truth{{0.0, -1.0}, 2.0};
    std::vector<RunRecord> runs(2);
    // estimator: errors (0.5, 0) and (-0.5, 1); td 3 then excluded
    runs[0].estimators = {rec({0.5, -1.0}, 3.0)};
    runs[1].estimators = {rec({-0.5, 0.0}, std::nullopt)};
    // model 0: errors (1, 1), (1, 1); td 1, 4
    // model 1: errors (0, 0.5), (0, -0.5); td 2.5, 1.5
    runs[0].models = {rec({1.0, 0.0}, 1.0), rec({0.0, -0.5}, 2.5)};
    runs[1].models = {rec({1.0, 0.0}, 4.0), rec({0.0, -1.5}, 1.5)};

    const auto m = metrics(runs, truth);
    const auto& e = m.estimators[0];
    CHECK(e.mse == std::vector<double>{0.25, 0.5});
    CHECK(e.amse == 0.375);
    CHECK(e.mse_td == 1.0);
    CHECK(e.td_used == 1);
    CHECK(e.td_excluded == 1);
    CHECK(m.models[0].amse == 1.0);
    CHECK(m.models[0].mse_td == 2.5);
    CHECK(m.models[1].amse == 0.125);
    CHECK(m.models[1].mse_td == 0.25);
    CHECK(m.mmse == 0.125);
    CHECK(*m.mmse_td == 0.25);
    CHECK(*m.smse[0] == 3.0);
    CHECK(*m.smse_td[0] == 4.0);
}

TEST_CASE("an estimator equal to the best model has SMSE 1")
{
    const Truth truth{{0.0, -1.0, -1.5}, 1.0};
    std::vector<RunRecord> runs(3);
    for (int r = 0; r < 3; ++r) {
        const double s = 0.1 * (r + 1);
        runs[r].models = {rec({s, -1.0 + s, -1.5}, 1.0 + s), rec({2 * s, -1.0, -1.5 - 3 * s}, 1.0 - 2 * s)};
        runs[r].estimators = {runs[r].models[0]};
    }
    const auto m = metrics(runs, truth);
    CHECK(*m.smse[0] == 1.0);
    CHECK(*m.smse_td[0] == 1.0);
}

TEST_CASE("zero best-model error is degenerate")
{
    const Truth truth{{0.0, -1.0}, 1.0};
    std::vector<RunRecord> runs(1);
    runs[0].models = {rec({0.0, -1.0}, 1.0)};
    runs[0].estimators = {rec({0.1, -1.0}, 1.0)};
    CHECK_THROWS_AS(metrics(runs, truth), DegenerateMetricsError);
}

TEST_CASE("ASMSE is the mean of the available values")
{
    const std::vector<std::optional<double>> v{1.2, 1.6};
    CHECK(*asmse(v) == doctest::Approx(1.4).epsilon(1e-15));
    const std::vector<std::optional<double>> w{1.2, std::nullopt, 1.6};
    CHECK(*asmse(w) == doctest::Approx(1.4).epsilon(1e-15));
    const std::vector<std::optional<double>> none{std::nullopt};
    CHECK_FALSE(asmse(none));
}

TEST_CASE("study summary averages SMSE per design")
{
    const EstimatorKey k{Method::Selection, Criterion::AIC};
    std::vector<SmseRow> rows{{0, "A", k, 1.2, 2.0}, {1, "A", k, 1.6, std::nullopt}, {2, "B", k, 1.1, 1.0}};
    const auto s = summarize_study(rows);
    REQUIRE(s.designs == std::vector<std::string>{"A", "B"});
    REQUIRE(s.keys.size() == 1);
    CHECK(*s.asmse[0][0] == doctest::Approx(1.4));
    CHECK(*s.asmse[1][0] == doctest::Approx(1.1));
    CHECK(*s.asmse_td[0] == doctest::Approx(1.5));
}

TEST_CASE("noise-free data: every method recovers the true curve")
{
    auto s = scenario("C", ModelTag::Emax, four(), 150, 3, 10);
    s.noise_sd = 0.0;
    const auto r = run_scenario(s);
    for (std::size_t e = 0; e < r.keys.size(); ++e) {
        CAPTURE(e);
        for (double v : r.estimators[e].mse)
            CHECK(v < 1e-12);
    }
    CHECK(r.keys.size() == 12);
}

TEST_CASE("a single candidate makes every method coincide")
{
    auto s = scenario("A", ModelTag::Emax, {ModelKind(ModelTag::Emax)}, 150, 20, 0);
    const auto r = run_scenario(s);
    REQUIRE(r.keys.size() == 10);
    for (const auto& e : r.estimators) {
        CHECK(e.mse == r.models[0].mse);
        CHECK(e.mse_td == r.models[0].mse_td);
        CHECK(e.td_used == r.models[0].td_used);
    }
    // with zero noise the bootstrap resamples are identical as well
    s.noise_sd = 0.0;
    s.boot_reps = 5;
    s.n_sim = 2;
    std::vector<RunRecord> runs;
    for (std::size_t rep = 0; rep < 2; ++rep) {
        const auto run = simulate_run(s, rep, {}, {});
        REQUIRE(run.estimators.size() == 12);
        for (const auto& e : run.estimators) {
            CHECK(e.curve == run.models[0].curve);
            CHECK(e.td == run.models[0].td);
        }
    }
}

TEST_CASE("scenario reports are independent of the thread count")
{
    const auto s = scenario("B", ModelTag::SigEmax, four(), 150, 12, 8);
    RunOptions one, many;
    many.threads = 3;
    const auto a = run_scenario(s, one), b = run_scenario(s, many);
    REQUIRE(a.estimators.size() == b.estimators.size());
    for (std::size_t e = 0; e < a.estimators.size(); ++e) {
        CHECK(a.estimators[e].mse == b.estimators[e].mse);
        CHECK(a.estimators[e].td_used == b.estimators[e].td_used);
    }
    CHECK(a.smse == b.smse);
    CHECK(a.selection_prob == b.selection_prob);
    CHECK(a.bootstrap_freq == b.bootstrap_freq);
}

TEST_CASE("report bookkeeping")
{
    const auto s = scenario("D", ModelTag::Quadratic,
                            {ModelKind(ModelTag::Linear), ModelKind(ModelTag::Quadratic), ModelKind(ModelTag::Emax)},
                            150, 15, 6);
    const auto r = run_scenario(s);
    for (const auto& p : r.selection_prob)
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& p : r.bootstrap_freq)
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& e : r.estimators)
        CHECK(e.td_used + e.td_excluded == 15);
    for (const auto& v : r.smse) {
        REQUIRE(v);
        CHECK(*v > 0.0);
    }
    CHECK(r.bootstrap_runs == 15);
}

TEST_CASE("simulated data depend only on the stream key")
{
    const auto s = scenario("A", ModelTag::Linear, four(), 150, 1, 0);
    CHECK(simulate_data(s, 4).responses() == simulate_data(s, 4).responses());
    CHECK(simulate_data(s, 4).responses() != simulate_data(s, 5).responses());
    auto t = s;
    t.index = 4;
    CHECK(simulate_data(t, 4).responses() != simulate_data(s, 4).responses());
}

TEST_CASE("selection experiments")
{
    const auto sizes = log_spaced_sizes(150, 15000, 8);
    REQUIRE(sizes.size() == 8);
    CHECK(sizes.front() == 150);
    CHECK(sizes.back() == 15000);
    CHECK(std::is_sorted(sizes.begin(), sizes.end()));

    ConsistencyOptions c;
    c.sizes = {150, 300};
    c.reps = 0;
    CHECK(consistency_experiment(c).empty());
    c.reps = 20;
    const auto pts = consistency_experiment(c);
    CHECK(pts.size() == 10);
    for (const auto& p : pts) {
        CHECK(p.probability >= 0.0);
        CHECK(p.probability <= 1.0);
        CHECK(p.reps == 20);
    }

    // one observation per dose still runs
    VarianceScalingOptions v;
    v.group_sizes = {1, 2};
    v.reps = 10;
    CHECK(variance_scaling_experiment(v).size() == 10);
}

}  // TEST_SUITE

#include "dosemav/bootstrap.hpp"
#include "dosemav/simlab.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

using namespace dosemav;

namespace {

// Lemire's bounded draw, coded again from the raw 32-bit outputs.
std::uint32_t reference_below(RandomStream& s, std::uint32_t n)
{
    for (;;) {
        const std::uint64_t m = std::uint64_t(s()) * n;
        const auto low = std::uint32_t(m);
        if (low >= n || low >= std::uint32_t(-n) % n)
            return std::uint32_t(m >> 32);
    }
}

Dataset emax_data(std::uint64_t seed, std::size_t total = 250)
{
    std::mt19937_64 rng(seed);
    const auto doses = study_design("C");
    return testing::simulate(ModelKind(ModelTag::Emax), study_theta(ModelTag::Emax), doses,
                             allocate(total, doses.size()), kStudyNoiseSd, rng);
}

std::vector<ModelKind> candidates()
{
    return {ModelKind(ModelTag::Linear), ModelKind(ModelTag::Quadratic), ModelKind(ModelTag::Emax),
            ModelKind(ModelTag::SigEmax)};
}

}  // namespace

TEST_SUITE("bootstrap") {

TEST_CASE("resampled groups keep their sizes and draw from their own dose")
{
    const Dataset data({0, 1, 2}, {{1, 2, 3}, {10, 20}, {100, 200, 300, 400}});
    RandomStream s(StreamId{1, 0, 0, 1});
    const auto r = stratified_resample(data, s);
    CHECK(r.design().doses() == data.design().doses());
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(r.group(i).size() == data.group(i).size());
        for (double y : r.group(i))
            CHECK(std::find(data.group(i).begin(), data.group(i).end(), y) != data.group(i).end());
    }
    const Dataset same({0, 1}, {{5, 5, 5}, {2, 2}});
    CHECK(stratified_resample(same, s).responses() == same.responses());
}

TEST_CASE("resample matches a reference sampler on the same stream")
{
    std::vector<std::vector<double>> ys(4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5 + 3 * i; ++j)
            ys[i].push_back(100.0 * double(i) + double(j));  // value encodes the index
    const Dataset data({0, 1, 2, 3}, ys);
    for (std::uint32_t rep = 1; rep <= 20; ++rep) {
        RandomStream a(StreamId{77, 3, 9, rep}), b(StreamId{77, 3, 9, rep});
        const auto r = stratified_resample(data, a);
        for (std::size_t i = 0; i < 4; ++i) {
            std::map<double, int> got, want;
            for (double y : r.group(i))
                ++got[y];
            for (std::size_t j = 0; j < ys[i].size(); ++j)
                ++want[ys[i][reference_below(b, std::uint32_t(ys[i].size()))]];
            CHECK(got == want);
        }
    }
}

TEST_CASE("sufficient-statistic resample agrees with the full resample")
{
    const auto data = emax_data(40);
    RandomStream a(StreamId{5, 0, 0, 3}), b(StreamId{5, 0, 0, 3});
    const auto full = stratified_resample(data, a).stats();
    GroupStats st;
    std::vector<double> scratch;
    stratified_resample_stats(data, b, st, scratch);
    for (std::size_t i = 0; i < st.k(); ++i) {
        CHECK(st.mean[i] == doctest::Approx(full.mean[i]).epsilon(1e-14));
        CHECK(st.ss[i] == doctest::Approx(full.ss[i]).epsilon(1e-12));
        CHECK(st.n[i] == full.n[i]);
    }
}

TEST_CASE("groups of one observation cannot be resampled")
{
    const Dataset data({0, 1}, {{1.0}, {2.0, 3.0}});
    RandomStream s(StreamId{});
    CHECK_THROWS_AS(stratified_resample(data, s), PreconditionError);
    const auto c = candidates();
    CHECK_THROWS_AS(bootstrap_average(data, c, Criterion::AIC, Estimand::dose_effect(1), {}),
                    PreconditionError);
}

TEST_CASE("bit-identical results for any thread count")
{
    const auto data = emax_data(41);
    const auto c = candidates();
    const Criterion crit[] = {Criterion::AIC, Criterion::BIC};
    BootstrapOptions o;
    o.reps = 60;
    o.stream = StreamId{11, 2, 3, 0};
    o.threads = 1;
    const auto a = bootstrap_select(data, c, crit, o);
    o.threads = 4;
    const auto b = bootstrap_select(data, c, crit, o);
    CHECK(a.selected == b.selected);
    CHECK(a.fits == b.fits);
    const auto e = Estimand::target_dose(kStudyDelta, {0, 8});
    const auto ra = summarize(a, Criterion::BIC, e), rb = summarize(b, Criterion::BIC, e);
    CHECK(ra.estimates == rb.estimates);
    CHECK(ra.median == rb.median);
    o.stream.seed = 12;
    CHECK(bootstrap_select(data, c, crit, o).fits != a.fits);
}

TEST_CASE("summary invariants")
{
    const auto data = emax_data(42);
    const auto c = candidates();
    BootstrapOptions o;
    o.reps = 101;
    o.stream = StreamId{3, 0, 0, 0};
    const auto r = bootstrap_average(data, c, Criterion::AIC, Estimand::dose_effect(4.0), o);
    CHECK(r.reps_requested == 101);
    CHECK(r.reps_used == 101);
    std::size_t total = 0;
    for (auto n : r.selection_counts)
        total += n;
    CHECK(total == 101);
    REQUIRE(r.median);
    const auto [lo, hi] = std::minmax_element(r.estimates.begin(), r.estimates.end());
    CHECK(*r.median >= *lo);
    CHECK(*r.median <= *hi);
    CHECK(*r.lower <= *r.median);
    CHECK(*r.upper >= *r.median);
    auto sorted = r.estimates;
    std::sort(sorted.begin(), sorted.end());
    CHECK(*r.median == sorted[50]);
    // nearest rank: ceil(0.025 * 101) = 3, ceil(0.975 * 101) = 99
    CHECK(*r.lower == sorted[2]);
    CHECK(*r.upper == sorted[98]);
}

TEST_CASE("a single resample is its own median")
{
    const auto data = emax_data(43);
    const auto c = candidates();
    BootstrapOptions o;
    o.reps = 1;
    o.stream = StreamId{8, 0, 0, 0};
    const auto r = bootstrap_average(data, c, Criterion::BIC, Estimand::dose_effect(2.0), o);
    REQUIRE(r.reps_used == 1);
    CHECK(*r.median == r.estimates[0]);
    CHECK(*r.lower == r.estimates[0]);
    CHECK(*r.upper == r.estimates[0]);
    CHECK_THROWS_AS(bootstrap_average(data, c, Criterion::BIC, Estimand::dose_effect(2.0),
                                      BootstrapOptions{0, 0.95, 1, {}, {}, {}}),
                    std::invalid_argument);
}

TEST_CASE("noise-free data: every resample gives the plain estimate")
{
    const auto doses = study_design("A");
    std::vector<std::vector<double>> ys;
    for (double d : doses)
        ys.push_back(std::vector<double>(6, 0.3 - 0.2 * d));
    const Dataset data(doses, ys);
    const auto c = candidates();
    BootstrapOptions o;
    o.reps = 25;
    const auto r = bootstrap_average(data, c, Criterion::AIC, Estimand::dose_effect(3.0), o);
    std::vector<CriterionScore> s;
    for (const auto& m : c)
        s.push_back(score(Criterion::AIC, fit(m, data), data));
    const auto chosen = select_index(s);
    CHECK(r.selection_counts[chosen] == 25);
    const double plain = fit(c[chosen], data).predict(3.0);
    for (double e : r.estimates)
        CHECK(e == plain);
    CHECK(*r.median == plain);
}

TEST_CASE("target doses outside the range are excluded")
{
    const auto data = emax_data(44);
    const auto c = candidates();
    BootstrapOptions o;
    o.reps = 50;
    // an effect larger than any fitted curve reaches
    const auto r = bootstrap_average(data, c, Criterion::AIC, Estimand::target_dose(-50.0, {0, 8}), o);
    CHECK(r.empty());
    CHECK(r.mostly_excluded());
    CHECK_FALSE(r.median);
    const auto ok = bootstrap_average(data, c, Criterion::AIC, Estimand::target_dose(-0.5, {0, 8}), o);
    CHECK_FALSE(ok.mostly_excluded());
    for (double v : ok.estimates) {
        CHECK(v >= 0.0);
        CHECK(v <= 8.0);
    }
}

TEST_CASE("selection pattern on Emax data: AIC favours Emax/SigEmax, BIC Linear/Emax")
{
    const auto c = candidates();
    const Criterion crit[] = {Criterion::AIC, Criterion::BIC};
    Scenario s;
    s.design_name = "C";
    s.doses = study_design("C");
    s.total = 250;
    s.truth = study_truth(ModelTag::Emax);
    s.candidates = c;
    s.seed = 1;
    std::vector<std::size_t> aic(4, 0), bic(4, 0);
    for (std::uint32_t rep = 0; rep < 20; ++rep) {
        BootstrapOptions o;
        o.reps = 200;
        o.stream = StreamId{1, 0, rep, 0};
        const auto e = bootstrap_select(simulate_data(s, rep), c, crit, o);
        const auto a = e.selection_counts(0), b = e.selection_counts(1);
        for (int m = 0; m < 4; ++m) {
            aic[m] += a[m];
            bic[m] += b[m];
        }
    }
    // candidates: linear, quadratic, emax, sigemax
    CHECK(aic[2] + aic[3] > aic[0] + aic[1]);
    CHECK(bic[0] + bic[2] > bic[1] + bic[3]);
    CHECK(std::max_element(aic.begin(), aic.end()) - aic.begin() == 2);
    CHECK(aic[3] > bic[3]);
    CHECK(bic[0] > aic[0]);
}

TEST_CASE("median and nearest-rank quantiles")
{
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK_THROWS(median({}));
    std::vector<double> v;
    for (int i = 1; i <= 400; ++i)
        v.push_back(i);
    CHECK(nearest_rank(v, 0.025) == 10.0);
    CHECK(nearest_rank(v, 0.975) == 390.0);
    CHECK(nearest_rank(v, 1.0) == 400.0);
    CHECK(nearest_rank(v, 1e-9) == 1.0);
}

}  // TEST_SUITE

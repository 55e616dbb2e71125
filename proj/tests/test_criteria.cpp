#include "dosemav/criteria.hpp"
#include "dosemav/simlab.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dosemav;

namespace {

std::vector<CriterionScore> column(Criterion c, std::vector<double> values)
{
    const std::vector<ModelKind> models{ModelKind(ModelTag::Linear), ModelKind(ModelTag::Quadratic),
                                        ModelKind(ModelTag::Emax), ModelKind(ModelTag::SigEmax),
                                        ModelKind::anova({0, 12.5, 25, 50, 100})};
    std::vector<CriterionScore> out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out.push_back({models[i], c, values[i], 0.0, models[i].param_dim()});
    return out;
}

Dataset duplicate(const Dataset& d)
{
    auto ys = d.responses();
    for (auto& g : ys) {
        const auto copy = g;
        g.insert(g.end(), copy.begin(), copy.end());
    }
    return Dataset(d.design().doses(), ys);
}

}  // namespace

TEST_SUITE("criteria") {

TEST_CASE("penalty examples")
{
    CHECK(penalty(Criterion::AIC, 3, 150) == 3.0);
    CHECK(penalty(Criterion::AICc, 3, 150) == doctest::Approx(450.0 / 146.0).epsilon(1e-15));
    CHECK(penalty(Criterion::AICc, 3, 150) == doctest::Approx(3.0822).epsilon(1e-4));
    CHECK(penalty(Criterion::BIC, 3, 150) == doctest::Approx(1.5 * std::log(150.0)).epsilon(1e-15));
    CHECK(penalty(Criterion::BIC, 3, 150) == doctest::Approx(7.5160).epsilon(1e-4));
    CHECK(penalty(Criterion::BIC2, 3, 150) == doctest::Approx(4.7592).epsilon(1e-4));
    CHECK_THROWS_AS(penalty(Criterion::AICc, 3, 4), DomainError);
    CHECK_THROWS_AS(penalty(Criterion::TIC, 3, 150), std::invalid_argument);
}

TEST_CASE("penalties grow with the dimension")
{
    for (Criterion c : {Criterion::AIC, Criterion::AICc, Criterion::BIC, Criterion::BIC2})
        for (std::size_t d = 1; d < 8; ++d)
            CHECK(penalty(c, d + 1, 150) > penalty(c, d, 150));
}

TEST_CASE("parameter count excludes the variance unless asked")
{
    const Dataset data({0, 1, 2}, {{0.1, 0.3}, {1.1, 0.8}, {2.2, 1.9}});
    const auto f = fit(ModelKind(ModelTag::Emax), data);
    CHECK(parameter_count(f) == 3);
    CriterionOptions o;
    o.count_variance = true;
    CHECK(parameter_count(f, o) == 4);
    const auto s = score(Criterion::AIC, f, data, o);
    CHECK(s.value == doctest::Approx(2 * f.log_lik - 8).epsilon(1e-15));
}

TEST_CASE("score is 2 logL minus twice the penalty")
{
    std::mt19937_64 rng(30);
    const auto doses = study_design("A");
    const auto data = testing::simulate(ModelKind(ModelTag::Emax), {0, -1.81, 0.79}, doses, allocate(150, 5), 2.1, rng);
    const auto f = fit(ModelKind(ModelTag::Quadratic), data);
    for (Criterion c : kAllCriteria) {
        const auto s = score(c, f, data);
        CHECK(s.value == doctest::Approx(2 * f.log_lik - 2 * s.penalty).epsilon(1e-14));
        CHECK(s.dim == 3);
    }
}

TEST_CASE("linear model: J is the scaled design moment matrix")
{
    std::mt19937_64 rng(31);
    const std::vector<double> doses{0, 1, 2, 4, 8};
    const std::vector<std::size_t> n{3, 4, 5, 6, 7};
    const auto data = testing::simulate(ModelKind(ModelTag::Linear), {0.5, 0.2}, doses, n, 1.0, rng);
    const auto f = fit(ModelKind(ModelTag::Linear), data);
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < doses.size(); ++i) {
        Eigen::Vector2d x(1.0, doses[i]);
        m += double(n[i]) * x * x.transpose();
    }
    m /= f.sigma2 * 25.0;
    const auto raw = tic_matrices(f, data);
    const auto suff = tic_matrices(f, data.stats());
    CHECK((raw.j - m).norm() < 1e-12 * m.norm());
    CHECK((suff.j - m).norm() < 1e-12 * m.norm());
}

TEST_CASE("sufficient-statistic TIC equals the observation-level sum")
{
    std::mt19937_64 rng(32);
    const auto doses = study_design("C");
    for (ModelTag t : {ModelTag::Linear, ModelTag::Quadratic, ModelTag::Emax, ModelTag::SigEmax}) {
        CAPTURE(to_string(t));
        const auto data = testing::simulate(ModelKind(ModelTag::SigEmax), {0, -1.7, 4, 5}, doses, allocate(250, doses.size()), 2.1, rng);
        const auto f = fit(ModelKind(t), data);
        const auto a = tic_matrices(f, data), b = tic_matrices(f, data.stats());
        CHECK((a.k - b.k).norm() <= 1e-10 * a.k.norm());
        CHECK((a.j - b.j).norm() <= 1e-10 * a.j.norm());
        CHECK(tic_trace(a) == doctest::Approx(tic_trace(b)).epsilon(1e-10));
    }
}

TEST_CASE("duplicated data leave the TIC trace unchanged")
{
    std::mt19937_64 rng(33);
    const auto doses = study_design("B");
    const auto data = testing::simulate(ModelKind(ModelTag::Emax), {0, -1.81, 0.79}, doses, allocate(150, doses.size()), 2.1, rng);
    const auto twice = duplicate(data);
    const auto f = fit(ModelKind(ModelTag::Emax), data);
    // same parameters on the doubled data: sigma2 = RSS/N is unchanged
    const double t1 = tic_trace(tic_matrices(f, data));
    const double t2 = tic_trace(tic_matrices(f, twice));
    CHECK(std::abs(t1 - t2) < 1e-10);
    CHECK(std::abs(penalty(Criterion::TIC, f, twice.stats()) - t1) < 1e-10);
}

TEST_CASE("TIC penalty is close to d when the model is true")
{
    std::mt19937_64 rng(34);
    const auto doses = study_design("C");
    const auto sizes = allocate(2800, doses.size());
    for (auto [tag, theta] : {std::pair{ModelTag::Linear, ParamVector{0.2, -0.2}},
                              std::pair{ModelTag::Emax, ParamVector{0, -1.81, 0.79}}}) {
        double sum = 0;
        const int reps = 200;
        for (int r = 0; r < reps; ++r) {
            const auto data = testing::simulate(ModelKind(tag), theta, doses, sizes, 2.1, rng);
            sum += penalty(Criterion::TIC, fit(ModelKind(tag), data), data);
        }
        CHECK(std::abs(sum / reps - double(theta.size())) < 0.5);
    }
}

TEST_CASE("singular J is reported with its condition")
{
    TicMatrices m{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Zero(2, 2)};
    m.j(0, 0) = 1.0;
    try {
        tic_trace(m);
        FAIL("expected SingularMatrixError");
    } catch (const SingularMatrixError& e) {
        CHECK(std::isinf(e.condition()));
    }
}

TEST_CASE("selection on published criterion values")
{
    const auto aic = column(Criterion::AIC, {52.17, 53.50, 53.84, 51.85, 50.14});
    CHECK(select(aic).tag() == ModelTag::Emax);
    const auto bic = column(Criterion::BIC, {41.48, 39.24, 39.58, 34.03, 28.75});
    CHECK(select(bic).tag() == ModelTag::Linear);
}

TEST_CASE("ties go to fewer parameters, then list order")
{
    auto s = column(Criterion::AIC, {5.0, 7.0, 7.0, 7.0});
    CHECK(select_index(s) == 1);  // quadratic and emax both d=3: earlier wins
    s = column(Criterion::AIC, {7.0, 7.0});
    CHECK(select(s).tag() == ModelTag::Linear);
    std::swap(s[0], s[1]);
    CHECK(select(s).tag() == ModelTag::Linear);
    CHECK_THROWS(select_index(std::span<const CriterionScore>{}));
    s[1].criterion = Criterion::BIC;
    CHECK_THROWS(select_index(s));
}

TEST_CASE("a common shift of the log-likelihoods keeps the choice")
{
    auto s = column(Criterion::BIC, {41.48, 39.24, 39.58, 34.03, 28.75});
    const auto before = select_index(s);
    for (auto& x : s)
        x.value += 2 * 1234.5;
    CHECK(select_index(s) == before);
}

TEST_CASE("criterion names")
{
    for (Criterion c : kAllCriteria)
        CHECK(parse_criterion(to_string(c)) == c);
    CHECK(parse_criterion("aicc") == Criterion::AICc);
    CHECK_FALSE(parse_criterion("dic"));
}

}  // TEST_SUITE

#include "dosemav/mle_fit.hpp"
#include "dosemav/simlab.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

using namespace dosemav;

namespace {

// Profiled grid starts, built independently of the fitter.
std::vector<ParamVector> grid_starts(const GroupStats& st, bool sigmoid)
{
    const double dmax = st.doses.back();
    auto log_grid = [](double lo, double hi, int n) {
        std::vector<double> g;
        for (int i = 0; i < n; ++i)
            g.push_back(n == 1 ? std::sqrt(lo * hi) : lo * std::pow(hi / lo, double(i) / (n - 1)));
        return g;
    };
    std::vector<ParamVector> starts;
    for (double e : log_grid(0.001 * dmax, 1.5 * dmax, 7)) {
        for (double h : sigmoid ? log_grid(0.5, 10, 5) : std::vector<double>{1.0}) {
            double sw = 0, sws = 0, swss = 0, swy = 0, swsy = 0;
            for (std::size_t i = 0; i < st.k(); ++i) {
                const double d = st.doses[i];
                const double s = d > 0 ? 1.0 / (1.0 + std::pow(e / d, h)) : 0.0;
                const double w = double(st.n[i]);
                sw += w;
                sws += w * s;
                swss += w * s * s;
                swy += w * st.mean[i];
                swsy += w * s * st.mean[i];
            }
            const double b = (sw * swsy - sws * swy) / (sw * swss - sws * sws);
            const double a = (swy - b * sws) / sw;
            starts.push_back(sigmoid ? ParamVector{a, b, std::pow(e, h), h} : ParamVector{a, b, e});
        }
    }
    return starts;
}

}  // namespace

TEST_SUITE("mle_fit") {

TEST_CASE("ANOVA fit equals the group means and within-group RSS")
{
    std::mt19937_64 rng(1);
    const std::vector<double> doses{0, 1, 3, 7};
    const auto data =
        testing::simulate(ModelKind(ModelTag::Linear), {1, 0.2}, doses, {5, 6, 7, 8}, 1.3, rng);
    const auto f = fit(ModelKind::anova(doses), data);
    for (std::size_t i = 0; i < doses.size(); ++i) {
        double m = 0;
        for (double y : data.group(i))
            m += y;
        m /= double(data.group(i).size());
        CHECK(f.theta[i] == doctest::Approx(m).epsilon(1e-15));
    }
    double ssw = 0;
    for (std::size_t i = 0; i < doses.size(); ++i)
        for (double y : data.group(i))
            ssw += (y - f.theta[i]) * (y - f.theta[i]);
    CHECK(f.rss == doctest::Approx(ssw).epsilon(1e-13));
    CHECK(f.sigma2 == doctest::Approx(ssw / 26).epsilon(1e-13));
    CHECK(f.log_lik == doctest::Approx(-13 * (std::log(2 * std::numbers::pi * ssw / 26) + 1)).epsilon(1e-13));
}

TEST_CASE("linear and quadratic fits match ordinary least squares on the observations")
{
    std::mt19937_64 rng(2);
    const std::vector<double> doses{0, 2, 4, 6, 8};
    const auto data =
        testing::simulate(ModelKind(ModelTag::Quadratic), {0, -0.5, 0.04}, doses, {9, 10, 11, 9, 12}, 1.0, rng);
    // normal equations on raw observations
    for (int p : {2, 3}) {
        Eigen::MatrixXd x(51, p);
        Eigen::VectorXd y(51);
        int r = 0;
        for (std::size_t i = 0; i < doses.size(); ++i)
            for (double v : data.group(i)) {
                x(r, 0) = 1;
                x(r, 1) = doses[i];
                if (p == 3)
                    x(r, 2) = doses[i] * doses[i];
                y(r++) = v;
            }
        const Eigen::VectorXd beta = x.householderQr().solve(y);
        const auto f = fit(ModelKind(p == 2 ? ModelTag::Linear : ModelTag::Quadratic), data);
        for (int j = 0; j < p; ++j)
            CHECK(f.theta[j] == doctest::Approx(beta(j)).epsilon(1e-10));
        CHECK(f.rss == doctest::Approx((x * beta - y).squaredNorm()).epsilon(1e-10));
    }
}

TEST_CASE("log-likelihood examples")
{
    const Dataset one({2.0}, {{1.5}});
    CHECK(log_likelihood(ModelKind(ModelTag::Linear), one, ParamVector{0.5, 0.5}, 1.0) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-15));

    const Dataset flat({0.0, 1.0}, {{2, 2, 2}, {3, 3}});
    CHECK(log_likelihood(ModelKind(ModelTag::Linear), flat, ParamVector{2, 1}, 0.7) ==
          doctest::Approx(-2.5 * std::log(2 * std::numbers::pi * 0.7)).epsilon(1e-14));

    CHECK_THROWS_AS(log_likelihood(ModelKind(ModelTag::Linear), flat, ParamVector{2, 1}, 0.0), DomainError);

    std::mt19937_64 rng(4);
    const auto data = testing::simulate(ModelKind(ModelTag::Emax), {0.1, -1.2, 1.5}, {0, 1, 4}, {3, 2, 4}, 0.8, rng);
    const ParamVector th{0.2, -1.0, 2.0};
    double naive = 0;
    const auto& d = data.design().doses();
    for (std::size_t i = 0; i < d.size(); ++i)
        for (double y : data.group(i)) {
            const double mu = 0.2 - 1.0 * d[i] / (2.0 + d[i]);
            naive += std::log(std::exp(-0.5 * (y - mu) * (y - mu) / 0.64) / std::sqrt(2 * std::numbers::pi * 0.64));
        }
    CHECK(log_likelihood(ModelKind(ModelTag::Emax), data, th, 0.64) == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("noise-free Emax data on design C is recovered")
{
    const ModelKind emax(ModelTag::Emax);
    const ParamVector truth{0, -1.81, 0.79};
    const auto doses = study_design("C");
    std::vector<std::vector<double>> ys;
    for (double d : doses)
        ys.push_back(std::vector<double>(10, eval(emax, truth, d)));
    const auto f = fit(emax, Dataset(doses, ys));
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(f.theta[j] - truth[j]) < 1e-6);
    CHECK(f.sigma2 < 1e-10);
    CHECK(std::isfinite(f.log_lik));

    const ModelKind sig(ModelTag::SigEmax);
    const ParamVector st{0, -1.7, 4, 5};
    ys.clear();
    for (double d : doses)
        ys.push_back(std::vector<double>(10, eval(sig, st, d)));
    const auto fs = fit(sig, Dataset(doses, ys));
    for (double d : doses)
        CHECK(std::abs(fs.predict(d) - eval(sig, st, d)) < 1e-6);
}

TEST_CASE("nested fits: SigEmax never fits worse than Emax")
{
    std::mt19937_64 rng(20);
    const auto doses = study_design("C");
    const std::vector<std::size_t> sizes(doses.size(), 12);
    int worse = 0;
    for (int t = 0; t < 200; ++t) {
        const double sd = 0.3 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        const auto data = testing::simulate(ModelKind(ModelTag::Emax), {0, -1.81, 0.79}, doses, sizes, sd, rng);
        const auto st = data.stats();
        const auto fe = fit(ModelKind(ModelTag::Emax), st);
        const auto fs = fit(ModelKind(ModelTag::SigEmax), st);
        if (fs.log_lik < fe.log_lik - 1e-6)
            ++worse;
    }
    CHECK(worse == 0);
}

TEST_CASE("multi-start dominance and refit idempotence")
{
    std::mt19937_64 rng(21);
    const auto doses = study_design("B");
    const auto sizes = allocate(150, doses.size());
    for (int t = 0; t < 50; ++t) {
        const bool sigmoid = t % 2 == 0;
        const ModelKind m(sigmoid ? ModelTag::SigEmax : ModelTag::Emax);
        const auto data = testing::simulate(ModelKind(ModelTag::SigEmax), {0, -1.7, 4, 5}, doses, sizes,
                                            std::sqrt(4.5), rng);
        const auto st = data.stats();
        const auto best = fit(m, st);
        CHECK(best.n_starts_used == (sigmoid ? 35u : 7u));
        for (const auto& s : grid_starts(st, sigmoid)) {
            FitOptions o;
            o.starts = {s};
            const auto local = fit(m, st, o);
            CHECK(best.log_lik >= local.log_lik - 1e-6);
        }
        FitOptions o;
        o.starts = {best.theta};
        const auto again = fit(m, st, o);
        CHECK(again.log_lik == doctest::Approx(best.log_lik).epsilon(1e-10));
        for (double d : doses)
            CHECK(again.predict(d) == doctest::Approx(best.predict(d)).epsilon(1e-6));
    }
}

TEST_CASE("scale equivariance")
{
    std::mt19937_64 rng(22);
    const auto doses = study_design("A");
    const auto data = testing::simulate(ModelKind(ModelTag::Emax), {0.5, -1.81, 0.79}, doses,
                                        {20, 20, 20, 20, 20}, 1.0, rng);
    const double c = 3.0;
    std::vector<std::vector<double>> scaled = data.responses();
    for (auto& g : scaled)
        for (double& y : g)
            y *= c;
    const Dataset big(doses, scaled);
    for (ModelKind m : {ModelKind(ModelTag::Linear), ModelKind::anova(doses), ModelKind(ModelTag::Emax)}) {
        CAPTURE(m.name());
        const bool exact = m.tag() != ModelTag::Emax;
        const double tol = exact ? 1e-12 : 1e-6;
        const auto f1 = fit(m, data), f2 = fit(m, big);
        CHECK(f2.sigma2 == doctest::Approx(c * c * f1.sigma2).epsilon(tol));
        CHECK(f2.log_lik == doctest::Approx(f1.log_lik - 100 * std::log(c)).epsilon(tol));
        const std::size_t output_params = m.tag() == ModelTag::Anova ? f1.theta.size() : 2;
        for (std::size_t j = 0; j < output_params; ++j)
            CHECK(f2.theta[j] == doctest::Approx(c * f1.theta[j]).epsilon(tol));
        if (m.tag() == ModelTag::Emax)
            CHECK(f2.theta[2] == doctest::Approx(f1.theta[2]).epsilon(1e-5));
    }
}

TEST_CASE("sufficient statistics and per-arm summaries give the same fit")
{
    std::mt19937_64 rng(23);
    const auto doses = study_design("A");
    const auto data = testing::simulate(ModelKind(ModelTag::Emax), {0, -1.81, 0.79}, doses, {8, 9, 10, 11, 12}, 1.0, rng);
    const auto st = data.stats();
    std::vector<double> sd;
    for (std::size_t i = 0; i < st.k(); ++i)
        sd.push_back(std::sqrt(st.ss[i] / double(st.n[i] - 1)));
    const auto summ = GroupStats::from_summaries(st.doses, st.n, st.mean, sd);
    for (ModelTag t : {ModelTag::Linear, ModelTag::Quadratic, ModelTag::Emax, ModelTag::SigEmax}) {
        const auto a = fit(ModelKind(t), st), b = fit(ModelKind(t), summ);
        CHECK(a.log_lik == doctest::Approx(b.log_lik).epsilon(1e-10));
    }
}

TEST_CASE("single dose level: Emax is flagged non-identifiable")
{
    const Dataset one({5.0}, {{1.0, 1.2, 0.9, 1.1}});
    const auto f = fit(ModelKind(ModelTag::Emax), one);
    CHECK_FALSE(f.identifiable);
    CHECK_FALSE(fit(ModelKind(ModelTag::Linear), one).identifiable);
    CHECK(fit(ModelKind::anova({5.0}), one).identifiable);
}

TEST_CASE("zero residual variance is floored")
{
    const Dataset exact({0, 1, 2}, {{1, 1}, {2, 2}, {3, 3}});
    const auto f = fit(ModelKind(ModelTag::Linear), exact);
    CHECK(f.sigma2 > 0.0);
    CHECK(std::isfinite(f.log_lik));
}

}  // TEST_SUITE

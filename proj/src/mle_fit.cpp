#include "dosemav/mle_fit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace dosemav {

double GroupStats::ss_within() const noexcept
{
    return std::accumulate(ss.begin(), ss.end(), 0.0);
}

GroupStats GroupStats::from_summaries(std::vector<double> doses, std::vector<std::size_t> n,
                                      std::vector<double> mean, std::vector<double> sd)
{
    const std::size_t k = doses.size();
    if (n.size() != k || mean.size() != k || sd.size() != k)
        throw std::invalid_argument("summary columns differ in length");
    Design design(doses, n);  // validates ordering and sizes
    GroupStats s;
    s.doses = std::move(doses);
    s.n = std::move(n);
    s.mean = std::move(mean);
    s.ss.resize(k);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(s.mean[i]) || !std::isfinite(sd[i]) || sd[i] < 0.0)
            throw std::invalid_argument("summary means and sds must be finite, sd >= 0");
        s.ss[i] = static_cast<double>(s.n[i] - 1) * sd[i] * sd[i];
        abs_sum += static_cast<double>(s.n[i]) * std::abs(s.mean[i]);
    }
    s.total = design.total();
    s.mean_abs = abs_sum / static_cast<double>(s.total);
    return s;
}

Dataset::Dataset(std::vector<double> doses, std::vector<std::vector<double>> responses)
    : responses_(std::move(responses))
{
    std::vector<std::size_t> sizes;
    sizes.reserve(responses_.size());
    for (const auto& g : responses_) {
        for (double y : g)
            if (!std::isfinite(y))
                throw std::invalid_argument("responses must be finite");
        sizes.push_back(g.size());
    }
    design_ = Design(std::move(doses), std::move(sizes));
}

Dataset Dataset::from_observations(std::span<const double> doses, std::span<const double> responses)
{
    if (doses.size() != responses.size())
        throw std::invalid_argument("dose and response columns differ in length");
    if (doses.empty())
        throw std::invalid_argument("no observations");
    std::map<double, std::vector<double>> groups;
    for (std::size_t i = 0; i < doses.size(); ++i)
        groups[doses[i]].push_back(responses[i]);
    std::vector<double> d;
    std::vector<std::vector<double>> r;
    for (auto& [dose, ys] : groups) {
        d.push_back(dose);
        r.push_back(std::move(ys));
    }
    return Dataset(std::move(d), std::move(r));
}

GroupStats Dataset::stats() const
{
    GroupStats s;
    const std::size_t k = design_.k();
    s.doses = design_.doses();
    s.n = design_.group_sizes();
    s.mean.resize(k);
    s.ss.resize(k);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& g = responses_[i];
        double m = 0.0;
        for (double y : g) {
            m += y;
            abs_sum += std::abs(y);
        }
        m /= static_cast<double>(g.size());
        // one refinement pass takes the mean to within an ulp or so
        double corr = 0.0;
        for (double y : g)
            corr += y - m;
        m += corr / static_cast<double>(g.size());
        double ss = 0.0;
        for (double y : g)
            ss += (y - m) * (y - m);
        s.mean[i] = m;
        s.ss[i] = ss;
    }
    s.total = design_.total();
    s.mean_abs = abs_sum / static_cast<double>(s.total);
    return s;
}

double variance_floor(const GroupStats& stats)
{
    const double scale = 1.0 + stats.mean_abs;
    return 1e-12 * scale * scale;
}

double residual_sum_of_squares(const ModelKind& model, const GroupStats& stats,
                               std::span<const double> theta)
{
    double rss = stats.ss_within();
    for (std::size_t i = 0; i < stats.k(); ++i) {
        const double r = stats.mean[i] - eval(model, theta, stats.doses[i]);
        rss += static_cast<double>(stats.n[i]) * r * r;
    }
    return rss;
}

double log_likelihood(const ModelKind& model, const Dataset& data, std::span<const double> theta,
                      double sigma2)
{
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw DomainError("log-likelihood needs a positive finite variance");
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * sigma2);
    double ll = 0.0;
    const auto& doses = data.design().doses();
    for (std::size_t i = 0; i < doses.size(); ++i) {
        const double mu = eval(model, theta, doses[i]);
        for (double y : data.group(i)) {
            const double r = y - mu;
            ll += log_norm - 0.5 * r * r / sigma2;
        }
    }
    return ll;
}

namespace {

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

void finish(FitResult& res, const GroupStats& stats)
{
    const double n = static_cast<double>(stats.total);
    res.n_obs = stats.total;
    res.sigma2 = std::max(res.rss / n, variance_floor(stats));
    res.log_lik = -0.5 * n * (std::log(2.0 * std::numbers::pi * res.sigma2) + 1.0);
}

// Models linear in theta: weighted normal equations on the group means, with
// doses scaled to [0, 1] for conditioning.
FitResult fit_linear_in_theta(const ModelKind& model, const GroupStats& stats)
{
    using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
    using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
    const std::size_t k = stats.k();
    const int p = model.tag() == ModelTag::Linear ? 2 : 3;
    const double scale = stats.max_dose() > 0.0 ? stats.max_dose() : 1.0;
    Small a = Small::Zero(p, p);
    SmallVec b = SmallVec::Zero(p);
    for (std::size_t i = 0; i < k; ++i) {
        const double w = static_cast<double>(stats.n[i]);
        const double u = stats.doses[i] / scale;
        const double row[3] = {1.0, u, u * u};
        for (int r = 0; r < p; ++r) {
            b(r) += w * row[r] * stats.mean[i];
            for (int c = 0; c < p; ++c)
                a(r, c) += w * row[r] * row[c];
        }
    }
    FitResult res;
    res.model = model;
    Eigen::FullPivLU<Small> lu(a);
    lu.setThreshold(1e-10);
    res.identifiable = lu.rank() == p;
    SmallVec beta = res.identifiable ? SmallVec(lu.solve(b))
                                     : SmallVec(Eigen::CompleteOrthogonalDecomposition<Small>(a).solve(b));
    double f = 1.0;
    res.theta.resize(p);
    for (int j = 0; j < p; ++j) {
        res.theta[j] = beta(j) / f;
        f *= scale;
    }
    res.converged = res.identifiable;
    res.n_starts_used = 1;
    double rss = stats.ss_within();
    for (std::size_t i = 0; i < k; ++i) {
        const double u = stats.doses[i] / scale;
        double eta = beta(0) + beta(1) * u;
        if (p == 3)
            eta += beta(2) * u * u;
        const double r = stats.mean[i] - eta;
        rss += static_cast<double>(stats.n[i]) * r * r;
    }
    res.rss = rss;
    finish(res, stats);
    return res;
}

FitResult fit_anova(const ModelKind& model, const GroupStats& stats)
{
    if (model.anova_doses() != stats.doses)
        throw std::invalid_argument("ANOVA model grid does not match the data's doses");
    FitResult res;
    res.model = model;
    res.theta = stats.mean;
    res.rss = stats.ss_within();
    res.converged = true;
    res.n_starts_used = 1;
    finish(res, stats);
    return res;
}

// Emax and sigmoid Emax in the (e0, emax, ED50, hill) parameterization,
// mean = e0 + emax * s(d), s = r / (1 + r), r = (d / ED50)^hill. Emax fixes hill = 1.
class HyperbolicProblem {
public:
    HyperbolicProblem(const GroupStats& stats, bool sigmoid, const FitOptions& opt)
        : stats_(stats), sigmoid_(sigmoid), opt_(opt), k_(stats.k())
    {
        w_.resize(k_);
        log_d_.resize(k_);
        s_.resize(k_);
        ds_e_.resize(k_);
        ds_h_.resize(k_);
        jcol_[0].resize(k_);
        jcol_[1].resize(k_);
        for (std::size_t i = 0; i < k_; ++i) {
            w_[i] = static_cast<double>(stats.n[i]);
            log_d_[i] = stats.doses[i] > 0.0 ? std::log(stats.doses[i])
                                             : -std::numeric_limits<double>::infinity();
        }
        ssw_ = stats.ss_within();
        const double dmax = stats.max_dose();
        lower_ = {opt.ed50_lower * dmax, opt.hill_lower};
        upper_ = {opt.ed50_upper * dmax, opt.hill_upper};
    }

    int dim() const { return sigmoid_ ? 4 : 3; }

    double clamp_param(int j, double v) const
    {
        if (j < 2)
            return v;
        return std::clamp(v, lower_[j - 2], upper_[j - 2]);
    }

    // Fills s_ (and derivatives when requested) at (ed50, hill).
    void shape(double ed50, double hill, bool derivs)
    {
        const double log_e = std::log(ed50);
        for (std::size_t i = 0; i < k_; ++i) {
            if (!std::isfinite(log_d_[i])) {
                s_[i] = ds_e_[i] = ds_h_[i] = 0.0;
                continue;
            }
            const double z = hill * (log_d_[i] - log_e);
            double s;
            if (z > 0.0) {
                const double e = std::exp(-z);
                s = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(z);
                s = e / (1.0 + e);
            }
            s_[i] = s;
            if (derivs) {
                const double v = s * (1.0 - s);
                ds_e_[i] = -hill / ed50 * v;
                ds_h_[i] = (log_d_[i] - log_e) * v;
            }
        }
    }

    double hill_of(const Vec& x) const { return sigmoid_ ? x(3) : 1.0; }

    double rss(const Vec& x)
    {
        shape(x(2), hill_of(x), false);
        double f = ssw_;
        for (std::size_t i = 0; i < k_; ++i) {
            const double r = stats_.mean[i] - x(0) - x(1) * s_[i];
            f += w_[i] * r * r;
        }
        return f;
    }

    // Least-squares (e0, emax) at fixed shape; false when the shape is
    // constant over the observed doses.
    bool profile(double ed50, double hill, Vec& x)
    {
        shape(ed50, hill, true);
        double sw = 0, sws = 0, swss = 0, swy = 0, swsy = 0;
        for (std::size_t i = 0; i < k_; ++i) {
            sw += w_[i];
            sws += w_[i] * s_[i];
            swss += w_[i] * s_[i] * s_[i];
            swy += w_[i] * stats_.mean[i];
            swsy += w_[i] * s_[i] * stats_.mean[i];
        }
        const double mean_s = sws / sw;
        const double var_s = swss / sw - mean_s * mean_s;
        x.resize(dim());
        x(2) = ed50;
        if (sigmoid_)
            x(3) = hill;
        if (!(var_s > 1e-12 * std::max(swss / sw, 1e-300))) {
            x(0) = swy / sw;
            x(1) = 0.0;
            return false;
        }
        const double det = sw * swss - sws * sws;
        x(1) = (sw * swsy - sws * swy) / det;
        x(0) = (swy - x(1) * sws) / sw;
        return true;
    }

    struct Local {
        Vec x;
        double rss;
        bool converged;
        int iterations;
    };

    // Damped Gauss-Newton on the shape parameters (log ED50, hill) with
    // (e0, emax) profiled out at every point (variable projection, Kaufman's
    // Jacobian). The box applies to ED50 and hill.
    Local optimize(Vec x)
    {
        const int q = sigmoid_ ? 2 : 1;
        const double lo[2] = {std::log(lower_[0]), lower_[1]};
        const double hi[2] = {std::log(upper_[0]), upper_[1]};
        double phi[2] = {std::log(std::clamp(x(2), lower_[0], upper_[0])),
                         sigmoid_ ? std::clamp(x(3), lower_[1], upper_[1]) : 1.0};

        Vec cur;
        double f = profiled_rss(phi, cur);
        double lambda = 1e-3;
        Local out{cur, f, false, 0};
        for (int it = 0; it < opt_.max_iterations; ++it) {
            out.iterations = it + 1;
            // s_ and its derivatives still hold the last accepted point.
            double a[2][2], g[2];
            terms(phi[0], cur, q, g, a);

            // Curvature from differences of the exact profiled gradient; the
            // Gauss-Newton matrix alone misses the residual term and zigzags.
            if (opt_.newton) {
                save_shape();
                double hm[2][2] = {{0, 0}, {0, 0}};
                for (int v = 0; v < q; ++v) {
                    double p2[2] = {phi[0], phi[1]};
                    const double h = 1e-5 * (1.0 + std::abs(phi[v]));
                    p2[v] += h;
                    Vec x2;
                    profile(std::exp(p2[0]), p2[1], x2);
                    double g2[2], a2[2][2];
                    terms(p2[0], x2, q, g2, a2);
                    for (int u = 0; u < q; ++u)
                        hm[u][v] = -(g2[u] - g[u]) / h;
                }
                restore_shape();
                if (q == 2)
                    hm[0][1] = hm[1][0] = 0.5 * (hm[0][1] + hm[1][0]);
                const bool pd = hm[0][0] > 0.0 && (q == 1 || hm[0][0] * hm[1][1] > hm[0][1] * hm[0][1]);
                if (pd)
                    for (int u = 0; u < q; ++u)
                        for (int v = 0; v < q; ++v)
                            a[u][v] = hm[u][v];
            }

            bool free[2] = {true, q > 1};
            for (int j = 0; j < q; ++j)
                if ((phi[j] <= lo[j] && g[j] < 0.0) || (phi[j] >= hi[j] && g[j] > 0.0))
                    free[j] = false;
            double max_diag = 0.0;
            for (int j = 0; j < q; ++j)
                if (free[j])
                    max_diag = std::max(max_diag, a[j][j]);
            if (!(max_diag > 0.0)) {
                out.converged = true;
                break;
            }

            bool improved = false;
            double f_new = f, trial[2] = {phi[0], phi[1]};
            Vec x_new;
            for (int attempt = 0; attempt < 80; ++attempt) {
                double d[2] = {0, 0};
                double m[2][2];
                for (int u = 0; u < 2; ++u)
                    for (int v = 0; v < 2; ++v)
                        m[u][v] = (free[u] && free[v]) ? a[u][v] : 0.0;
                for (int u = 0; u < 2; ++u)
                    m[u][u] = free[u] ? a[u][u] + lambda * std::max(a[u][u], 1e-12 * max_diag) : 1.0;
                const double gg[2] = {free[0] ? g[0] : 0.0, free[1] ? g[1] : 0.0};
                const double dm = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                d[0] = (gg[0] * m[1][1] - m[0][1] * gg[1]) / dm;
                d[1] = (m[0][0] * gg[1] - m[1][0] * gg[0]) / dm;
                for (int j = 0; j < 2; ++j)
                    trial[j] = j < q ? std::clamp(phi[j] + d[j], lo[j], hi[j]) : phi[j];
                f_new = profiled_rss(trial, x_new);
                if (std::isfinite(f_new) && f_new < f) {
                    improved = true;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    break;
                }
                lambda *= 2.0;
            }
            if (!improved) {
                // No descent step exists at working precision.
                out.converged = true;
                break;
            }
            const double decrease = f - f_new;
            const double step = std::max(std::abs(trial[0] - phi[0]), std::abs(trial[1] - phi[1]));
            phi[0] = trial[0];
            phi[1] = trial[1];
            cur = x_new;
            f = f_new;
            if (decrease <= opt_.rel_tolerance * f && step <= opt_.step_tolerance) {
                out.converged = true;
                break;
            }
            // An earlier start already converged here; this one would follow it.
            if (const Local* known = nearby_optimum(phi)) {
                out.x = known->x;
                out.rss = known->rss;
                out.converged = true;
                return out;
            }
        }
        out.x = cur;
        out.rss = f;
        if (out.converged)
            found_.push_back({phi[0], phi[1], out});
        return out;
    }

    const Local* nearby_optimum(const double* phi) const
    {
        constexpr double tol = 1e-2;
        for (const auto& o : found_)
            if (std::abs(o.log_ed50 - phi[0]) < tol && std::abs(o.hill - phi[1]) < tol)
                return &o.local;
        return nullptr;
    }

    // Kaufman gradient g = J'r (half the negative RSS gradient) and
    // Gauss-Newton matrix at the shape currently held in s_.
    void terms(double log_ed50, const Vec& x, int q, double g[2], double a[2][2])
    {
        const double ed50 = std::exp(log_ed50);
        const double e0 = x(0), emax = x(1);
        double sw = 0, sws = 0, swss = 0;
        for (std::size_t i = 0; i < k_; ++i) {
            sw += w_[i];
            sws += w_[i] * s_[i];
            swss += w_[i] * s_[i] * s_[i];
        }
        const double det = sw * swss - sws * sws;
        const bool proj_ok = det > 1e-12 * sw * std::max(swss, 1e-300);

        auto& jcol = jcol_;
        a[0][0] = a[0][1] = a[1][0] = a[1][1] = 0.0;
        g[0] = g[1] = 0.0;
        for (int c = 0; c < q; ++c) {
            double swv = 0, swsv = 0;
            for (std::size_t i = 0; i < k_; ++i) {
                const double ds = c == 0 ? ds_e_[i] * ed50 : ds_h_[i];
                jcol[c][i] = emax * ds;
                swv += w_[i] * jcol[c][i];
                swsv += w_[i] * s_[i] * jcol[c][i];
            }
            if (proj_ok) {
                const double b1 = (sw * swsv - sws * swv) / det;
                const double b0 = (swv - b1 * sws) / sw;
                for (std::size_t i = 0; i < k_; ++i)
                    jcol[c][i] -= b0 + b1 * s_[i];
            }
        }
        for (std::size_t i = 0; i < k_; ++i) {
            const double r = stats_.mean[i] - e0 - emax * s_[i];
            for (int u = 0; u < q; ++u) {
                g[u] += w_[i] * jcol[u][i] * r;
                for (int v = 0; v < q; ++v)
                    a[u][v] += w_[i] * jcol[u][i] * jcol[v][i];
            }
        }
    }

    void save_shape()
    {
        saved_s_ = s_;
        saved_e_ = ds_e_;
        saved_h_ = ds_h_;
    }
    void restore_shape()
    {
        s_.swap(saved_s_);
        ds_e_.swap(saved_e_);
        ds_h_.swap(saved_h_);
    }

    double profiled_rss(const double* phi, Vec& x)
    {
        profile(std::exp(phi[0]), phi[1], x);
        double f = ssw_;
        for (std::size_t i = 0; i < k_; ++i) {
            const double r = stats_.mean[i] - x(0) - x(1) * s_[i];
            f += w_[i] * r * r;
        }
        return f;
    }

    ParamVector tabulated(const Vec& x) const
    {
        if (!sigmoid_)
            return {x(0), x(1), x(2)};
        return {x(0), x(1), std::pow(x(2), x(3)), x(3)};
    }

    Vec internal(const ParamVector& theta) const
    {
        Vec x(dim());
        x(0) = theta.at(0);
        x(1) = theta.at(1);
        if (sigmoid_) {
            x(2) = std::pow(theta.at(2), 1.0 / theta.at(3));
            x(3) = theta.at(3);
        } else {
            x(2) = theta.at(2);
        }
        return x;
    }

    std::vector<double> ed50_grid() const { return log_grid(lower_[0], upper_[0], opt_.ed50_grid); }
    std::vector<double> hill_grid() const
    {
        return sigmoid_ ? log_grid(lower_[1], upper_[1], opt_.hill_grid) : std::vector<double>{1.0};
    }

private:
    static std::vector<double> log_grid(double lo, double hi, std::size_t n)
    {
        if (n <= 1)
            return {std::sqrt(lo * hi)};
        std::vector<double> g(n);
        const double step = std::log(hi / lo) / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i)
            g[i] = lo * std::exp(step * static_cast<double>(i));
        g.back() = hi;
        return g;
    }

    const GroupStats& stats_;
    bool sigmoid_;
    const FitOptions& opt_;
    std::size_t k_;
    std::vector<double> w_, log_d_, s_, ds_e_, ds_h_;
    std::vector<double> saved_s_, saved_e_, saved_h_;
    std::array<std::vector<double>, 2> jcol_;
    struct Found {
        double log_ed50, hill;
        Local local;
    };
    std::vector<Found> found_;
    double ssw_ = 0.0;
    std::array<double, 2> lower_{}, upper_{};
};

FitResult fit_hyperbolic(const ModelKind& model, const GroupStats& stats, const FitOptions& opt)
{
    const bool sigmoid = model.tag() == ModelTag::SigEmax;
    FitResult res;
    res.model = model;
    if (!(stats.max_dose() > 0.0)) {
        res.identifiable = false;
        res.theta = sigmoid ? ParamVector{0.0, 0.0, 1.0, 1.0} : ParamVector{0.0, 0.0, 1.0};
        res.theta[0] = stats.mean[0];
        res.rss = stats.ss_within();
        finish(res, stats);
        return res;
    }
    HyperbolicProblem problem(stats, sigmoid, opt);

    std::vector<Vec> starts;
    if (!opt.starts.empty()) {
        for (const auto& s : opt.starts) {
            check_params(model, s);
            starts.push_back(problem.internal(s));
        }
    } else {
        bool any_identified = false;
        for (double e : problem.ed50_grid()) {
            for (double h : problem.hill_grid()) {
                Vec x = Vec::Zero(problem.dim());
                if (problem.profile(e, h, x)) {
                    any_identified = true;
                    starts.push_back(x);
                }
            }
        }
        if (!any_identified) {
            // Shape is constant over the observed doses: no start can separate
            // the placebo level from the dose effect.
            Vec x = Vec::Zero(problem.dim());
            problem.profile(problem.ed50_grid().front(), problem.hill_grid().front(), x);
            res.identifiable = false;
            res.theta = problem.tabulated(x);
            res.rss = problem.rss(x);
            finish(res, stats);
            return res;
        }
    }

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < starts.size(); ++i) {
        auto local = problem.optimize(starts[i]);
        res.iterations += local.iterations;
        if (local.rss < best) {
            best = local.rss;
            res.best_start_index = i;
            res.theta = problem.tabulated(local.x);
            res.rss = local.rss;
            res.converged = local.converged;
        }
    }
    res.n_starts_used = starts.size();
    finish(res, stats);
    return res;
}

}  // namespace

FitResult fit(const ModelKind& model, const GroupStats& stats, const FitOptions& options)
{
    if (stats.k() == 0 || stats.total == 0)
        throw std::invalid_argument("no observations");
    switch (model.tag()) {
    case ModelTag::Linear:
    case ModelTag::Quadratic:
        return fit_linear_in_theta(model, stats);
    case ModelTag::Anova:
        return fit_anova(model, stats);
    case ModelTag::Emax:
    case ModelTag::SigEmax:
        return fit_hyperbolic(model, stats, options);
    }
    throw std::logic_error("unknown model");
}

FitResult fit(const ModelKind& model, const Dataset& data, const FitOptions& options)
{
    return fit(model, data.stats(), options);
}

}  // namespace dosemav

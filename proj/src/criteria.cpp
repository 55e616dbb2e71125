#include "dosemav/criteria.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

namespace dosemav {

std::string_view to_string(Criterion c)
{
    switch (c) {
    case Criterion::AIC: return "AIC";
    case Criterion::AICc: return "AICc";
    case Criterion::BIC: return "BIC";
    case Criterion::BIC2: return "BIC2";
    case Criterion::TIC: return "TIC";
    }
    return "?";
}

std::optional<Criterion> parse_criterion(std::string_view name)
{
    std::string s;
    for (char c : name)
        s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "aic") return Criterion::AIC;
    if (s == "aicc") return Criterion::AICc;
    if (s == "bic") return Criterion::BIC;
    if (s == "bic2") return Criterion::BIC2;
    if (s == "tic") return Criterion::TIC;
    return std::nullopt;
}

std::size_t parameter_count(const FitResult& fit, const CriterionOptions& options)
{
    return fit.model.param_dim() + (options.count_variance ? 1 : 0);
}

double penalty(Criterion criterion, std::size_t dim, std::size_t n_obs)
{
    const double d = static_cast<double>(dim);
    const double n = static_cast<double>(n_obs);
    switch (criterion) {
    case Criterion::AIC:
        return d;
    case Criterion::AICc:
        if (n_obs <= dim + 1)
            throw DomainError("AICc needs N > d + 1 (N=" + std::to_string(n_obs) +
                              ", d=" + std::to_string(dim) + ")");
        return n * d / (n - d - 1.0);
    case Criterion::BIC:
        return 0.5 * std::log(n) * d;
    case Criterion::BIC2:
        return 0.5 * (std::log(n) * d - std::log(2.0 * std::numbers::pi) * d);
    case Criterion::TIC:
        break;
    }
    throw std::invalid_argument("TIC penalty needs the fitted model and data");
}

double penalty(Criterion criterion, const FitResult& fit, const GroupStats& stats,
               const CriterionOptions& options)
{
    if (criterion != Criterion::TIC)
        return penalty(criterion, parameter_count(fit, options), stats.total);
    if (options.tic_joint)
        throw std::invalid_argument("joint-parameter TIC needs observation-level data");
    return tic_trace(tic_matrices(fit, stats));
}

double penalty(Criterion criterion, const FitResult& fit, const Dataset& data,
               const CriterionOptions& options)
{
    if (criterion != Criterion::TIC)
        return penalty(criterion, parameter_count(fit, options), data.design().total());
    return tic_trace(tic_matrices(fit, data, options.tic_joint));
}

namespace {

CriterionScore make_score(Criterion criterion, const FitResult& fit, double pen,
                          const CriterionOptions& options)
{
    CriterionScore s;
    s.model = fit.model;
    s.criterion = criterion;
    s.penalty = pen;
    s.dim = parameter_count(fit, options);
    s.value = 2.0 * fit.log_lik - 2.0 * pen;
    return s;
}

Eigen::VectorXd to_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix(const std::vector<double>& v, std::size_t p)
{
    const auto n = static_cast<Eigen::Index>(p);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        v.data(), n, n);
}

}  // namespace

CriterionScore score(Criterion criterion, const FitResult& fit, const GroupStats& stats,
                     const CriterionOptions& options)
{
    return make_score(criterion, fit, penalty(criterion, fit, stats, options), options);
}

CriterionScore score(Criterion criterion, const FitResult& fit, const Dataset& data,
                     const CriterionOptions& options)
{
    return make_score(criterion, fit, penalty(criterion, fit, data, options), options);
}

TicMatrices tic_matrices(const FitResult& fit, const GroupStats& stats)
{
    const std::size_t p = fit.model.param_dim();
    const double s2 = fit.sigma2;
    TicMatrices m{Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, p)};
    for (std::size_t i = 0; i < stats.k(); ++i) {
        const double d = stats.doses[i];
        const double n = static_cast<double>(stats.n[i]);
        const double mean_resid = stats.mean[i] - fit.predict(d);
        // sum over the group of squared residuals about the fitted mean
        const double sq_resid = stats.ss[i] + n * mean_resid * mean_resid;
        const Eigen::VectorXd g = to_vector(gradient(fit.model, fit.theta, d));
        const Eigen::MatrixXd outer = g * g.transpose();
        m.k += (sq_resid / (s2 * s2)) * outer;
        m.j += (n / s2) * outer;
        if (fit.model.tag() == ModelTag::Emax || fit.model.tag() == ModelTag::SigEmax)
            m.j -= (n * mean_resid / s2) * to_matrix(hessian(fit.model, fit.theta, d), p);
    }
    const double inv_n = 1.0 / static_cast<double>(stats.total);
    m.k *= inv_n;
    m.j *= inv_n;
    return m;
}

TicMatrices tic_matrices(const FitResult& fit, const Dataset& data, bool joint)
{
    const std::size_t p = fit.model.param_dim();
    const std::size_t q = joint ? p + 1 : p;
    const double s2 = fit.sigma2;
    TicMatrices m{Eigen::MatrixXd::Zero(q, q), Eigen::MatrixXd::Zero(q, q)};
    const auto& doses = data.design().doses();
    for (std::size_t i = 0; i < doses.size(); ++i) {
        const double mu = fit.predict(doses[i]);
        const Eigen::VectorXd g = to_vector(gradient(fit.model, fit.theta, doses[i]));
        const Eigen::MatrixXd h = to_matrix(hessian(fit.model, fit.theta, doses[i]), p);
        for (double y : data.group(i)) {
            const double r = y - mu;
            Eigen::VectorXd score(q);
            score.head(p) = (r / s2) * g;
            Eigen::MatrixXd hess(q, q);
            hess.topLeftCorner(p, p) = (-g * g.transpose() + r * h) / s2;
            if (joint) {
                score(p) = -0.5 / s2 + 0.5 * r * r / (s2 * s2);
                hess.block(0, p, p, 1) = -(r / (s2 * s2)) * g;
                hess.block(p, 0, 1, p) = hess.block(0, p, p, 1).transpose();
                hess(p, p) = 0.5 / (s2 * s2) - r * r / (s2 * s2 * s2);
            }
            m.k += score * score.transpose();
            m.j -= hess;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(data.design().total());
    m.k *= inv_n;
    m.j *= inv_n;
    return m;
}

double tic_trace(const TicMatrices& m)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.j);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
    const double condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(smax > 0.0) || !(condition < 1e12))
        throw SingularMatrixError("TIC: J matrix is singular (condition " +
                                      std::to_string(condition) + ")",
                                  condition);
    const double tr = m.j.fullPivLu().solve(m.k).trace();
    if (!std::isfinite(tr))
        throw SingularMatrixError("TIC: non-finite trace", condition);
    return tr;
}

std::size_t select_index(std::span<const CriterionScore> scores)
{
    if (scores.empty())
        throw std::invalid_argument("model selection needs at least one score");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i].criterion != scores[0].criterion)
            throw std::invalid_argument("model selection across different criteria");
        const auto& a = scores[i];
        const auto& b = scores[best];
        if (a.value > b.value || (a.value == b.value && a.dim < b.dim))
            best = i;
    }
    return best;
}

ModelKind select(std::span<const CriterionScore> scores)
{
    return scores[select_index(scores)].model;
}

}  // namespace dosemav

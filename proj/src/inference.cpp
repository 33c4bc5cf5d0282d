#include "raresight/inference.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "raresight/error.hpp"
#include "raresight/kernels.hpp"

namespace raresight {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<GlmFit> refit_selected(const std::vector<AnalysisMatrix>& designs, const std::vector<std::string>& retained,
                                   LinkKind link, const IrlsOptions& options, std::vector<std::string>* warnings)
{
    if (retained.empty() && warnings) warnings->push_back("empty retained set: fitting intercept-only models");
    std::vector<GlmFit> fits(designs.size());
    std::vector<std::exception_ptr> errors(designs.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
    for (std::size_t m = 0; m < designs.size(); ++m) {
        try {
            fits[m] = irls_fit(designs[m].select(retained), link, options);
        } catch (...) {
            errors[m] = std::current_exception();
        }
    }
    for (std::size_t m = 0; m < designs.size(); ++m) {
        if (!errors[m]) continue;
        const std::string where = "imputation " + std::to_string(m + 1) + ": ";
        try {
            std::rethrow_exception(errors[m]);
        } catch (const SeparationSuspected& e) {
            throw SeparationSuspected(where + e.what(), e.last_estimate(), e.trace());
        } catch (const NonConvergence& e) {
            throw NonConvergence(where + e.what(), e.last_estimate(), e.trace());
        } catch (const RankDeficient& e) {
            throw RankDeficient(where + e.what(), "refit");
        } catch (const DegenerateOutcome& e) {
            throw DegenerateOutcome(where + e.what(), "refit");
        }
    }
    return fits;
}

PooledFit rubin_pool(const Eigen::Ref<const MatrixXd>& est, const Eigen::Ref<const MatrixXd>& var,
                     std::vector<std::string> terms, const PoolOptions& options, double complete_df)
{
    const Index M = est.rows();
    const Index p = est.cols();
    if (M < 2) throw InvalidArgument("Rubin pooling needs at least two imputations");
    if (var.rows() != M || var.cols() != p || static_cast<Index>(terms.size()) != p)
        throw InvalidArgument("Rubin pooling: shape mismatch");

    PooledFit out;
    out.terms = std::move(terms);
    out.M = static_cast<int>(M);
    out.qbar.resize(p);
    out.W.resize(p);
    out.B.resize(p);
    // Plain per-term loops in imputation order, so pooled values do not depend
    // on where a term sits in the matrix. Running means reproduce a repeated
    // value exactly, which a sum divided by M does not.
    for (Index j = 0; j < p; ++j) {
        double q = 0.0, w = 0.0;
        for (Index m = 0; m < M; ++m) {
            const double step = 1.0 / static_cast<double>(m + 1);
            q += (est(m, j) - q) * step;
            w += (var(m, j) - w) * step;
        }
        out.qbar[j] = q;
        out.W[j] = w;
        const double spread = est.col(j).maxCoeff() - est.col(j).minCoeff();
        double ss = 0.0;
        for (Index m = 0; m < M; ++m) ss += (est(m, j) - out.qbar[j]) * (est(m, j) - out.qbar[j]);
        out.B[j] = spread == 0.0 ? 0.0 : ss / static_cast<double>(M - 1);
    }
    const double inflate = 1.0 + 1.0 / static_cast<double>(M);
    out.T = out.W + inflate * out.B;
    out.se = out.T.cwiseSqrt();
    out.z = out.qbar.cwiseQuotient(out.se);
    out.df = VectorXd::Constant(p, std::numeric_limits<double>::infinity());
    if (options.barnard_rubin) {
        for (Index j = 0; j < p; ++j) {
            const double frac = out.T[j] > 0.0 ? inflate * out.B[j] / out.T[j] : 0.0;
            const double nu_old = frac > 0.0 ? static_cast<double>(M - 1) / (frac * frac)
                                             : std::numeric_limits<double>::infinity();
            double nu = nu_old;
            if (std::isfinite(complete_df)) {
                const double nu_obs = (complete_df + 1.0) / (complete_df + 3.0) * complete_df * (1.0 - frac);
                nu = std::isfinite(nu_old) ? nu_old * nu_obs / (nu_old + nu_obs) : nu_obs;
            }
            out.df[j] = nu;
        }
    }
    return out;
}

PooledFit rubin_pool(const std::vector<GlmFit>& fits, const PoolOptions& options, double complete_df)
{
    if (fits.size() < 2) throw InvalidArgument("Rubin pooling needs at least two fits");
    const auto& terms = fits.front().terms;
    const Index p = fits.front().n_params();
    MatrixXd est(static_cast<Index>(fits.size()), p), var(static_cast<Index>(fits.size()), p);
    for (std::size_t m = 0; m < fits.size(); ++m) {
        if (fits[m].terms != terms) throw InvalidArgument("Rubin pooling: fits have mismatched terms");
        est.row(static_cast<Index>(m)) = fits[m].beta.transpose();
        var.row(static_cast<Index>(m)) = fits[m].vcov.diagonal().transpose();
    }
    PooledFit out = rubin_pool(est, var, terms, options, complete_df);
    out.link = fits.front().link;
    return out;
}

MarginalEffects marginal_effects(const GlmFit& fit, const AnalysisMatrix& design)
{
    const Index p = design.p();
    const Index n = design.n();
    if (fit.n_params() != p + 1) throw InvalidArgument("marginal effects: fit and design sizes differ");
    for (Index j = 0; j < p; ++j)
        if (fit.terms[static_cast<std::size_t>(j + 1)] != design.terms[static_cast<std::size_t>(j)].name)
            throw InvalidArgument("term '" + design.terms[static_cast<std::size_t>(j)].name + "' absent from fit");

    const MatrixXd Z = design.with_intercept();
    const VectorXd eta = Z * fit.beta;
    const LinkKind link = fit.link;
    const double inv_n = 1.0 / static_cast<double>(n);

    MarginalEffects me;
    me.terms = design.term_names();
    me.ame.resize(p);
    MatrixXd jac = MatrixXd::Zero(p, p + 1);

    VectorXd f(n), df(n);
    for (Index i = 0; i < n; ++i) {
        f[i] = mu_eta(eta[i], link);
        df[i] = mu_eta_deriv(eta[i], link);
    }
    for (Index j = 0; j < p; ++j) {
        const double bj = fit.beta[j + 1];
        if (design.terms[static_cast<std::size_t>(j)].kind == ColumnKind::binary) {
            me.kinds.push_back(AmeKind::discrete);
            double sum = 0.0;
            VectorXd grad = VectorXd::Zero(p + 1);
            for (Index i = 0; i < n; ++i) {
                const double xij = Z(i, j + 1);
                const double eta1 = eta[i] + bj * (1.0 - xij);
                const double eta0 = eta[i] - bj * xij;
                sum += link_inverse_raw(eta1, link) - link_inverse_raw(eta0, link);
                const double f1 = mu_eta(eta1, link), f0 = mu_eta(eta0, link);
                grad += (f1 - f0) * Z.row(i).transpose();
                grad[j + 1] += -(f1 - f0) * xij + f1;
            }
            me.ame[j] = sum * inv_n;
            jac.row(j) = grad.transpose() * inv_n;
        } else {
            me.kinds.push_back(AmeKind::slope);
            me.ame[j] = bj * f.sum() * inv_n;
            VectorXd grad = bj * (Z.transpose() * df);
            grad[j + 1] += f.sum();
            jac.row(j) = grad.transpose() * inv_n;
        }
    }
    me.vcov = jac * fit.vcov * jac.transpose();
    return me;
}

AmeTable average_marginal_effects(const std::vector<GlmFit>& fits, const std::vector<AnalysisMatrix>& designs,
                                  const std::vector<std::string>& terms, const PoolOptions& options)
{
    if (fits.size() != designs.size()) throw InvalidArgument("one fit per imputed design required");
    AmeTable table;
    table.M = static_cast<int>(fits.size());
    if (fits.empty()) return table;
    table.link = fits.front().link;
    if (terms.empty()) return table;

    const auto M = static_cast<Index>(fits.size());
    const auto p = static_cast<Index>(terms.size());
    MatrixXd est(M, p), var(M, p);
    std::vector<AmeKind> kinds;
    for (Index m = 0; m < M; ++m) {
        const auto& fit = fits[static_cast<std::size_t>(m)];
        if (!fit.converged) throw InvalidArgument("marginal effects need converged fits");
        const MarginalEffects me = marginal_effects(fit, designs[static_cast<std::size_t>(m)].select(terms));
        est.row(m) = me.ame.transpose();
        var.row(m) = me.vcov.diagonal().transpose();
        kinds = me.kinds;
    }
    const double complete_df = static_cast<double>(designs.front().n() - p - 1);
    const PooledFit pooled = rubin_pool(est, var, terms, options, complete_df);
    for (Index j = 0; j < p; ++j) {
        AmeRow row;
        row.term = terms[static_cast<std::size_t>(j)];
        row.kind = kinds[static_cast<std::size_t>(j)];
        row.ame = pooled.qbar[j];
        row.se = pooled.se[j];
        double z90 = kZ90, z95 = kZ95;
        if (options.barnard_rubin && std::isfinite(pooled.df[j])) {
            boost::math::students_t dist(pooled.df[j]);
            z90 = boost::math::quantile(dist, 0.95);
            z95 = boost::math::quantile(dist, 0.975);
        }
        row.ci90_lo = row.ame - z90 * row.se;
        row.ci90_hi = row.ame + z90 * row.se;
        row.ci95_lo = row.ame - z95 * row.se;
        row.ci95_hi = row.ame + z95 * row.se;
        table.rows.push_back(row);
    }
    return table;
}

} // namespace raresight

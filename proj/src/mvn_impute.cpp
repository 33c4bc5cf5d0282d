#include "raresight/mvn_impute.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "json.hpp"

#include "raresight/csv.hpp"
#include "raresight/error.hpp"
#include "raresight/kernels.hpp"

namespace raresight {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Pattern
{
    std::vector<Index> obs;
    std::vector<Index> mis;
    std::vector<Index> rows;
};

std::vector<Pattern> group_patterns(const MatrixXd& data)
{
    std::map<std::vector<bool>, std::size_t> index;
    std::vector<Pattern> patterns;
    for (Index i = 0; i < data.rows(); ++i) {
        std::vector<bool> key(static_cast<std::size_t>(data.cols()));
        for (Index j = 0; j < data.cols(); ++j) key[static_cast<std::size_t>(j)] = !std::isnan(data(i, j));
        auto [it, inserted] = index.emplace(key, patterns.size());
        if (inserted) {
            Pattern p;
            for (Index j = 0; j < data.cols(); ++j)
                (key[static_cast<std::size_t>(j)] ? p.obs : p.mis).push_back(j);
            patterns.push_back(std::move(p));
        }
        patterns[it->second].rows.push_back(i);
    }
    return patterns;
}

// Factorization of the observed block, with a ridge when it is near-singular.
struct ObservedBlock
{
    Eigen::LDLT<MatrixXd> ldlt;
    double logdet = 0.0;
};

ObservedBlock factor_observed(const MatrixXd& cov, const std::vector<Index>& obs)
{
    MatrixXd S = cov(obs, obs);
    ObservedBlock b;
    auto good = [](const Eigen::LDLT<MatrixXd>& f) {
        if (f.info() != Eigen::Success || !f.isPositive()) return false;
        const VectorXd d = f.vectorD();
        return d.minCoeff() > 1e-12 * std::max(1.0, d.maxCoeff());
    };
    b.ldlt.compute(S);
    if (!good(b.ldlt)) {
        const double eps = 1e-6 * cov.trace() / static_cast<double>(cov.rows());
        S.diagonal().array() += eps;
        b.ldlt.compute(S);
        if (!good(b.ldlt)) throw SingularCovariance("observed-block covariance singular after ridge");
    }
    b.logdet = b.ldlt.vectorD().array().log().sum();
    return b;
}

struct Scaling
{
    VectorXd center;
    VectorXd scale;
};

Scaling observed_scaling(const MatrixXd& data)
{
    Scaling s{VectorXd::Zero(data.cols()), VectorXd::Ones(data.cols())};
    for (Index j = 0; j < data.cols(); ++j) {
        double sum = 0.0, sq = 0.0;
        int cnt = 0;
        for (Index i = 0; i < data.rows(); ++i) {
            const double v = data(i, j);
            if (std::isnan(v)) continue;
            sum += v;
            ++cnt;
        }
        if (cnt < 2) throw InvalidArgument("column " + std::to_string(j) + " has fewer than two observed values");
        const double mean = sum / cnt;
        for (Index i = 0; i < data.rows(); ++i)
            if (!std::isnan(data(i, j))) sq += (data(i, j) - mean) * (data(i, j) - mean);
        const double sd = std::sqrt(sq / cnt);
        s.center[j] = mean;
        s.scale[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

} // namespace

EmResult em_mvn(const MatrixXd& raw, const EmOptions& options)
{
    const Index n = raw.rows();
    const Index p = raw.cols();
    const Scaling scaling = observed_scaling(raw);
    MatrixXd data = raw;
    for (Index j = 0; j < p; ++j)
        data.col(j) = ((raw.col(j).array() - scaling.center[j]) / scaling.scale[j]).matrix();

    const auto patterns = group_patterns(data);
    VectorXd mu = VectorXd::Zero(p);
    MatrixXd sigma = MatrixXd::Identity(p, p);
    EmResult result;
    const double log2pi = std::log(2.0 * std::numbers::pi);

    for (int iter = 1; iter <= options.max_iter; ++iter) {
        VectorXd t1 = VectorXd::Zero(p);
        MatrixXd t2 = MatrixXd::Zero(p, p);
        double loglik = 0.0;
        for (const Pattern& pat : patterns) {
            const auto no = static_cast<Index>(pat.obs.size());
            if (pat.mis.empty()) {
                const ObservedBlock blk = factor_observed(sigma, pat.obs);
                for (Index i : pat.rows) {
                    const VectorXd x = data.row(i).transpose();
                    const VectorXd dev = x - mu;
                    loglik -= 0.5 * (no * log2pi + blk.logdet + dev.dot(blk.ldlt.solve(dev)));
                    t1 += x;
                    t2.noalias() += x * x.transpose();
                }
                continue;
            }
            MatrixXd coef; // S_mo S_oo^-1
            MatrixXd cond_cov = sigma(pat.mis, pat.mis);
            ObservedBlock blk;
            if (no > 0) {
                blk = factor_observed(sigma, pat.obs);
                const MatrixXd s_om = sigma(pat.obs, pat.mis);
                coef = blk.ldlt.solve(s_om).transpose();
                cond_cov -= coef * s_om;
            }
            for (Index i : pat.rows) {
                VectorXd x(p);
                VectorXd xm = mu(pat.mis);
                if (no > 0) {
                    const VectorXd xo = data(i, pat.obs).transpose();
                    const VectorXd dev = xo - mu(pat.obs);
                    loglik -= 0.5 * (no * log2pi + blk.logdet + dev.dot(blk.ldlt.solve(dev)));
                    xm += coef * dev;
                    x(pat.obs) = xo;
                }
                x(pat.mis) = xm;
                t1 += x;
                t2.noalias() += x * x.transpose();
            }
            t2(pat.mis, pat.mis) += static_cast<double>(pat.rows.size()) * cond_cov;
        }
        const VectorXd mu_new = t1 / static_cast<double>(n);
        MatrixXd sigma_new = t2 / static_cast<double>(n) - mu_new * mu_new.transpose();
        sigma_new = 0.5 * (sigma_new + sigma_new.transpose());

        const double delta = std::max((mu_new - mu).cwiseAbs().maxCoeff(),
                                      (sigma_new - sigma).cwiseAbs().maxCoeff());
        mu = mu_new;
        sigma = sigma_new;
        result.trace.push_back({iter, delta, loglik});
        if (delta < options.tol) {
            result.params.mean = scaling.center + scaling.scale.cwiseProduct(mu);
            result.params.cov = scaling.scale.asDiagonal() * sigma * scaling.scale.asDiagonal();
            return result;
        }
    }
    std::vector<double> last(mu.data(), mu.data() + mu.size());
    std::vector<double> deltas;
    for (const auto& it : result.trace) deltas.push_back(it.delta);
    const std::string msg = "EM did not converge in " + std::to_string(options.max_iter) +
                            " iterations (last delta " + csv::format_double(deltas.back()) + ")";
    throw NonConvergence(msg, std::move(last), std::move(deltas));
}

Eigen::MatrixXd conditional_fill(const MatrixXd& data, const MvnParams& params, Rng* rng)
{
    MatrixXd out = data;
    std::normal_distribution<double> normal;
    for (const Pattern& pat : group_patterns(data)) {
        if (pat.mis.empty()) continue;
        MatrixXd cond_cov = params.cov(pat.mis, pat.mis);
        MatrixXd coef;
        if (!pat.obs.empty()) {
            const ObservedBlock blk = factor_observed(params.cov, pat.obs);
            const MatrixXd s_om = params.cov(pat.obs, pat.mis);
            coef = blk.ldlt.solve(s_om).transpose();
            cond_cov -= coef * s_om;
        }
        // Square root of the (PSD) conditional covariance, clipping round-off negatives.
        MatrixXd root;
        if (rng) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cond_cov + cond_cov.transpose()));
            root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        }
        for (Index i : pat.rows) {
            VectorXd xm = params.mean(pat.mis);
            if (!pat.obs.empty()) {
                const VectorXd dev = data(i, pat.obs).transpose() - params.mean(pat.obs);
                xm += coef * dev;
            }
            if (rng) {
                VectorXd z(static_cast<Index>(pat.mis.size()));
                for (Index k = 0; k < z.size(); ++k) z[k] = normal(*rng);
                xm += root * z;
            }
            out(i, pat.mis) = xm.transpose();
        }
    }
    return out;
}

MatrixImputation bootstrap_impute(const MatrixXd& data, int M, std::uint64_t seed, const EmOptions& options)
{
    if (M < 1) throw InvalidArgument("number of imputations must be >= 1");
    MatrixImputation out;
    out.completed.resize(static_cast<std::size_t>(M));
    out.traces.resize(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) out.seeds.push_back(derive_seed(seed, "impute", static_cast<std::uint64_t>(m)));

    const bool any_missing = data.hasNaN();
    const Index n = data.rows();
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(M));

#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
    for (int m = 0; m < M; ++m) {
        const auto k = static_cast<std::size_t>(m);
        try {
            if (!any_missing) {
                out.completed[k] = data;
                continue;
            }
            Rng rng(out.seeds[k]);
            std::uniform_int_distribution<Index> pick(0, n - 1);
            MatrixXd sample(n, data.cols());
            bool usable = false;
            for (int attempt = 0; attempt < 100 && !usable; ++attempt) {
                for (Index i = 0; i < n; ++i) sample.row(i) = data.row(pick(rng));
                usable = true;
                for (Index j = 0; j < data.cols() && usable; ++j) {
                    int cnt = 0;
                    for (Index i = 0; i < n; ++i) cnt += !std::isnan(sample(i, j));
                    usable = cnt >= 2;
                }
            }
            if (!usable) throw InvalidArgument("bootstrap resample left a column with < 2 observed values");
            EmResult em = em_mvn(sample, options);
            out.traces[k] = std::move(em.trace);
            out.completed[k] = conditional_fill(data, em.params, &rng);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

ImputationSet bootstrap_impute(const PanelDataset& data, const OnsetSeries& onset, int M, std::uint64_t seed,
                               const EmOptions& options)
{
    if (M < 2) throw InvalidArgument("number of imputations must be >= 2");
    const auto n = static_cast<Index>(data.rows());
    const auto p = static_cast<Index>(data.covariates.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MatrixXd model(n, p + 2);
    for (Index j = 0; j < p; ++j) {
        const Column& c = data.covariates[static_cast<std::size_t>(j)];
        for (Index i = 0; i < n; ++i) model(i, j) = c.observed[i] ? c.values[i] : nan;
    }
    for (Index i = 0; i < n; ++i) {
        const auto& y = onset.y[static_cast<std::size_t>(i)];
        model(i, p) = y ? static_cast<double>(*y) : nan;
        model(i, p + 1) = data.year[static_cast<std::size_t>(i)];
    }
    // A constant year column (single-year panel) carries no information and
    // would make the covariance singular.
    if (model.col(p + 1).maxCoeff() == model.col(p + 1).minCoeff()) model.conservativeResize(n, p + 1);

    MatrixImputation mi = bootstrap_impute(model, M, seed, options);
    ImputationSet set;
    set.seeds = mi.seeds;
    set.traces = std::move(mi.traces);
    for (const MatrixXd& filled : mi.completed) {
        PanelDataset d = data;
        for (Index j = 0; j < p; ++j) {
            Column& c = d.covariates[static_cast<std::size_t>(j)];
            for (Index i = 0; i < n; ++i) {
                if (c.observed[i]) continue;
                c.values[i] = filled(i, j);
                c.observed[i] = 1;
            }
        }
        set.datasets.push_back(std::move(d));
    }
    return set;
}

void write_imputations(const std::filesystem::path& dir, const ImputationSet& set, const OnsetSeries& onset)
{
    for (std::size_t m = 0; m < set.size(); ++m)
        write_panel(dir / ("imputed_m" + std::to_string(m + 1) + ".csv"), set.datasets[m], &onset);
    std::ofstream log(dir / "em_log.jsonl", std::ios::binary);
    for (std::size_t m = 0; m < set.size(); ++m) {
        for (const auto& it : set.traces[m]) {
            nlohmann::json j{{"imputation", m + 1}, {"seed", set.seeds[m]}, {"iter", it.iter},
                             {"delta", it.delta}, {"loglik", it.loglik}};
            log << j.dump() << '\n';
        }
    }
}

} // namespace raresight

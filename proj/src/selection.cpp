#include "raresight/selection.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "raresight/error.hpp"
#include "raresight/kernels.hpp"
#include "raresight/rng.hpp"

namespace raresight {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(SelectorKind s) { return s == SelectorKind::lasso ? "lasso" : "stepwise"; }

std::optional<SelectorKind> parse_selector(std::string_view name)
{
    if (name == "lasso") return SelectorKind::lasso;
    if (name == "stepwise") return SelectorKind::stepwise;
    return std::nullopt;
}

std::vector<int> FoldAssignment::sizes() const
{
    std::vector<int> out(static_cast<std::size_t>(k), 0);
    for (int f : fold_of) ++out[static_cast<std::size_t>(f)];
    return out;
}

std::vector<int> FoldAssignment::event_counts(const Eigen::Ref<const VectorXd>& y) const
{
    std::vector<int> out(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (y[static_cast<Index>(i)] == 1.0) ++out[static_cast<std::size_t>(fold_of[i])];
    return out;
}

FoldAssignment make_stratified_folds(const Eigen::Ref<const VectorXd>& y, int k, std::uint64_t seed)
{
    if (k < 2) throw InvalidArgument("need at least two folds");
    if (k > y.size()) throw InvalidArgument("more folds than observations");
    std::vector<Index> events, others;
    for (Index i = 0; i < y.size(); ++i) (y[i] == 1.0 ? events : others).push_back(i);

    Rng rng(seed);
    std::shuffle(events.begin(), events.end(), rng);
    std::shuffle(others.begin(), others.end(), rng);

    FoldAssignment fa;
    fa.k = k;
    fa.seed = seed;
    fa.fold_of.assign(static_cast<std::size_t>(y.size()), 0);
    fa.degenerate_stratum = events.empty() || others.empty();
    std::size_t slot = 0;
    for (Index i : events) fa.fold_of[static_cast<std::size_t>(i)] = static_cast<int>(slot++ % k);
    for (Index i : others) fa.fold_of[static_cast<std::size_t>(i)] = static_cast<int>(slot++ % k);
    return fa;
}

namespace {

struct FoldJob
{
    std::vector<Index> train;
    std::vector<Index> test;
    StandardizedDesign design;
    VectorXd y_train;
    LassoPath path;
};

bool training_folds_ok(const FoldAssignment& fa, const Eigen::Ref<const VectorXd>& y)
{
    const auto events = fa.event_counts(y);
    const auto sizes = fa.sizes();
    const int total_events = std::accumulate(events.begin(), events.end(), 0);
    const int n = static_cast<int>(y.size());
    for (int f = 0; f < fa.k; ++f) {
        const int train_events = total_events - events[static_cast<std::size_t>(f)];
        const int train_size = n - sizes[static_cast<std::size_t>(f)];
        if (train_events == 0 || train_events == train_size) return false;
    }
    return true;
}

} // namespace

CvResult cv_choose_lambda(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y, LinkKind link,
                          std::uint64_t seed, const CvOptions& options)
{
    if (y.size() != X.rows()) throw InvalidArgument("cv: X and y row counts differ");
    FoldAssignment folds;
    bool dealt = false;
    for (int attempt = 0; attempt <= options.max_redeals && !dealt; ++attempt) {
        folds = make_stratified_folds(y, options.k, seed + static_cast<std::uint64_t>(attempt));
        dealt = training_folds_ok(folds, y);
    }
    if (!dealt)
        throw FoldDegenerate("some training fold lacks one outcome class after " +
                             std::to_string(options.max_redeals) + " re-deals");
    return cv_evaluate(X, y, link, folds, options);
}

CvResult cv_evaluate(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y, LinkKind link,
                     const FoldAssignment& folds, const CvOptions& options)
{
    const Index n = X.rows();
    const Index p = X.cols();
    if (y.size() != n || static_cast<Index>(folds.fold_of.size()) != n)
        throw InvalidArgument("cv: X, y and fold assignment sizes differ");
    if (!training_folds_ok(folds, y)) throw FoldDegenerate("some training fold lacks one outcome class");

    CvResult cv;
    cv.folds = folds;
    const int k = folds.k;
    std::vector<FoldJob> jobs(static_cast<std::size_t>(k));
    for (Index i = 0; i < n; ++i) {
        const int f = cv.folds.fold_of[static_cast<std::size_t>(i)];
        for (int g = 0; g < k; ++g) (g == f ? jobs[g].test : jobs[g].train).push_back(i);
    }

    const StandardizedDesign full = standardize(X, ConstantPolicy::freeze);
    double top = lambda_max(full, y, link);
    for (auto& job : jobs) {
        job.design = standardize(X(job.train, Eigen::all), ConstantPolicy::freeze);
        job.y_train = y(job.train);
        // Start the shared grid high enough that every fold path begins at
        // its own null model.
        top = std::max(top, lambda_max(job.design, job.y_train, link));
    }
    if (!(top > 0.0)) throw DegenerateOutcome("no covariate has a nonzero score at the null model");

    PathOptions po;
    po.tol = options.tol;
    po.lambdas = lambda_grid(top, options.n_lambda, options.lambda_min_ratio.value_or(n > p ? 1e-4 : 1e-2));
    cv.lambdas = po.lambdas;

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k + 1));
    std::vector<double> kkt(static_cast<std::size_t>(k + 1), 0.0);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
    for (int j = 0; j <= k; ++j) {
        try {
            if (j == k) {
                cv.path = fit_path(full, y, link, po);
                kkt[static_cast<std::size_t>(j)] = check_kkt(full, y, cv.path).max_violation;
            } else {
                auto& job = jobs[static_cast<std::size_t>(j)];
                job.path = fit_path(job.design, job.y_train, link, po);
                kkt[static_cast<std::size_t>(j)] = check_kkt(job.design, job.y_train, job.path).max_violation;
            }
        } catch (...) {
            errors[static_cast<std::size_t>(j)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    cv.kkt_max_violation = *std::max_element(kkt.begin(), kkt.end());

    const std::size_t L = cv.lambdas.size();
    std::vector<std::vector<double>> dev(static_cast<std::size_t>(k), std::vector<double>(L));
    for (int f = 0; f < k; ++f) {
        const auto& job = jobs[static_cast<std::size_t>(f)];
        const MatrixXd Xt = X(job.test, Eigen::all);
        const VectorXd yt = y(job.test);
        for (std::size_t l = 0; l < L; ++l) {
            const VectorXd b = job.path.coefs.row(static_cast<Index>(l)).transpose();
            const VectorXd eta = (Xt * b.tail(p)).array() + b[0];
            dev[static_cast<std::size_t>(f)][l] = binomial_deviance(yt, eta, link) / static_cast<double>(yt.size());
        }
    }
    cv.mean_dev.resize(L);
    cv.se_dev.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        double mean = 0.0;
        for (int f = 0; f < k; ++f) mean += dev[static_cast<std::size_t>(f)][l];
        mean /= k;
        double ss = 0.0;
        for (int f = 0; f < k; ++f) ss += std::pow(dev[static_cast<std::size_t>(f)][l] - mean, 2);
        cv.mean_dev[l] = mean;
        cv.se_dev[l] = std::sqrt(ss / (k - 1)) / std::sqrt(static_cast<double>(k));
    }

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L; ++l) {
        if (std::isfinite(cv.mean_dev[l]) && cv.mean_dev[l] <= best) {
            best = cv.mean_dev[l];
            cv.chosen_index = l;
        }
    }
    cv.chosen_lambda = cv.lambdas[cv.chosen_index];
    cv.active = cv.path.active_sets[cv.chosen_index];
    return cv;
}

std::vector<std::string> consensus_select(const TermCounts& counts, int M, int threshold)
{
    if (threshold > M) throw InvalidArgument("consensus threshold exceeds number of imputations");
    std::vector<std::string> out;
    for (const auto& [term, c] : counts)
        if (c >= threshold) out.push_back(term);
    return out;
}

namespace {

TermCounts count_terms(const std::vector<std::string>& terms, const std::vector<std::vector<std::string>>& sets)
{
    TermCounts counts;
    for (const auto& t : terms) {
        int c = 0;
        for (const auto& s : sets) c += std::find(s.begin(), s.end(), t) != s.end();
        counts.emplace_back(t, c);
    }
    return counts;
}

void check_same_terms(const std::vector<AnalysisMatrix>& designs)
{
    if (designs.empty()) throw InvalidArgument("no imputed designs");
    for (const auto& d : designs)
        if (d.term_names() != designs.front().term_names())
            throw InvalidArgument("imputed designs have different terms");
}

} // namespace

SelectionResult lasso_select(const std::vector<AnalysisMatrix>& designs, LinkKind link, std::uint64_t seed,
                             int threshold, const CvOptions& options)
{
    check_same_terms(designs);
    const int M = static_cast<int>(designs.size());
    SelectionResult res;
    res.method = SelectorKind::lasso;
    res.link = link;
    res.M = M;
    res.threshold = threshold;
    res.per_imputation_active.resize(static_cast<std::size_t>(M));
    res.chosen_lambdas.assign(static_cast<std::size_t>(M), std::numeric_limits<double>::quiet_NaN());

    std::vector<std::string> failures(static_cast<std::size_t>(M));
    std::vector<double> kkt(static_cast<std::size_t>(M), 0.0);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
    for (int m = 0; m < M; ++m) {
        const auto& d = designs[static_cast<std::size_t>(m)];
        try {
            const CvResult cv = cv_choose_lambda(d.X, d.y, link, seed + static_cast<std::uint64_t>(m), options);
            for (int j : cv.active) res.per_imputation_active[static_cast<std::size_t>(m)].push_back(d.terms[j].name);
            res.chosen_lambdas[static_cast<std::size_t>(m)] = cv.chosen_lambda;
            kkt[static_cast<std::size_t>(m)] = cv.kkt_max_violation;
        } catch (const std::exception& e) {
            failures[static_cast<std::size_t>(m)] = e.what();
        }
    }
    int failed = 0;
    for (int m = 0; m < M; ++m) {
        if (failures[static_cast<std::size_t>(m)].empty()) continue;
        ++failed;
        res.warnings.push_back("imputation " + std::to_string(m + 1) + ": " + failures[static_cast<std::size_t>(m)]);
    }
    if (failed > (M + 1) / 2)
        throw Error("lasso selection failed on " + std::to_string(failed) + " of " + std::to_string(M) +
                    " imputations: " + res.warnings.front());
    res.kkt_max_violation = *std::max_element(kkt.begin(), kkt.end());
    res.counts = count_terms(designs.front().term_names(), res.per_imputation_active);
    res.retained = consensus_select(res.counts, M, threshold);
    return res;
}

StepwiseResult stepwise_aic(const AnalysisMatrix& design, LinkKind link, const std::vector<std::string>& candidates,
                            const IrlsOptions& irls)
{
    StepwiseResult res;
    std::vector<std::string> pool = candidates.empty() ? design.term_names() : candidates;
    const GlmFit null_fit = irls_fit(design.select({}), link, irls);
    double current = aic(null_fit);
    res.aic_trace.push_back(current);

    while (!pool.empty()) {
        std::vector<double> scores(pool.size(), std::numeric_limits<double>::infinity());
        std::vector<std::string> errors(pool.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
        for (std::size_t c = 0; c < pool.size(); ++c) {
            std::vector<std::string> terms = res.selected;
            terms.push_back(pool[c]);
            try {
                scores[c] = aic(irls_fit(design.select(terms), link, irls));
            } catch (const RankDeficient&) {
                scores[c] = current + 2.0;
            } catch (const std::exception& e) {
                errors[c] = e.what();
            }
        }
        std::size_t best = pool.size();
        for (std::size_t c = 0; c < pool.size(); ++c) {
            if (!errors[c].empty()) {
                res.warnings.push_back("skipping '" + pool[c] + "' this round: " + errors[c]);
                continue;
            }
            if (best == pool.size() || scores[c] < scores[best]) best = c;
        }
        if (best == pool.size() || !(scores[best] < current)) break;
        current = scores[best];
        res.aic_trace.push_back(current);
        res.selected.push_back(pool[best]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return res;
}

SelectionResult stepwise_select(const std::vector<AnalysisMatrix>& designs, LinkKind link, int threshold,
                                const IrlsOptions& irls)
{
    check_same_terms(designs);
    const int M = static_cast<int>(designs.size());
    SelectionResult res;
    res.method = SelectorKind::stepwise;
    res.link = link;
    res.M = M;
    res.threshold = threshold;
    res.per_imputation_active.resize(static_cast<std::size_t>(M));
    int failed = 0;
    // Candidate fits inside stepwise_aic already run in parallel.
    for (int m = 0; m < M; ++m) {
        try {
            StepwiseResult sr = stepwise_aic(designs[static_cast<std::size_t>(m)], link, {}, irls);
            res.per_imputation_active[static_cast<std::size_t>(m)] = sr.selected;
            for (auto& w : sr.warnings) res.warnings.push_back("imputation " + std::to_string(m + 1) + ": " + w);
        } catch (const std::exception& e) {
            ++failed;
            res.warnings.push_back("imputation " + std::to_string(m + 1) + ": " + e.what());
        }
    }
    if (failed > (M + 1) / 2) throw Error("stepwise selection failed on " + std::to_string(failed) + " imputations");
    res.counts = count_terms(designs.front().term_names(), res.per_imputation_active);
    res.retained = consensus_select(res.counts, M, threshold);
    return res;
}

} // namespace raresight

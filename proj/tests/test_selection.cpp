#include "doctest.h"

#include <algorithm>
#include <map>
#include <numeric>

#include "raresight/error.hpp"
#include "raresight/selection.hpp"
#include "test_util.hpp"

using namespace raresight;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd with_events(Eigen::Index n, int events, std::mt19937_64& rng)
{
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    VectorXd y = VectorXd::Zero(n);
    for (int e = 0; e < events; ++e) y[idx[static_cast<std::size_t>(e)]] = 1.0;
    return y;
}

AnalysisMatrix make_design(const MatrixXd& X, const VectorXd& y)
{
    AnalysisMatrix d;
    d.X = X;
    d.y = y;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const auto name = std::string("v") + (j < 9 ? "0" : "") + std::to_string(j + 1);
        d.terms.push_back({name, ColumnKind::continuous});
    }
    d.panel_rows.resize(static_cast<std::size_t>(X.rows()));
    std::iota(d.panel_rows.begin(), d.panel_rows.end(), std::size_t{0});
    return d;
}

int spread(const std::vector<int>& v)
{
    return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

} // namespace

TEST_CASE("stratified folds with 31 events and k = 3")
{
    std::mt19937_64 rng(1);
    const VectorXd y = with_events(3759, 31, rng);
    const FoldAssignment fa = make_stratified_folds(y, 3, 20240601);
    auto ev = fa.event_counts(y);
    std::sort(ev.begin(), ev.end());
    CHECK(ev == std::vector<int>{10, 10, 11});
    CHECK(spread(fa.sizes()) <= 1);
    CHECK(!fa.degenerate_stratum);
    for (int f : fa.fold_of) CHECK((f >= 0 && f < 3));
}

TEST_CASE("stratified folds on random configurations")
{
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 200; ++rep) {
        const int k = std::uniform_int_distribution<int>(2, 10)(rng);
        const int n = std::uniform_int_distribution<int>(k, 400)(rng);
        const int events = std::uniform_int_distribution<int>(0, n)(rng);
        const VectorXd y = with_events(n, events, rng);
        const FoldAssignment fa = make_stratified_folds(y, k, static_cast<std::uint64_t>(rep));
        const auto ev = fa.event_counts(y);
        std::vector<int> non(static_cast<std::size_t>(k));
        for (int f = 0; f < k; ++f) non[static_cast<std::size_t>(f)] = fa.sizes()[static_cast<std::size_t>(f)] - ev[static_cast<std::size_t>(f)];
        CHECK(spread(ev) <= 1);
        CHECK(spread(non) <= 1);
        CHECK(spread(fa.sizes()) <= 1);
        CHECK(fa.degenerate_stratum == (events == 0 || events == n));
    }
}

TEST_CASE("fold determinism and edge cases")
{
    std::mt19937_64 rng(3);
    const VectorXd y = with_events(120, 13, rng);
    const FoldAssignment a = make_stratified_folds(y, 3, 9);
    const FoldAssignment b = make_stratified_folds(y, 3, 9);
    const FoldAssignment c = make_stratified_folds(y, 3, 10);
    CHECK(a.fold_of == b.fold_of);
    CHECK(a.fold_of != c.fold_of);
    auto ea = a.event_counts(y), ec = c.event_counts(y);
    std::sort(ea.begin(), ea.end());
    std::sort(ec.begin(), ec.end());
    CHECK(ea == ec);

    const FoldAssignment z = make_stratified_folds(VectorXd::Zero(10), 3, 1);
    CHECK(z.degenerate_stratum);
    CHECK(spread(z.sizes()) <= 1);
    CHECK_THROWS_AS(make_stratified_folds(VectorXd::Zero(2), 3, 1), InvalidArgument);
    CHECK_THROWS_AS(make_stratified_folds(VectorXd::Zero(5), 1, 1), InvalidArgument);
}

TEST_CASE("cross-validation curve")
{
    std::mt19937_64 rng(4);
    const MatrixXd X = testutil::normal_matrix(400, 6, rng);
    VectorXd b = VectorXd::Zero(6);
    b[1] = 1.0;
    for (LinkKind link : {LinkKind::logit, LinkKind::cloglog}) {
        CAPTURE(to_string(link));
        const VectorXd y = testutil::draw_outcome(X, -2.5, b, link, rng);
        CvOptions o;
        o.n_lambda = 40;
        const CvResult cv = cv_choose_lambda(X, y, link, 77, o);
        REQUIRE(cv.lambdas.size() == 40);
        CHECK(cv.chosen_lambda == cv.lambdas[cv.chosen_index]);
        CHECK(std::isfinite(cv.mean_dev[cv.chosen_index]));
        CHECK(*std::min_element(cv.mean_dev.begin(), cv.mean_dev.end()) == cv.mean_dev[cv.chosen_index]);
        for (std::size_t l = cv.chosen_index + 1; l < cv.mean_dev.size(); ++l)
            CHECK(cv.mean_dev[l] > cv.mean_dev[cv.chosen_index]);
        CHECK(cv.kkt_max_violation < 1e-5);
        CHECK(std::find(cv.active.begin(), cv.active.end(), 1) != cv.active.end());

        // Top of the grid: every fold predicts its training event rate.
        double expect = 0.0;
        for (int f = 0; f < 3; ++f) {
            double ev = 0, cnt = 0, tev = 0, tcnt = 0;
            for (Eigen::Index i = 0; i < 400; ++i) {
                if (cv.folds.fold_of[static_cast<std::size_t>(i)] == f) {
                    tev += y[i];
                    ++tcnt;
                } else {
                    ev += y[i];
                    ++cnt;
                }
            }
            const double p = ev / cnt;
            expect += -2.0 * (tev * std::log(p) + (tcnt - tev) * std::log1p(-p)) / tcnt;
        }
        CHECK(std::abs(cv.mean_dev[0] - expect / 3.0) < 1e-9);

        // Relabeling fold ids leaves the curve unchanged.
        FoldAssignment relabeled = cv.folds;
        for (int& f : relabeled.fold_of) f = (f + 1) % 3;
        const CvResult again = cv_evaluate(X, y, link, relabeled, o);
        for (std::size_t l = 0; l < cv.mean_dev.size(); ++l)
            CHECK(again.mean_dev[l] == doctest::Approx(cv.mean_dev[l]).epsilon(1e-12));
        CHECK(again.chosen_index == cv.chosen_index);
    }
}

TEST_CASE("cross-validation re-deals or reports degenerate folds")
{
    MatrixXd X(6, 1);
    X << 1, 2, 3, 4, 5, 6;
    VectorXd y = VectorXd::Zero(6);
    y[0] = 1.0;
    // One event: a training fold without it is unavoidable.
    CHECK_THROWS_AS(cv_choose_lambda(X, y, LinkKind::logit, 1), FoldDegenerate);
}

TEST_CASE("consensus_select")
{
    const TermCounts counts{{"a", 5}, {"b", 3}, {"c", 2}};
    CHECK(consensus_select(counts, 5, 3) == std::vector<std::string>{"a", "b"});
    CHECK(consensus_select({{"a", 0}, {"b", 0}}, 5, 3).empty());
    CHECK(consensus_select({{"a", 5}, {"b", 5}}, 5, 3) == std::vector<std::string>{"a", "b"});
    CHECK(consensus_select({{"x", 2}}, 5, 3).empty());
    CHECK_THROWS_AS(consensus_select(counts, 2, 3), InvalidArgument);

    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        TermCounts c;
        for (int t = 0; t < 10; ++t) c.emplace_back("t" + std::to_string(t), std::uniform_int_distribution<int>(0, 5)(rng));
        for (int th = 1; th < 5; ++th) {
            const auto lo = consensus_select(c, 5, th);
            const auto hi = consensus_select(c, 5, th + 1);
            CHECK(std::includes(lo.begin(), lo.end(), hi.begin(), hi.end()));
        }
    }
}

TEST_CASE("lasso_select over identical imputations")
{
    std::mt19937_64 rng(6);
    const MatrixXd X = testutil::normal_matrix(300, 5, rng);
    VectorXd b = VectorXd::Zero(5);
    b[0] = 1.0;
    const VectorXd y = testutil::draw_outcome(X, -2.0, b, LinkKind::logit, rng);
    const std::vector<AnalysisMatrix> designs(5, make_design(X, y));
    CvOptions o;
    o.n_lambda = 30;
    const SelectionResult r = lasso_select(designs, LinkKind::logit, 100, 3, o);
    CHECK(r.M == 5);
    CHECK(r.counts.size() == 5);
    CHECK(r.kkt_max_violation < 1e-5);
    for (const auto& [t, c] : r.counts) CHECK((c >= 0 && c <= 5));
    const auto retained = consensus_select(r.counts, 5, 3);
    CHECK(r.retained == retained);
    CHECK(std::find(r.retained.begin(), r.retained.end(), "v01") != r.retained.end());

    const SelectionResult again = lasso_select(designs, LinkKind::logit, 100, 3, o);
    CHECK(again.per_imputation_active == r.per_imputation_active);
}

TEST_CASE("lasso under a pure-noise design keeps few terms")
{
    std::vector<double> kept;
    for (int s = 0; s < 20; ++s) {
        std::mt19937_64 rng(1000 + s);
        const MatrixXd X = testutil::normal_matrix(600, 20, rng);
        const VectorXd y = with_events(600, 30, rng);
        const CvResult cv = cv_choose_lambda(X, y, LinkKind::logit, static_cast<std::uint64_t>(s));
        kept.push_back(static_cast<double>(cv.active.size()));
        CHECK(cv.kkt_max_violation < 1e-5);
    }
    MESSAGE("median noise terms kept: " << median(kept));
    CHECK(median(kept) <= 2.0);
}

TEST_CASE("lasso finds a single strong predictor")
{
    int found = 0;
    for (int s = 0; s < 20; ++s) {
        std::mt19937_64 rng(2000 + s);
        const MatrixXd X = testutil::normal_matrix(600, 20, rng);
        VectorXd b = VectorXd::Zero(20);
        b[7] = 2.0;
        const VectorXd y = testutil::draw_outcome(X, -4.0, b, LinkKind::logit, rng);
        const CvResult cv = cv_choose_lambda(X, y, LinkKind::logit, static_cast<std::uint64_t>(s));
        found += std::find(cv.active.begin(), cv.active.end(), 7) != cv.active.end();
    }
    CHECK(found >= 19);
}

TEST_CASE("stepwise AIC mechanics")
{
    std::mt19937_64 rng(7);
    MatrixXd X = testutil::normal_matrix(500, 4, rng);
    X.col(3) = X.col(1); // duplicate of v02
    VectorXd b = VectorXd::Zero(4);
    b[1] = 1.2;
    const VectorXd y = testutil::draw_outcome(X, -1.5, b, LinkKind::logit, rng);
    const AnalysisMatrix d = make_design(X, y);
    const StepwiseResult r = stepwise_aic(d, LinkKind::logit);
    REQUIRE(!r.selected.empty());
    CHECK(r.selected.front() == "v02");
    CHECK(std::count(r.selected.begin(), r.selected.end(), "v04") == 0);
    for (std::size_t k = 1; k < r.aic_trace.size(); ++k) CHECK(r.aic_trace[k] < r.aic_trace[k - 1]);
    CHECK(r.aic_trace.size() == r.selected.size() + 1);

    // The first term is the one with the lowest single-term AIC.
    double best = std::numeric_limits<double>::infinity();
    std::string arg;
    for (const auto& t : d.term_names()) {
        const double a = aic(irls_fit(d.select({t}), LinkKind::logit));
        if (a < best) {
            best = a;
            arg = t;
        }
    }
    CHECK(arg == r.selected.front());
    CHECK(r.aic_trace[1] == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("stepwise with a planted predictor and noise")
{
    int first = 0, only = 0;
    std::vector<double> noise_kept;
    for (int s = 0; s < 20; ++s) {
        std::mt19937_64 rng(3000 + s);
        const MatrixXd X = testutil::normal_matrix(600, 15, rng);
        VectorXd b = VectorXd::Zero(15);
        b[4] = 1.5;
        const VectorXd y = testutil::draw_outcome(X, -3.0, b, LinkKind::logit, rng);
        const StepwiseResult r = stepwise_aic(make_design(X, y), LinkKind::logit);
        first += !r.selected.empty() && r.selected.front() == "v05";
        only += r.selected.size() == 1;

        const VectorXd y0 = with_events(600, 30, rng);
        noise_kept.push_back(static_cast<double>(stepwise_aic(make_design(X, y0), LinkKind::logit).selected.size()));
    }
    MESSAGE("planted first: " << first << "/20, stopped after it: " << only << "/20");
    MESSAGE("stepwise noise terms, median: " << median(noise_kept));
    CHECK(first == 20);
}

TEST_CASE("stepwise_select aggregates across imputations")
{
    std::mt19937_64 rng(8);
    const MatrixXd X = testutil::normal_matrix(400, 6, rng);
    VectorXd b = VectorXd::Zero(6);
    b[2] = 1.0;
    const VectorXd y = testutil::draw_outcome(X, -2.0, b, LinkKind::cloglog, rng);
    const std::vector<AnalysisMatrix> designs(3, make_design(X, y));
    const SelectionResult r = stepwise_select(designs, LinkKind::cloglog, 2);
    CHECK(r.method == SelectorKind::stepwise);
    for (const auto& [t, c] : r.counts) CHECK((c == 0 || c == 3));
    CHECK(std::find(r.retained.begin(), r.retained.end(), "v03") != r.retained.end());
    CHECK(r.per_imputation_active[0] == r.per_imputation_active[2]);
}

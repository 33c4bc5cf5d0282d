#include "doctest.h"

#include "raresight/kernels.hpp"
#include "test_util.hpp"

using namespace raresight;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Problem
{
    MatrixXd X;
    VectorXd beta;
    VectorXd y;
    VectorXd eta;
};

Problem make_problem(Eigen::Index n, Eigen::Index p, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Problem pr;
    pr.X = testutil::normal_matrix(n, p, rng);
    pr.beta = VectorXd::LinSpaced(p, -0.5, 0.5);
    pr.y = testutil::draw_outcome(pr.X, -1.0, pr.beta, LinkKind::logit, rng);
    pr.eta = (pr.X * pr.beta).array() - 1.0;
    return pr;
}

} // namespace

TEST_CASE("parallel kernels agree with the serial reference")
{
    // Sizes straddle the block boundary.
    for (Eigen::Index n : {1, 255, 256, 257, 1000, 3759}) {
        const Problem pr = make_problem(n, 7, static_cast<std::uint64_t>(n));
        for (LinkKind link : {LinkKind::logit, LinkKind::cloglog}) {
            CAPTURE(n);
            VectorXd e1(n), e2(n);
            kernels::serial::linear_predictor(pr.X, -1.0, pr.beta, e1);
            kernels::omp::linear_predictor(pr.X, -1.0, pr.beta, e2);
            CHECK((e1 - e2).cwiseAbs().maxCoeff() < 1e-12);

            kernels::Working w1, w2;
            kernels::serial::working(pr.y, e1, link, w1);
            kernels::omp::working(pr.y, e1, link, w2);
            CHECK(w1.mu == w2.mu);
            CHECK(w1.weight == w2.weight);
            CHECK(w1.residual == w2.residual);

            const double l1 = kernels::serial::log_likelihood(pr.y, e1, link);
            const double l2 = kernels::omp::log_likelihood(pr.y, e1, link);
            CHECK(std::abs(l1 - l2) <= 1e-12 * (1.0 + std::abs(l1)));

            const VectorXd c1 = kernels::serial::crossprod(pr.X, w1.residual);
            const VectorXd c2 = kernels::omp::crossprod(pr.X, w1.residual);
            CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-10);

            const MatrixXd g1 = kernels::serial::weighted_gram(pr.X, w1.weight);
            const MatrixXd g2 = kernels::omp::weighted_gram(pr.X, w1.weight);
            CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(g2.isApprox(g2.transpose(), 0.0));
        }
    }
}

TEST_CASE("parallel reductions do not depend on the thread count")
{
    const Problem pr = make_problem(5000, 12, 99);
    kernels::Working w;
    kernels::omp::working(pr.y, pr.eta, LinkKind::cloglog, w);

    kernels::set_max_threads(1);
    const double l1 = kernels::omp::log_likelihood(pr.y, pr.eta, LinkKind::cloglog);
    const VectorXd c1 = kernels::omp::crossprod(pr.X, w.residual);
    const MatrixXd g1 = kernels::omp::weighted_gram(pr.X, w.weight);
    kernels::set_max_threads(4);
    const double l4 = kernels::omp::log_likelihood(pr.y, pr.eta, LinkKind::cloglog);
    const VectorXd c4 = kernels::omp::crossprod(pr.X, w.residual);
    const MatrixXd g4 = kernels::omp::weighted_gram(pr.X, w.weight);
    kernels::set_max_threads(0);

    CHECK(l1 == l4);
    CHECK(c1 == c4);
    CHECK(g1 == g4);
}

TEST_CASE("working values match their definitions")
{
    const VectorXd y = (VectorXd(3) << 1, 0, 1).finished();
    const VectorXd eta = (VectorXd(3) << -0.3, 0.0, 1.2).finished();
    kernels::Working w;
    kernels::serial::working(y, eta, LinkKind::cloglog, w);
    for (int i = 0; i < 3; ++i) {
        const double mu = 1.0 - std::exp(-std::exp(eta[i]));
        const double d = std::exp(eta[i] - std::exp(eta[i]));
        CHECK(w.mu[i] == doctest::Approx(mu).epsilon(1e-14));
        CHECK(w.weight[i] == doctest::Approx(d * d / (mu * (1 - mu))).epsilon(1e-12));
        CHECK(w.residual[i] == doctest::Approx((y[i] - mu) * d / (mu * (1 - mu))).epsilon(1e-12));
    }
}

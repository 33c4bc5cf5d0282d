#pragma once

// Row-wise GLM kernels. `serial` is the plain reference; `omp` splits rows
// into fixed blocks of kBlockRows, runs blocks in parallel and reduces the
// block partials in block order, so its result is independent of the thread
// count. Library code calls `omp`; tests check it against `serial`.

#include <Eigen/Dense>

#include "raresight/link.hpp"

namespace raresight::kernels {

using MatRef = Eigen::Ref<const Eigen::MatrixXd>;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecOut = Eigen::Ref<Eigen::VectorXd>;

inline constexpr Eigen::Index kBlockRows = 256;

/// Per-row quantities of the IRLS quadratic approximation.
struct Working
{
    Eigen::VectorXd mu;       // clamped fitted probability
    Eigen::VectorXd weight;   // (dmu/deta)^2 / (mu (1 - mu))
    Eigen::VectorXd residual; // score contribution (y - mu) dmu/deta / (mu (1 - mu))
};

namespace serial {

void linear_predictor(const MatRef& X, double intercept, const VecRef& beta, VecOut eta);
void working(const VecRef& y, const VecRef& eta, LinkKind link, Working& out);
double log_likelihood(const VecRef& y, const VecRef& eta, LinkKind link);
Eigen::VectorXd crossprod(const MatRef& X, const VecRef& v);
/// X' diag(w) X
Eigen::MatrixXd weighted_gram(const MatRef& X, const VecRef& w);

} // namespace serial

namespace omp {

void linear_predictor(const MatRef& X, double intercept, const VecRef& beta, VecOut eta);
void working(const VecRef& y, const VecRef& eta, LinkKind link, Working& out);
double log_likelihood(const VecRef& y, const VecRef& eta, LinkKind link);
Eigen::VectorXd crossprod(const MatRef& X, const VecRef& v);
Eigen::MatrixXd weighted_gram(const MatRef& X, const VecRef& w);

} // namespace omp

/// Number of worker threads the parallel kernels and job loops may use.
int max_threads();
void set_max_threads(int n);

} // namespace raresight::kernels

// Serial reference vs OpenMP kernels, plus one end-to-end IRLS fit.
//
//   bench_kernels --benchmark_filter=gram
//
// Row counts span the paper-sized panel (~4k rows) up to 256k.

#include <map>
#include <random>

#include <benchmark/benchmark.h>

#include "raresight/glm.hpp"
#include "raresight/kernels.hpp"

using namespace raresight;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Problem
{
    MatrixXd X;
    VectorXd y;
    VectorXd beta;
    VectorXd eta;
    VectorXd w;
};

Problem make_problem(Eigen::Index n, Eigen::Index p)
{
    std::mt19937_64 rng(static_cast<std::uint64_t>(n * 131 + p));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    Problem pr;
    pr.X.resize(n, p);
    for (Eigen::Index i = 0; i < pr.X.size(); ++i) pr.X(i) = normal(rng);
    pr.beta = VectorXd::Constant(p, 0.1);
    pr.eta = (pr.X * pr.beta).array() - 3.0;
    pr.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) pr.y[i] = unif(rng) < link_inverse(pr.eta[i], LinkKind::logit) ? 1.0 : 0.0;
    pr.w = VectorXd::Constant(n, 0.2);
    return pr;
}

const Problem& problem(Eigen::Index n, Eigen::Index p)
{
    static std::map<std::pair<Eigen::Index, Eigen::Index>, Problem> cache;
    auto it = cache.find({n, p});
    if (it == cache.end()) it = cache.emplace(std::make_pair(n, p), make_problem(n, p)).first;
    return it->second;
}

void rows_args(benchmark::internal::Benchmark* b)
{
    for (long n : {4096L, 32768L, 262144L}) b->Args({n, 40});
    b->Unit(benchmark::kMicrosecond);
}

template <bool Parallel>
void BM_linear_predictor(benchmark::State& state)
{
    const Problem& pr = problem(state.range(0), state.range(1));
    VectorXd eta(pr.X.rows());
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::omp::linear_predictor(pr.X, -3.0, pr.beta, eta);
        else
            kernels::serial::linear_predictor(pr.X, -3.0, pr.beta, eta);
        benchmark::DoNotOptimize(eta.data());
    }
}

template <bool Parallel>
void BM_working(benchmark::State& state)
{
    const Problem& pr = problem(state.range(0), state.range(1));
    kernels::Working wk;
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::omp::working(pr.y, pr.eta, LinkKind::cloglog, wk);
        else
            kernels::serial::working(pr.y, pr.eta, LinkKind::cloglog, wk);
        benchmark::DoNotOptimize(wk.weight.data());
    }
}

template <bool Parallel>
void BM_log_likelihood(benchmark::State& state)
{
    const Problem& pr = problem(state.range(0), state.range(1));
    for (auto _ : state) {
        double ll = Parallel ? kernels::omp::log_likelihood(pr.y, pr.eta, LinkKind::logit)
                             : kernels::serial::log_likelihood(pr.y, pr.eta, LinkKind::logit);
        benchmark::DoNotOptimize(ll);
    }
}

template <bool Parallel>
void BM_crossprod(benchmark::State& state)
{
    const Problem& pr = problem(state.range(0), state.range(1));
    for (auto _ : state) {
        VectorXd g = Parallel ? kernels::omp::crossprod(pr.X, pr.w) : kernels::serial::crossprod(pr.X, pr.w);
        benchmark::DoNotOptimize(g.data());
    }
}

template <bool Parallel>
void BM_weighted_gram(benchmark::State& state)
{
    const Problem& pr = problem(state.range(0), state.range(1));
    for (auto _ : state) {
        MatrixXd G = Parallel ? kernels::omp::weighted_gram(pr.X, pr.w) : kernels::serial::weighted_gram(pr.X, pr.w);
        benchmark::DoNotOptimize(G.data());
    }
}

void BM_irls_fit(benchmark::State& state)
{
    const Problem& pr = problem(state.range(0), state.range(1));
    MatrixXd Z(pr.X.rows(), pr.X.cols() + 1);
    Z << VectorXd::Ones(pr.X.rows()), pr.X;
    for (auto _ : state) {
        GlmFit fit = irls_fit(Z, pr.y, LinkKind::logit);
        benchmark::DoNotOptimize(fit.beta.data());
    }
}

} // namespace

BENCHMARK(BM_linear_predictor<false>)->Name("linear_predictor/serial")->Apply(rows_args);
BENCHMARK(BM_linear_predictor<true>)->Name("linear_predictor/omp")->Apply(rows_args);
BENCHMARK(BM_working<false>)->Name("working/serial")->Apply(rows_args);
BENCHMARK(BM_working<true>)->Name("working/omp")->Apply(rows_args);
BENCHMARK(BM_log_likelihood<false>)->Name("log_likelihood/serial")->Apply(rows_args);
BENCHMARK(BM_log_likelihood<true>)->Name("log_likelihood/omp")->Apply(rows_args);
BENCHMARK(BM_crossprod<false>)->Name("crossprod/serial")->Apply(rows_args);
BENCHMARK(BM_crossprod<true>)->Name("crossprod/omp")->Apply(rows_args);
BENCHMARK(BM_weighted_gram<false>)->Name("weighted_gram/serial")->Apply(rows_args);
BENCHMARK(BM_weighted_gram<true>)->Name("weighted_gram/omp")->Apply(rows_args);
BENCHMARK(BM_irls_fit)->Name("irls_fit/omp")->Apply(rows_args);

BENCHMARK_MAIN();

#include "raresight/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "raresight/error.hpp"
#include "raresight/glm.hpp"
#include "raresight/rng.hpp"

namespace raresight {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::string> SimTruth::true_terms() const
{
    std::vector<std::string> out;
    for (std::size_t j = 0; j < beta.size(); ++j)
        if (beta[j] != 0.0) out.push_back(terms[j]);
    return out;
}

namespace {

MatrixXd correlation_root(Index p, double rho)
{
    MatrixXd R(p, p);
    for (Index j = 0; j < p; ++j)
        for (Index k = 0; k < p; ++k) R(j, k) = std::pow(rho, static_cast<double>(std::abs(j - k)));
    Eigen::LLT<MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) throw InvalidArgument("covariate correlation matrix not positive definite");
    return llt.matrixL();
}

VectorXd draw_row(const MatrixXd& root, Rng& rng)
{
    std::normal_distribution<double> normal;
    VectorXd z(root.cols());
    for (Index j = 0; j < z.size(); ++j) z[j] = normal(rng);
    return root * z;
}

std::string column_name(std::size_t j, std::size_t p)
{
    const int width = p >= 100 ? 3 : 2;
    char buf[32];
    std::snprintf(buf, sizeof buf, "x%0*zu", width, j + 1);
    return buf;
}

} // namespace

double calibrate_intercept(const std::vector<double>& beta, double correlation, LinkKind link, double target,
                           std::uint64_t seed)
{
    if (!(target > 0.0 && target < 1.0)) throw InvalidArgument("event rate target must lie in (0,1)");
    const auto p = static_cast<Index>(beta.size());
    const Eigen::Map<const VectorXd> b(beta.data(), p);
    VectorXd lin(20000);
    if (p == 0 || b.isZero()) {
        lin.setZero();
    } else {
        const MatrixXd root = correlation_root(p, correlation);
        Rng rng = make_rng(seed, "calibrate");
        for (Index i = 0; i < lin.size(); ++i) lin[i] = draw_row(root, rng).dot(b);
    }
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double rate = 0.0;
        for (Index i = 0; i < lin.size(); ++i) rate += link_inverse_raw(mid + lin[i], link);
        rate /= static_cast<double>(lin.size());
        (rate < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::pair<PanelDataset, SimTruth> generate(const SimScenario& sc)
{
    if (sc.n_countries < 1 || sc.years_per_country < 1) throw InvalidArgument("empty scenario");
    if (!(sc.missing_rate >= 0.0 && sc.missing_rate < 1.0)) throw InvalidArgument("missing_rate must lie in [0,1)");
    const std::size_t p = sc.true_beta.size();
    if (p == 0) throw InvalidArgument("scenario needs at least one covariate");

    SimTruth truth;
    truth.beta = sc.true_beta;
    truth.link = sc.link;
    truth.intercept = calibrate_intercept(sc.true_beta, sc.correlation, sc.link, sc.event_rate_target, sc.seed);
    for (std::size_t j = 0; j < p; ++j) truth.terms.push_back(column_name(j, p));
    truth.always_observed = truth.terms.front();

    const MatrixXd root = correlation_root(static_cast<Index>(p), sc.correlation);
    const Eigen::Map<const VectorXd> beta(sc.true_beta.data(), static_cast<Index>(p));

    PanelDataset d;
    d.covariates.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
        d.covariates[j].name = truth.terms[j];
        d.covariates[j].kind = ColumnKind::continuous;
    }

    Rng rng = make_rng(sc.seed, "simulate");
    Rng miss_rng = make_rng(sc.seed, "missingness");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    char name[32];
    int events = 0;
    for (int c = 0; c < sc.n_countries; ++c) {
        std::snprintf(name, sizeof name, "C%04d", c + 1);
        VectorXd prev = draw_row(root, rng);
        for (int t = 0; t < sc.years_per_country; ++t) {
            const VectorXd x = draw_row(root, rng);
            const double mu = link_inverse_raw(truth.intercept + prev.dot(beta), sc.link);
            const int y = unif(rng) < mu ? 1 : 0;
            events += y;
            d.country.emplace_back(name);
            d.year.push_back(sc.first_year + t);
            d.existence.emplace_back(static_cast<double>(y));
            truth.y.push_back(y);
            const double pmiss = std::min(0.95, sc.missing_rate * (1.0 + std::tanh(x[0])));
            for (std::size_t j = 0; j < p; ++j) {
                auto& col = d.covariates[j];
                col.values.push_back(x[static_cast<Index>(j)]);
                const bool missing = j > 0 && sc.missing_rate > 0.0 && unif(miss_rng) < pmiss;
                col.observed.push_back(missing ? 0 : 1);
                if (missing) col.values.back() = 0.0;
            }
            prev = x;
        }
    }
    truth.event_rate = static_cast<double>(events) / static_cast<double>(truth.y.size());
    return {std::move(d), std::move(truth)};
}

void write_truth(const std::filesystem::path& path, const SimScenario& sc, const SimTruth& truth)
{
    nlohmann::ordered_json j;
    j["scenario"] = {{"n_countries", sc.n_countries},
                     {"years_per_country", sc.years_per_country},
                     {"first_year", sc.first_year},
                     {"link", std::string(to_string(sc.link))},
                     {"event_rate_target", sc.event_rate_target},
                     {"missing_rate", sc.missing_rate},
                     {"correlation", sc.correlation},
                     {"seed", sc.seed}};
    j["intercept"] = truth.intercept;
    nlohmann::ordered_json b;
    for (std::size_t k = 0; k < truth.terms.size(); ++k) b[truth.terms[k]] = truth.beta[k];
    j["beta"] = b;
    j["true_terms"] = truth.true_terms();
    j["always_observed"] = truth.always_observed;
    j["event_rate"] = truth.event_rate;
    j["effect_lag"] = 1;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

VectorXd brute_force_mle(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y, LinkKind link)
{
    const Index d = X.cols();
    if (d < 1 || d > 3) throw InvalidArgument("brute_force_mle handles 1 to 3 columns");
    if (X.rows() != y.size()) throw InvalidArgument("brute_force_mle: row mismatch");

    // Scalar loop: the grid visits ~5e5 points, so avoid per-point allocation.
    auto objective = [&](const VectorXd& b) {
        double ll = 0.0;
        for (Index i = 0; i < X.rows(); ++i) {
            double eta = 0.0;
            for (Index k = 0; k < d; ++k) eta += X(i, k) * b[k];
            const double mu = link_inverse(eta, link);
            ll += y[i] > 0.5 ? std::log(mu) : std::log1p(-mu);
        }
        return ll;
    };

    // Coarse exhaustive grid.
    const double lo = -10.0, hi = 10.0;
    double step = 0.25;
    const int per_axis = static_cast<int>(std::lround((hi - lo) / step)) + 1;
    int total = 1;
    for (Index k = 0; k < d; ++k) total *= per_axis;
    VectorXd best(d), b(d);
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int idx = 0; idx < total; ++idx) {
        int rem = idx;
        for (Index k = 0; k < d; ++k) {
            b[k] = lo + step * (rem % per_axis);
            rem /= per_axis;
        }
        const double ll = objective(b);
        if (ll > best_ll) {
            best_ll = ll;
            best = b;
        }
    }

    // Pattern search over the 3^d neighbourhood, halving the step when stuck.
    int neighbours = 1;
    for (Index k = 0; k < d; ++k) neighbours *= 3;
    while (true) {
        bool moved = true;
        while (moved) {
            moved = false;
            VectorXd centre = best;
            for (int idx = 0; idx < neighbours; ++idx) {
                int rem = idx;
                for (Index k = 0; k < d; ++k) {
                    b[k] = std::clamp(centre[k] + step * (rem % 3 - 1), lo, hi);
                    rem /= 3;
                }
                const double ll = objective(b);
                if (ll > best_ll) {
                    best_ll = ll;
                    best = b;
                    moved = true;
                }
            }
        }
        if (step <= 1e-3) break;
        step = std::max(step * 0.5, 1e-3);
    }
    return best;
}

} // namespace raresight

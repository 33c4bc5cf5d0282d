#pragma once

#include <cmath>

#include "raresight/link.hpp"

namespace raresight::kernels::detail {

struct RowWorking
{
    double mu;
    double weight;
    double residual;
};

inline RowWorking row_working(double y, double eta, LinkKind link)
{
    const double mu = link_inverse(eta, link);
    const double v = mu * (1.0 - mu);
    if (link == LinkKind::logit) return {mu, v, y - mu};
    const double d = mu_eta(eta, link);
    return {mu, d * d / v, (y - mu) * d / v};
}

inline double row_loglik(double y, double eta, LinkKind link)
{
    const double mu = link_inverse(eta, link);
    return y * std::log(mu) + (1.0 - y) * std::log1p(-mu);
}

} // namespace raresight::kernels::detail

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace raresight {

enum class LinkKind { logit, cloglog };

inline constexpr double kProbClamp = 1e-12;

std::string_view to_string(LinkKind link);
std::optional<LinkKind> parse_link(std::string_view name);

/// Inverse link, clamped to [1e-12, 1 - 1e-12] so downstream logs stay finite.
inline double link_inverse(double eta, LinkKind link)
{
    double mu;
    if (link == LinkKind::logit) {
        mu = eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    } else {
        mu = -std::expm1(-std::exp(eta));
    }
    if (mu < kProbClamp) return kProbClamp;
    if (mu > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return mu;
}

/// Unclamped inverse link, for finite-difference and AME contrasts where the
/// clamp would flatten tiny differences.
inline double link_inverse_raw(double eta, LinkKind link)
{
    if (link == LinkKind::logit)
        return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    return -std::expm1(-std::exp(eta));
}

/// d mu / d eta, evaluated without clamping.
inline double mu_eta(double eta, LinkKind link)
{
    if (link == LinkKind::logit) {
        const double e = std::exp(-std::abs(eta));
        return e / ((1.0 + e) * (1.0 + e));
    }
    return std::exp(eta - std::exp(eta));
}

/// d^2 mu / d eta^2.
inline double mu_eta_deriv(double eta, LinkKind link)
{
    if (link == LinkKind::logit) {
        const double p = link_inverse_raw(eta, link);
        return mu_eta(eta, link) * (1.0 - 2.0 * p);
    }
    return mu_eta(eta, link) * (1.0 - std::exp(eta));
}

/// Link function g(mu).
inline double link_fun(double mu, LinkKind link)
{
    if (link == LinkKind::logit) return std::log(mu / (1.0 - mu));
    return std::log(-std::log1p(-mu));
}

} // namespace raresight

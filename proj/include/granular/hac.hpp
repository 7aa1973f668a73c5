#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "copula.hpp"
#include "error.hpp"
#include "optimize.hpp"
#include "random.hpp"

namespace granular {

/// Parameter with the given Kendall's τ (τ within the family's reachable range).
inline double copula_param_from_tau(CopulaKind kind, double tau_k)
{
    switch (kind) {
    case CopulaKind::Clayton: return 2.0 * tau_k / (1.0 - tau_k);
    case CopulaKind::Gumbel: return 1.0 / (1.0 - tau_k);
    case CopulaKind::Gaussian: return std::sin(3.14159265358979323846 * tau_k / 2.0);
    case CopulaKind::Frank: {
        if (std::abs(tau_k) < 1e-12) return 0.0;
        auto g = [&](double theta) { return kendall_tau({CopulaKind::Frank, theta}) - tau_k; };
        double lo = tau_k > 0.0 ? 1e-8 : -1.0;
        double hi = tau_k > 0.0 ? 1.0 : -1e-8;
        while (g(hi) < 0.0 && hi < 1e4) hi *= 2.0;
        while (g(lo) > 0.0 && lo > -1e4) lo *= 2.0;
        boost::math::tools::eps_tolerance<double> tol(50);
        std::uintmax_t it = 200;
        const auto r = boost::math::tools::toms748_solve(g, lo, hi, tol, it);
        return 0.5 * (r.first + r.second);
    }
    default: return 0.0;
    }
}

namespace detail {

// Archimedean generator φ, its inverse ψ and derivative φ' (θ > 0 for Frank).
inline double arch_phi(const CopulaFamily& f, double t)
{
    const double th = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton: return std::expm1(-th * std::log(t)) / th;
    case CopulaKind::Gumbel: return std::pow(-std::log(t), th);
    case CopulaKind::Frank: return -std::log(std::expm1(-th * t) / std::expm1(-th));
    default: return -std::log(t);
    }
}

inline double arch_psi(const CopulaFamily& f, double s)
{
    const double th = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton: return std::exp(-std::log1p(th * s) / th);
    case CopulaKind::Gumbel: return std::exp(-std::pow(s, 1.0 / th));
    case CopulaKind::Frank: return -std::log1p(std::exp(-s) * std::expm1(-th)) / th;
    default: return std::exp(-s);
    }
}

inline double arch_dphi(const CopulaFamily& f, double t)
{
    const double th = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton: return -std::pow(t, -th - 1.0);
    case CopulaKind::Gumbel: return -th * std::pow(-std::log(t), th - 1.0) / t;
    case CopulaKind::Frank: return th * std::exp(-th * t) / std::expm1(-th * t);
    default: return -1.0 / t;
    }
}

// Log-series variate with parameter p (Kemp's LK algorithm).
inline double log_series_draw(double p, Rng& rng)
{
    const double r = std::log1p(-p);
    const double v = uniform_open(rng);
    if (v >= p) return 1.0;
    const double u = uniform_open(rng);
    const double q = -std::expm1(r * u);
    if (v <= q * q) {
        return std::floor(1.0 + std::log(v) / std::log(q));
    }
    return v <= q ? 2.0 : 1.0;
}

// Positive stable variate with Laplace transform exp(-s^α), 0 < α <= 1 (Kanter).
inline double positive_stable_draw(double alpha, Rng& rng)
{
    if (alpha >= 1.0) return 1.0;
    constexpr double pi = 3.14159265358979323846;
    const double u = pi * uniform_open(rng);
    const double e = exponential1(rng);
    const double a = std::pow(std::sin(alpha * u), alpha / (1.0 - alpha)) * std::sin((1.0 - alpha) * u) /
                     std::pow(std::sin(u), 1.0 / (1.0 - alpha));
    return std::pow(a / e, (1.0 - alpha) / alpha);
}

} // namespace detail

/// Frailty V whose Laplace transform is the generator ψ of the family.
inline double archimedean_frailty(const CopulaFamily& f, Rng& rng)
{
    switch (f.kind) {
    case CopulaKind::Clayton: return std::gamma_distribution<double>(1.0 / f.theta, f.theta)(rng);
    case CopulaKind::Gumbel: return detail::positive_stable_draw(1.0 / f.theta, rng);
    case CopulaKind::Frank: return detail::log_series_draw(-std::expm1(-f.theta), rng);
    default: return 1.0;
    }
}

/// Two-level hierarchical Archimedean copula D(C₁(u₁, u₂), C₂(u₃, u₄)) with
/// one leaf per claim type. Leaves may vary with their internal horizon τ.
struct HacSpec {
    CopulaFamily outer;
    std::array<CopulaSpec, 2> leaves;
};

/// Smallest Kendall's τ a leaf attains over τ >= 0 (its limit as τ → ∞).
inline double leaf_min_kendall(const CopulaSpec& s)
{
    if (s.kind == CopulaKind::Independence) return 0.0;
    return kendall_tau(CopulaFamily{s.kind, copula_inverse_link(s.kind, std::min(s.param.eta_inf, s.param.eta0))});
}

inline void validate(const HacSpec& h)
{
    const auto& o = h.outer;
    if (o.kind == CopulaKind::Gaussian) throw ModelError("HAC outer copula must be Archimedean");
    if (o.kind == CopulaKind::Frank && !(o.theta > 0.0)) throw ModelError("HAC outer Frank copula requires theta > 0");
    validate(o);
    for (const auto& leaf : h.leaves) leaf.validate();
    // An independent outer copula factorizes and places no bound on the leaves.
    if (o.kind == CopulaKind::Independence) return;
    const double outer_tau = kendall_tau(o);
    for (const auto& leaf : h.leaves) {
        if (outer_tau > leaf_min_kendall(leaf) + 1e-12) {
            throw ModelError("HAC nesting violated: outer Kendall tau " + std::to_string(outer_tau) +
                             " exceeds leaf Kendall tau " + std::to_string(leaf_min_kendall(leaf)));
        }
    }
}

inline HacSpec make_hac(CopulaFamily outer, CopulaSpec leaf0, CopulaSpec leaf1)
{
    HacSpec h{outer, {leaf0, leaf1}};
    validate(h);
    return h;
}

/// D{C_τ₁(u₁, u₂), C̃_τ₂(u₃, u₄)}.
inline double hac_cdf(const HacSpec& h, double u1, double u2, double u3, double u4, double tau1 = 0.0, double tau2 = 0.0)
{
    const double c1 = copula_cdf(h.leaves[0].at(tau1), u1, u2);
    const double c2 = copula_cdf(h.leaves[1].at(tau2), u3, u4);
    if (c1 <= 0.0 || c2 <= 0.0) return 0.0;
    if (h.outer.kind == CopulaKind::Independence) return c1 * c2;
    return copula_cdf(h.outer, c1, c2);
}

namespace detail {

// Given frailty V of the outer generator, the pair in one leaf has cdf
// exp(-V φ(C(x, y))). x is drawn from its margin; y from the conditional cdf
//   G(y) = exp(-V (φ(C) - φ(x))) · φ'(C)/φ'(x) · h(x, y).
inline std::pair<double, double> leaf_pair_given_frailty(const CopulaFamily& outer, double v0,
                                                         const std::function<CopulaFamily(double)>& leaf_at, Rng& rng)
{
    const double x = std::clamp(arch_psi(outer, exponential1(rng) / v0), 1e-300, 1.0 - 1e-16);
    const CopulaFamily leaf = leaf_at(x);
    const double target = uniform_open(rng);
    const double phix = arch_phi(outer, x);
    const double dphix = arch_dphi(outer, x);
    auto G = [&](double y) {
        if (y <= 0.0) return 0.0;
        if (y >= 1.0) return 1.0;
        const double c = copula_cdf(leaf, x, y);
        if (c <= 0.0) return 0.0;
        return std::exp(-v0 * (arch_phi(outer, c) - phix)) * arch_dphi(outer, c) / dphix * h_function(leaf, x, y);
    };
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (G(mid) < target ? lo : hi) = mid;
    }
    return {x, 0.5 * (lo + hi)};
}

} // namespace detail

/// One draw (u₁, u₂, u₃, u₄). leaf_at[k](x) returns leaf k's copula once its
/// first coordinate x is known (so a τ that depends on the delay can be used);
/// when empty, leaves are evaluated at τ = 0.
inline std::array<double, 4> sample_hac(const HacSpec& h, Rng& rng,
                                        std::array<std::function<CopulaFamily(double)>, 2> leaf_at = {})
{
    for (int k = 0; k < 2; ++k) {
        if (!leaf_at[k]) {
            const CopulaFamily fixed = h.leaves[k].at(0.0);
            leaf_at[k] = [fixed](double) { return fixed; };
        }
    }
    std::array<double, 4> out{};
    if (h.outer.kind == CopulaKind::Independence) {
        for (int k = 0; k < 2; ++k) {
            const double x = uniform_open(rng);
            const double y = h_inverse(leaf_at[k](x), x, uniform_open(rng));
            out[2 * k] = x;
            out[2 * k + 1] = y;
        }
        return out;
    }
    const double v0 = archimedean_frailty(h.outer, rng);
    for (int k = 0; k < 2; ++k) {
        const auto [x, y] = detail::leaf_pair_given_frailty(h.outer, v0, leaf_at[k], rng);
        out[2 * k] = x;
        out[2 * k + 1] = y;
    }
    return out;
}

struct HacOuterFit {
    CopulaFamily outer;
    double log_likelihood = 0.0;
    double standard_error = std::numeric_limits<double>::quiet_NaN();
    bool clamped_to_nesting = false;
};

/// ML fit of the outer copula on matched pairs of the leaves' first
/// coordinates (the (u₁, u₃) margin of the HAC is D itself). The estimate is
/// capped at the nesting bound implied by the leaves.
inline HacOuterFit fit_hac_outer(std::span<const std::pair<double, double>> u13, CopulaKind kind,
                                 const std::array<CopulaSpec, 2>& leaves, Diagnostics* diag = nullptr)
{
    HacOuterFit fit;
    if (kind == CopulaKind::Independence) return fit;
    if (!is_archimedean(kind)) throw ModelError("HAC outer copula must be Archimedean");
    if (u13.size() < 30) throw ModelError("HAC outer fit needs at least 30 matched pairs");
    const double bound_tau = std::min(leaf_min_kendall(leaves[0]), leaf_min_kendall(leaves[1]));
    auto nll_theta = [&](double theta) {
        const CopulaFamily f{kind, theta};
        double ll = 0.0;
        for (const auto& [a, b] : u13) ll += std::log(std::max(copula_density(f, a, b), 1e-300));
        return -ll;
    };
    auto nll = [&](double eta) { return nll_theta(copula_inverse_link(kind, eta)); };
    double lo = kind == CopulaKind::Frank ? 1e-6 : std::log(1e-4);
    double hi = kind == CopulaKind::Frank ? 60.0 : std::log(100.0);
    if (bound_tau <= 0.0) {
        warn(diag, "HAC: leaves admit no positive outer dependence; outer copula set to independence");
        fit.clamped_to_nesting = true;
        return fit;
    }
    const double bound_eta = copula_link(kind, copula_param_from_tau(kind, std::min(bound_tau, 0.99)));
    hi = std::min(hi, bound_eta);
    if (hi <= lo) {
        warn(diag, "HAC: nesting bound leaves no room for the outer parameter; outer copula set to independence");
        fit.clamped_to_nesting = true;
        return fit;
    }
    const auto best = optim::minimize_scalar(nll, lo, hi);
    fit.outer = {kind, copula_inverse_link(kind, best.x)};
    fit.log_likelihood = -best.value;
    fit.clamped_to_nesting = best.at_upper && hi == bound_eta;
    if (fit.clamped_to_nesting) warn(diag, "HAC: outer parameter capped at the nesting bound");
    const auto se = optim::standard_errors([&](std::span<const double> x) { return nll_theta(x[0]); },
                                           std::vector<double>{fit.outer.theta});
    if (!se.empty()) fit.standard_error = se[0];
    return fit;
}

} // namespace granular

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "delay.hpp"
#include "error.hpp"
#include "optimize.hpp"
#include "payments.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace granular {

enum class CopulaKind { Independence, Clayton, Gumbel, Frank, Gaussian };

inline std::string_view to_string(CopulaKind k)
{
    switch (k) {
    case CopulaKind::Independence: return "independence";
    case CopulaKind::Clayton: return "clayton";
    case CopulaKind::Gumbel: return "gumbel";
    case CopulaKind::Frank: return "frank";
    case CopulaKind::Gaussian: return "gaussian";
    }
    return "?";
}

inline CopulaKind parse_copula_kind(std::string_view s)
{
    for (auto k : {CopulaKind::Independence, CopulaKind::Clayton, CopulaKind::Gumbel, CopulaKind::Frank, CopulaKind::Gaussian}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown copula family '" + std::string(s) + "'");
}

inline bool is_archimedean(CopulaKind k)
{
    return k == CopulaKind::Clayton || k == CopulaKind::Gumbel || k == CopulaKind::Frank;
}

/// A bivariate copula with a fixed parameter: Clayton θ > 0, Gumbel θ >= 1,
/// Frank θ != 0, Gaussian ρ ∈ (-1, 1). Independence ignores theta.
struct CopulaFamily {
    CopulaKind kind = CopulaKind::Independence;
    double theta = 0.0;
};

inline void validate(const CopulaFamily& f)
{
    const double t = f.theta;
    bool ok = true;
    switch (f.kind) {
    case CopulaKind::Independence: break;
    case CopulaKind::Clayton: ok = t > 0.0 && std::isfinite(t); break;
    case CopulaKind::Gumbel: ok = t >= 1.0 && std::isfinite(t); break;
    case CopulaKind::Frank: ok = t != 0.0 && std::isfinite(t); break;
    case CopulaKind::Gaussian: ok = t > -1.0 && t < 1.0; break;
    }
    if (!ok) {
        throw ModelError("copula parameter " + std::to_string(t) + " out of range for " + std::string(to_string(f.kind)));
    }
}

inline CopulaFamily make_copula(CopulaKind kind, double theta = 0.0)
{
    CopulaFamily f{kind, theta};
    validate(f);
    return f;
}

namespace detail {

inline constexpr double kTinyFrank = 1e-10;

inline bool acts_as_independence(const CopulaFamily& f)
{
    return f.kind == CopulaKind::Independence || (f.kind == CopulaKind::Gumbel && f.theta == 1.0) ||
           (f.kind == CopulaKind::Frank && std::abs(f.theta) < kTinyFrank) ||
           (f.kind == CopulaKind::Gaussian && f.theta == 0.0);
}

// log(u^-θ + v^-θ - 1) without overflow.
inline double clayton_log_s(double u, double v, double theta)
{
    const double a = -theta * std::log(u);
    const double b = -theta * std::log(v);
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m) - std::exp(-m));
}

template <int N>
double genz_sum(double asr, double hk, double hs)
{
    using GL = boost::math::quadrature::gauss<double, N>;
    const auto& xs = GL::abscissa();
    const auto& ws = GL::weights();
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        // Odd N would include the centre node once; N is even here.
        for (double x : {1.0 - xs[i], 1.0 + xs[i]}) {
            const double sn = std::sin(asr * x);
            s += ws[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
    }
    return s;
}

template <int N>
double genz_tail(double a, double bs, double hk, double c, double d)
{
    using GL = boost::math::quadrature::gauss<double, N>;
    const auto& xs = GL::abscissa();
    const auto& ws = GL::weights();
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (double x : {1.0 - xs[i], 1.0 + xs[i]}) {
            const double xs2 = (a * x) * (a * x);
            const double asr = -(bs / xs2 + hk) / 2.0;
            if (asr <= -100.0) continue;
            const double sp = 1.0 + c * xs2 * (1.0 + 5.0 * d * xs2);
            const double rs = std::sqrt(1.0 - xs2);
            const double ep = std::exp(-(hk / 2.0) * xs2 / ((1.0 + rs) * (1.0 + rs))) / rs;
            s += ws[i] * std::exp(asr) * (sp - ep);
        }
    }
    return s;
}

// P(X > dh, Y > dk) for a standard bivariate normal with correlation r (Genz).
inline double bvn_upper(double dh, double dk, double r)
{
    constexpr double tp = 6.283185307179586477;
    using stats::normal_cdf;
    if (r == 0.0) return normal_cdf(-dh) * normal_cdf(-dk);
    const double h = dh;
    double k = dk;
    double hk = h * k;
    double bvn = 0.0;
    const double ar = std::abs(r);
    if (ar < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r) / 2.0;
        const double s = ar < 0.3 ? genz_sum<6>(asr, hk, hs) : ar < 0.75 ? genz_sum<12>(asr, hk, hs) : genz_sum<20>(asr, hk, hs);
        bvn = s * asr / tp + normal_cdf(-h) * normal_cdf(-k);
    } else {
        if (r < 0.0) {
            k = -k;
            hk = -hk;
        }
        if (ar < 1.0) {
            const double as = (1.0 - r) * (1.0 + r);
            double a = std::sqrt(as);
            const double bs = (h - k) * (h - k);
            const double asr = -(bs / as + hk) / 2.0;
            const double c = (4.0 - hk) / 8.0;
            const double d = (12.0 - hk) / 80.0;
            if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
            if (hk > -100.0) {
                const double b = std::sqrt(bs);
                const double sp = std::sqrt(tp) * normal_cdf(-b / a);
                bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            bvn = (a * genz_tail<20>(a, bs, hk, c, d) - bvn) / tp;
        }
        if (r > 0.0) {
            bvn += normal_cdf(-std::max(h, k));
        } else if (h >= k) {
            bvn = -bvn;
        } else {
            const double L = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
            bvn = L - bvn;
        }
    }
    return std::clamp(bvn, 0.0, 1.0);
}

} // namespace detail

/// Φ₂(x, y; ρ) = P(X <= x, Y <= y).
inline double bivariate_normal_cdf(double x, double y, double rho)
{
    if (x == -std::numeric_limits<double>::infinity() || y == -std::numeric_limits<double>::infinity()) return 0.0;
    if (x == std::numeric_limits<double>::infinity()) return stats::normal_cdf(y);
    if (y == std::numeric_limits<double>::infinity()) return stats::normal_cdf(x);
    return detail::bvn_upper(-x, -y, rho);
}

inline double copula_cdf(const CopulaFamily& f, double u, double v)
{
    if (u <= 0.0 || v <= 0.0) return 0.0;
    if (u >= 1.0) return std::min(v, 1.0);
    if (v >= 1.0) return u;
    if (detail::acts_as_independence(f)) return u * v;
    const double t = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton: return std::exp(-detail::clayton_log_s(u, v, t) / t);
    case CopulaKind::Gumbel: {
        const double x = -std::log(u), y = -std::log(v);
        return std::exp(-std::pow(std::pow(x, t) + std::pow(y, t), 1.0 / t));
    }
    case CopulaKind::Frank: {
        if (t > 0.0 && u + v > 1.0) {
            // Same expression rewritten around (1, 1), where the direct form cancels.
            const double s = std::expm1(t * (1.0 - u)) + std::expm1(t * (1.0 - v)) - std::expm1(t * (1.0 - u - v));
            return 1.0 - std::log(s / -std::expm1(-t)) / t;
        }
        const double num = std::expm1(-t * u) * std::expm1(-t * v);
        return -std::log1p(num / std::expm1(-t)) / t;
    }
    case CopulaKind::Gaussian:
        return bivariate_normal_cdf(stats::normal_quantile(u), stats::normal_quantile(v), t);
    default: return u * v;
    }
}

/// h(u, v) = ∂C(u, v)/∂u: the conditional cdf of V given U = u.
inline double h_function(const CopulaFamily& f, double u, double v)
{
    if (v <= 0.0) return 0.0;
    if (v >= 1.0) return 1.0;
    if (detail::acts_as_independence(f)) return v;
    u = std::clamp(u, 1e-300, 1.0);
    const double t = f.theta;
    double h = v;
    switch (f.kind) {
    case CopulaKind::Clayton:
        h = std::exp((-t - 1.0) * std::log(u) + (-1.0 / t - 1.0) * detail::clayton_log_s(u, v, t));
        break;
    case CopulaKind::Gumbel: {
        if (u >= 1.0) return 0.0;
        const double x = -std::log(u), y = -std::log(v);
        const double s = std::pow(x, t) + std::pow(y, t);
        const double logA = std::log(s) / t;
        const double A = std::exp(logA);
        h = std::exp(-A + (1.0 - t) * logA + (t - 1.0) * std::log(x) - std::log(u));
        break;
    }
    case CopulaKind::Frank: {
        const double a = std::expm1(-t * u), b = std::expm1(-t * v);
        h = std::exp(-t * u) * b / (std::expm1(-t) + a * b);
        break;
    }
    case CopulaKind::Gaussian: {
        if (u >= 1.0) return t > 0.0 ? 0.0 : 1.0;
        const double x = stats::normal_quantile(u), y = stats::normal_quantile(v);
        h = stats::normal_cdf((y - t * x) / std::sqrt(1.0 - t * t));
        break;
    }
    default: break;
    }
    return std::clamp(h, 0.0, 1.0);
}

/// Solves h(u, v) = p for v.
inline double h_inverse(const CopulaFamily& f, double u, double p)
{
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    if (detail::acts_as_independence(f)) return p;
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    const double t = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton: {
        // v = ((p^{-θ/(1+θ)} - 1) u^{-θ} + 1)^{-1/θ}, in logs.
        const double la = std::log(std::expm1(-t / (1.0 + t) * std::log(p))) - t * std::log(u);
        const double lsum = la > 0.0 ? la + std::log1p(std::exp(-la)) : std::log1p(std::exp(la));
        return std::exp(-lsum / t);
    }
    case CopulaKind::Frank: {
        const double b = p * std::expm1(-t) / (std::exp(-t * u) - p * std::expm1(-t * u));
        return std::clamp(-std::log1p(b) / t, 0.0, 1.0);
    }
    case CopulaKind::Gaussian: {
        const double x = stats::normal_quantile(u);
        return stats::normal_cdf(t * x + std::sqrt(1.0 - t * t) * stats::normal_quantile(p));
    }
    default: {
        auto g = [&](double v) { return h_function(f, u, v) - p; };
        boost::math::tools::eps_tolerance<double> tol(48);
        std::uintmax_t iters = 200;
        const auto [lo, hi] = boost::math::tools::toms748_solve(g, 0.0, 1.0, -p, 1.0 - p, tol, iters);
        return 0.5 * (lo + hi);
    }
    }
}

/// c(u, v) = ∂²C/∂u∂v.
inline double copula_density(const CopulaFamily& f, double u, double v)
{
    if (u <= 0.0 || v <= 0.0 || u >= 1.0 || v >= 1.0) return 0.0;
    if (detail::acts_as_independence(f)) return 1.0;
    const double t = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton:
        return std::exp(std::log1p(t) + (-t - 1.0) * (std::log(u) + std::log(v)) +
                        (-1.0 / t - 2.0) * detail::clayton_log_s(u, v, t));
    case CopulaKind::Gumbel: {
        const double x = -std::log(u), y = -std::log(v);
        const double s = std::pow(x, t) + std::pow(y, t);
        const double A = std::pow(s, 1.0 / t);
        return std::exp(-A - std::log(u) - std::log(v) + (t - 1.0) * (std::log(x) + std::log(y)) +
                        (-2.0 + 1.0 / t) * std::log(s)) *
               (A + t - 1.0);
    }
    case CopulaKind::Frank: {
        const double den = std::expm1(-t) + std::expm1(-t * u) * std::expm1(-t * v);
        return -t * std::expm1(-t) * std::exp(-t * (u + v)) / (den * den);
    }
    case CopulaKind::Gaussian: {
        const double x = stats::normal_quantile(u), y = stats::normal_quantile(v);
        const double r2 = 1.0 - t * t;
        return std::exp(-(t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * r2)) / std::sqrt(r2);
    }
    default: return 1.0;
    }
}

/// Kendall's τ implied by the copula parameter.
inline double kendall_tau(const CopulaFamily& f)
{
    if (detail::acts_as_independence(f)) return 0.0;
    const double t = f.theta;
    switch (f.kind) {
    case CopulaKind::Clayton: return t / (t + 2.0);
    case CopulaKind::Gumbel: return 1.0 - 1.0 / t;
    case CopulaKind::Frank: {
        // τ = 1 + 4 (D₁(θ) - 1) / θ with the Debye function D₁(θ) = θ⁻¹ ∫₀^θ s/(eˢ-1) ds.
        auto integrand = [](double s) { return s == 0.0 ? 1.0 : s / std::expm1(s); };
        const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, t, 5, 1e-13);
        return 1.0 + 4.0 * (integral / t - 1.0) / t;
    }
    case CopulaKind::Gaussian: return 2.0 / 3.14159265358979323846 * std::asin(t);
    default: return 0.0;
    }
}

/// Natural link g mapping the parameter range onto ℝ.
inline double copula_link(CopulaKind kind, double theta)
{
    switch (kind) {
    case CopulaKind::Clayton: return std::log(theta);
    case CopulaKind::Gumbel: return std::log(theta - 1.0);
    case CopulaKind::Frank: return theta;
    case CopulaKind::Gaussian: return std::atanh(theta);
    default: return 0.0;
    }
}

inline double copula_inverse_link(CopulaKind kind, double eta)
{
    switch (kind) {
    case CopulaKind::Clayton: return std::exp(eta);
    case CopulaKind::Gumbel: return 1.0 + std::exp(eta);
    case CopulaKind::Frank: return eta;
    case CopulaKind::Gaussian: return std::tanh(eta);
    default: return 0.0;
    }
}

/// ϑ(τ) = g⁻¹(η∞ + (η₀ - η∞) e^{-κτ}) with η₀ >= η∞ and κ >= 0, so
/// dependence is strongest right after reporting and relaxes with τ.
struct TimeVaryingParam {
    double eta0 = 0.0;
    double eta_inf = 0.0;
    double kappa = 0.0;

    double eta_at(double tau) const { return eta_inf + (eta0 - eta_inf) * std::exp(-kappa * std::max(tau, 0.0)); }
};

struct CopulaSpec {
    CopulaKind kind = CopulaKind::Independence;
    TimeVaryingParam param;

    static CopulaSpec independence() { return {}; }

    static CopulaSpec fixed(CopulaKind kind, double theta)
    {
        if (kind == CopulaKind::Independence) return {};
        ::granular::validate(CopulaFamily{kind, theta});
        const double eta = copula_link(kind, theta);
        return {kind, {eta, eta, 0.0}};
    }

    static CopulaSpec time_varying(CopulaKind kind, double theta0, double theta_inf, double kappa)
    {
        CopulaSpec s{kind, {copula_link(kind, theta0), copula_link(kind, theta_inf), kappa}};
        s.validate();
        return s;
    }

    bool is_static() const { return kind == CopulaKind::Independence || param.kappa == 0.0 || param.eta0 == param.eta_inf; }

    CopulaFamily at(double tau) const
    {
        if (kind == CopulaKind::Independence) return {};
        return {kind, copula_inverse_link(kind, param.eta_at(tau))};
    }

    void validate() const
    {
        if (kind == CopulaKind::Independence) return;
        if (!(param.kappa >= 0.0)) throw ModelError("time-varying copula requires kappa >= 0");
        if (param.eta0 < param.eta_inf) throw ModelError("time-varying copula requires non-increasing dependence (eta0 >= eta_inf)");
        ::granular::validate(at(0.0));
        ::granular::validate(CopulaFamily{kind, copula_inverse_link(kind, param.eta_inf)});
    }
};

/// P[W <= w, N(τ) <= n | T = t] = C_τ(H_t(w), Q_τ(n)).
inline double sklar_joint_cdf(const DelayModel& delay, const CountProcess& counts, const CopulaSpec& spec, double t,
                              double w, double tau, std::int64_t n)
{
    if (n < 0) return 0.0;
    return copula_cdf(spec.at(tau), delay_cdf(delay, t, w), count_cdf(counts, tau, n));
}

/// ∂/∂w [C_τ(H_t(w), Q_τ(n)) - C_τ(H_t(w), Q_τ(n-1))]
///   = h_t(w) · [h(H_t(w), Q_τ(n)) - h(H_t(w), Q_τ(n-1))].
/// The copula is only identified on the range of the discrete margin; this
/// lattice-point density is the estimation target.
inline double mixed_density(const DelayModel& delay, const CountProcess& counts, const CopulaSpec& spec, double t,
                            double w, double tau, std::int64_t n)
{
    if (n < 0) return 0.0;
    const double dens = delay_density(delay, t, w);
    const double u = delay_cdf(delay, t, w);
    const double lam = cumulative_intensity(counts.intensity, tau);
    const auto fam = spec.at(tau);
    const double hi = h_function(fam, u, poisson_cdf_at(lam, n));
    const double lo = h_function(fam, u, poisson_cdf_at(lam, n - 1));
    return dens * std::max(hi - lo, 0.0);
}

/// Smallest n with Q(n) >= p for a Poisson(mean) count.
inline std::int64_t poisson_quantile(double mean, double p)
{
    if (!(mean > 0.0) || p <= 0.0) return 0;
    const double z = stats::normal_quantile(std::clamp(p, 1e-300, 1.0 - 1e-16));
    auto n = static_cast<std::int64_t>(std::max(0.0, std::floor(mean + std::sqrt(mean) * z)));
    while (n > 0 && poisson_cdf_at(mean, n - 1) >= p) --n;
    while (poisson_cdf_at(mean, n) < p) {
        ++n;
        if (n > static_cast<std::int64_t>(mean + 50.0 * std::sqrt(mean) + 100.0)) break;
    }
    return n;
}

/// Count drawn from P[N = · | U = u]: the smallest n with h(u, Q(n)) >= v.
inline std::int64_t conditional_count(const CopulaFamily& f, double u, double count_mean, double v)
{
    return poisson_quantile(count_mean, h_inverse(f, u, v));
}

struct DelayCountDraw {
    double delay = 0.0;
    std::int64_t count = 0;
    double u = 0.0; // delay-margin uniform
};

inline DelayCountDraw simulate_delay_count(const DelayModel& delay, const CountProcess& counts, const CopulaSpec& spec,
                                           double t, double tau, Rng& rng)
{
    DelayCountDraw d;
    d.u = uniform_open(rng);
    d.delay = delay_quantile(delay, t, d.u);
    const double v = uniform_open(rng);
    d.count = conditional_count(spec.at(tau), d.u, cumulative_intensity(counts.intensity, tau), v);
    return d;
}

/// One reported claim's (delay, payment count within horizon τ) pair.
struct MixedObservation {
    double t_day = 0.0;
    double w_days = 0.0;
    double tau = 0.0;
    std::int64_t n = 0;
};

struct CopulaFit {
    CopulaSpec spec;
    double log_likelihood = 0.0; // copula part of Σ log mixed_density
    std::vector<std::string> parameter_names;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    bool at_boundary = false;

    double aic() const { return 2.0 * static_cast<double>(estimates.size()) - 2.0 * log_likelihood; }
};

namespace detail {

struct MixedPoint {
    double u;
    double q_hi;
    double q_lo;
    double tau;
};

inline std::vector<MixedPoint> mixed_points(std::span<const MixedObservation> obs, const DelayModel& delay,
                                            const CountProcess& counts)
{
    std::vector<MixedPoint> pts;
    pts.reserve(obs.size());
    for (const auto& o : obs) {
        const double lam = cumulative_intensity(counts.intensity, o.tau);
        pts.push_back({std::clamp(delay_cdf(delay, o.t_day, o.w_days), 1e-12, 1.0 - 1e-12), poisson_cdf_at(lam, o.n),
                       poisson_cdf_at(lam, o.n - 1), o.tau});
    }
    return pts;
}

inline double mixed_loglik(std::span<const MixedPoint> pts, const CopulaSpec& spec)
{
    double ll = 0.0;
    if (spec.is_static()) {
        const auto fam = spec.at(0.0);
        for (const auto& p : pts) ll += std::log(std::max(h_function(fam, p.u, p.q_hi) - h_function(fam, p.u, p.q_lo), 1e-300));
        return ll;
    }
    for (const auto& p : pts) {
        const auto fam = spec.at(p.tau);
        ll += std::log(std::max(h_function(fam, p.u, p.q_hi) - h_function(fam, p.u, p.q_lo), 1e-300));
    }
    return ll;
}

inline std::pair<double, double> eta_bounds(CopulaKind k)
{
    switch (k) {
    case CopulaKind::Clayton: return {std::log(1e-3), std::log(100.0)};
    case CopulaKind::Gumbel: return {std::log(1e-3), std::log(99.0)};
    case CopulaKind::Frank: return {-60.0, 60.0};
    case CopulaKind::Gaussian: return {-4.0, 4.0};
    default: return {0.0, 0.0};
    }
}

} // namespace detail

/// Margins-first (IFM) copula estimation on the mixed likelihood. The delay
/// density factor does not involve the copula and is left out.
inline CopulaFit fit_copula(std::span<const MixedObservation> obs, const DelayModel& delay, const CountProcess& counts,
                            CopulaKind kind, bool time_varying = false, Diagnostics* diag = nullptr)
{
    if (obs.size() < 200) {
        throw ModelError("copula fit needs at least 200 (delay, count) pairs, got " + std::to_string(obs.size()));
    }
    const auto pts = detail::mixed_points(obs, delay, counts);
    CopulaFit fit;
    if (kind == CopulaKind::Independence) {
        fit.spec = CopulaSpec::independence();
        fit.log_likelihood = detail::mixed_loglik(pts, fit.spec);
        return fit;
    }
    const auto [lo, hi] = detail::eta_bounds(kind);
    auto static_nll = [&](double eta) { return -detail::mixed_loglik(pts, CopulaSpec{kind, {eta, eta, 0.0}}); };
    const auto best = optim::minimize_scalar(static_nll, lo, hi);

    if (!time_varying) {
        fit.spec = CopulaSpec{kind, {best.x, best.x, 0.0}};
        fit.log_likelihood = -best.value;
        fit.at_boundary = best.at_lower || best.at_upper;
        const double theta = copula_inverse_link(kind, best.x);
        fit.parameter_names = {"theta"};
        fit.estimates = {theta};
        auto nll_theta = [&](std::span<const double> x) {
            const CopulaFamily f{kind, x[0]};
            try {
                validate(f);
            } catch (const ModelError&) {
                return std::numeric_limits<double>::infinity();
            }
            const double eta = copula_link(kind, x[0]);
            return -detail::mixed_loglik(pts, CopulaSpec{kind, {eta, eta, 0.0}});
        };
        fit.standard_errors = optim::standard_errors(nll_theta, fit.estimates);
    } else {
        // (η∞, d, log κ) with η₀ = η∞ + d² keeps the monotone-dependence constraint.
        auto nll = [&](std::span<const double> x) {
            if (x[2] < -12.0 || x[2] > 6.0) return std::numeric_limits<double>::infinity();
            const double eta_inf = x[0];
            const double eta0 = x[0] + x[1] * x[1];
            if (eta_inf < lo || eta0 > hi) return std::numeric_limits<double>::infinity();
            return -detail::mixed_loglik(pts, CopulaSpec{kind, {eta0, eta_inf, std::exp(x[2])}});
        };
        const auto res = optim::nelder_mead(nll, {best.x, 0.5, 0.0}, {0.3, 0.3, 0.5});
        if (!res.converged) throw ModelError("time-varying copula fit did not converge");
        const double eta_inf = res.x[0];
        const double eta0 = res.x[0] + res.x[1] * res.x[1];
        const double kappa = std::exp(res.x[2]);
        fit.spec = CopulaSpec{kind, {eta0, eta_inf, kappa}};
        fit.log_likelihood = -res.value;
        fit.at_boundary = std::abs(res.x[1]) < 1e-3 || res.x[2] < -11.0 || res.x[2] > 5.0;
        fit.parameter_names = {"eta0", "eta_inf", "kappa"};
        fit.estimates = {eta0, eta_inf, kappa};
        auto nll_nat = [&](std::span<const double> x) {
            if (x[0] < x[1] || x[2] < 0.0) return std::numeric_limits<double>::infinity();
            return -detail::mixed_loglik(pts, CopulaSpec{kind, {x[0], x[1], x[2]}});
        };
        if (!fit.at_boundary) fit.standard_errors = optim::standard_errors(nll_nat, fit.estimates);
    }
    if (fit.at_boundary) warn(diag, "copula: " + std::string(to_string(kind)) + " estimate on the parameter boundary");
    return fit;
}

/// Fits each candidate family and keeps the lowest AIC.
inline CopulaFit select_copula(std::span<const MixedObservation> obs, const DelayModel& delay, const CountProcess& counts,
                               std::span<const CopulaKind> candidates, bool time_varying = false,
                               Diagnostics* diag = nullptr, std::vector<CopulaFit>* all = nullptr)
{
    if (candidates.empty()) throw ModelError("no copula candidates supplied");
    std::optional<CopulaFit> best;
    for (auto kind : candidates) {
        CopulaFit f = fit_copula(obs, delay, counts, kind, time_varying && kind != CopulaKind::Independence);
        if (all != nullptr) all->push_back(f);
        if (!best || f.aic() < best->aic()) best = std::move(f);
    }
    if (best->at_boundary) {
        warn(diag, "copula: " + std::string(to_string(best->spec.kind)) + " estimate on the parameter boundary");
    }
    return *best;
}

} // namespace granular

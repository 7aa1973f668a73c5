#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "error.hpp"
#include "optimize.hpp"
#include "random.hpp"

namespace granular {

/// λ(τ) = rate0 · exp(-decay · τ), τ in years since reporting.
struct ExponentialDecay {
    double rate0 = 1.0;
    double decay = 1.0;
};

/// λ(τ) = rate0 · (1 + τ)^(-decay), decay > 1 so Λ(∞) is finite.
struct PowerDecay {
    double rate0 = 1.0;
    double decay = 2.0;
};

using IntensityFunction = std::variant<ExponentialDecay, PowerDecay>;

enum class IntensityFamily { Exponential, Power };

inline std::string_view to_string(IntensityFamily f)
{
    return f == IntensityFamily::Exponential ? "exponential" : "power";
}

inline IntensityFamily parse_intensity_family(std::string_view s)
{
    if (s == "exponential") return IntensityFamily::Exponential;
    if (s == "power") return IntensityFamily::Power;
    throw DataError("unknown intensity family '" + std::string(s) + "'");
}

inline void validate(const IntensityFunction& f)
{
    if (const auto* e = std::get_if<ExponentialDecay>(&f)) {
        if (!(e->rate0 > 0.0 && e->decay > 0.0)) throw ModelError("exponential decay needs rate0 > 0 and decay > 0");
    } else {
        const auto& p = std::get<PowerDecay>(f);
        if (!(p.rate0 > 0.0 && p.decay > 1.0)) throw ModelError("power decay needs rate0 > 0 and decay > 1");
    }
}

inline double intensity(const IntensityFunction& f, double tau)
{
    if (const auto* e = std::get_if<ExponentialDecay>(&f)) return e->rate0 * std::exp(-e->decay * tau);
    const auto& p = std::get<PowerDecay>(f);
    return p.rate0 * std::pow(1.0 + tau, -p.decay);
}

/// Λ(τ) = ∫_0^τ λ(s) ds in closed form.
inline double cumulative_intensity(const IntensityFunction& f, double tau)
{
    if (tau <= 0.0) return 0.0;
    if (const auto* e = std::get_if<ExponentialDecay>(&f)) return -e->rate0 * std::expm1(-e->decay * tau) / e->decay;
    const auto& p = std::get<PowerDecay>(f);
    return p.rate0 * std::expm1((1.0 - p.decay) * std::log1p(tau)) / (1.0 - p.decay);
}

inline double total_intensity(const IntensityFunction& f)
{
    if (const auto* e = std::get_if<ExponentialDecay>(&f)) return e->rate0 / e->decay;
    const auto& p = std::get<PowerDecay>(f);
    return p.rate0 / (p.decay - 1.0);
}

/// Λ^{-1}(y) for 0 <= y < Λ(∞).
inline double inverse_cumulative_intensity(const IntensityFunction& f, double y)
{
    if (y <= 0.0) return 0.0;
    if (const auto* e = std::get_if<ExponentialDecay>(&f)) return -std::log1p(-e->decay * y / e->rate0) / e->decay;
    const auto& p = std::get<PowerDecay>(f);
    return std::expm1(std::log1p((1.0 - p.decay) * y / p.rate0) / (1.0 - p.decay));
}

/// Per-claim payment counting process N(τ): inhomogeneous Poisson.
struct CountProcess {
    IntensityFunction intensity;
};

inline double poisson_log_pmf_at(double mean, std::int64_t n)
{
    if (n < 0) return -std::numeric_limits<double>::infinity();
    if (mean <= 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const auto nd = static_cast<double>(n);
    return nd * std::log(mean) - mean - std::lgamma(nd + 1.0);
}

/// P[N <= n] for N ~ Poisson(mean), via the regularized upper incomplete gamma.
inline double poisson_cdf_at(double mean, std::int64_t n)
{
    if (n < 0) return 0.0;
    if (mean <= 0.0) return 1.0;
    return boost::math::gamma_q(static_cast<double>(n) + 1.0, mean);
}

inline double count_pmf(const CountProcess& c, double tau, std::int64_t n)
{
    return std::exp(poisson_log_pmf_at(cumulative_intensity(c.intensity, tau), n));
}

/// Q_τ(n) = P[N(τ) <= n].
inline double count_cdf(const CountProcess& c, double tau, std::int64_t n)
{
    return poisson_cdf_at(cumulative_intensity(c.intensity, tau), n);
}

/// P[N(τ2) - N(τ1) = n]; independent of the history up to τ1.
inline double increment_pmf(const CountProcess& c, double tau1, double tau2, std::int64_t n)
{
    if (tau1 > tau2) throw ModelError("increment_pmf requires tau1 <= tau2");
    const double mean = cumulative_intensity(c.intensity, tau2) - cumulative_intensity(c.intensity, tau1);
    return std::exp(poisson_log_pmf_at(mean, n));
}

/// ∂Q_τ(n)/∂τ = -λ(τ) · Λ(τ)^n e^{-Λ(τ)} / n!.
/// Q_τ(n) decreases in τ, so the derivative is non-positive; its magnitude is
/// λ(τ) times the Poisson pmf at n.
inline double dQ_dtau(const CountProcess& c, double tau, std::int64_t n)
{
    if (n < 0) return 0.0;
    return -intensity(c.intensity, tau) * count_pmf(c, tau, n);
}

/// Thinning against the envelope λ(τ1) (valid because λ is decreasing).
inline std::vector<double> simulate_payment_times(const CountProcess& c, double tau1, double tau2, Rng& rng)
{
    std::vector<double> out;
    if (!(tau2 > tau1)) return out;
    const double envelope = intensity(c.intensity, tau1);
    if (!(envelope > 0.0)) return out;
    double s = tau1;
    for (;;) {
        s += exponential1(rng) / envelope;
        if (s > tau2) break;
        if (uniform_open(rng) * envelope <= intensity(c.intensity, s)) out.push_back(s);
    }
    return out;
}

inline std::vector<double> simulate_payment_times(const CountProcess& c, double tau_max, Rng& rng)
{
    return simulate_payment_times(c, 0.0, tau_max, rng);
}

/// n event times in (τ1, τ2] given the count: i.i.d. with density
/// λ(s) / (Λ(τ2) - Λ(τ1)), drawn by inverting Λ. Returned sorted.
inline std::vector<double> place_payment_times(const CountProcess& c, double tau1, double tau2, std::int64_t n, Rng& rng)
{
    std::vector<double> out;
    if (n <= 0 || !(tau2 > tau1)) return out;
    const double l1 = cumulative_intensity(c.intensity, tau1);
    const double l2 = cumulative_intensity(c.intensity, tau2);
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double s = inverse_cumulative_intensity(c.intensity, l1 + uniform_open(rng) * (l2 - l1));
        out.push_back(std::clamp(s, std::nextafter(tau1, std::numeric_limits<double>::infinity()), tau2));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// One claim's observed payment times (internal years) and its horizon.
struct PaymentHistory {
    std::vector<double> event_times;
    double horizon = 0.0;
};

struct IntensityFit {
    IntensityFunction intensity;
    double log_likelihood = 0.0;
    std::vector<std::string> parameter_names{"rate0", "decay"};
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    bool at_boundary = false;

    double aic() const { return 4.0 - 2.0 * log_likelihood; }
};

inline constexpr double kMaxRate0 = 1e5;

inline double intensity_loglik(const IntensityFunction& f, std::span<const PaymentHistory> claims)
{
    double ll = 0.0;
    for (const auto& c : claims) {
        for (double t : c.event_times) ll += std::log(intensity(f, t));
        ll -= cumulative_intensity(f, c.horizon);
    }
    return ll;
}

/// Maximizes Σ log λ(τ_event) - Σ Λ(horizon). For either family rate0
/// profiles out in closed form, leaving a bounded search over the decay.
inline IntensityFit fit_intensity(std::span<const PaymentHistory> claims, IntensityFamily family,
                                  Diagnostics* diag = nullptr)
{
    double events = 0.0;
    double horizon_total = 0.0;
    for (const auto& c : claims) {
        events += static_cast<double>(c.event_times.size());
        horizon_total += c.horizon;
        for (double t : c.event_times) {
            if (t < 0.0 || t > c.horizon + 1e-9) throw DataError("payment time outside its claim's horizon");
        }
    }
    if (!(horizon_total > 0.0)) throw ModelError("intensity fit: all observation horizons are zero");
    if (events < 100.0) {
        throw ModelError("intensity fit needs at least 100 payment events, got " + std::to_string(static_cast<long>(events)));
    }

    auto make = [family](double rate0, double decay) -> IntensityFunction {
        if (family == IntensityFamily::Exponential) return ExponentialDecay{rate0, decay};
        return PowerDecay{rate0, decay};
    };
    auto decay_of = [family](double x) { return family == IntensityFamily::Exponential ? std::exp(x) : 1.0 + std::exp(x); };
    auto profile_rate = [&](double decay) {
        double unit = 0.0;
        const auto f = make(1.0, decay);
        for (const auto& c : claims) unit += cumulative_intensity(f, c.horizon);
        return std::min(events / unit, kMaxRate0);
    };
    auto nll_profile = [&](double x) {
        const double decay = decay_of(x);
        return -intensity_loglik(make(profile_rate(decay), decay), claims);
    };
    const auto best = optim::minimize_scalar(nll_profile, std::log(1e-4), std::log(1e3));
    const double decay = decay_of(best.x);
    const double rate0 = profile_rate(decay);

    IntensityFit fit;
    fit.intensity = make(rate0, decay);
    fit.log_likelihood = intensity_loglik(fit.intensity, claims);
    fit.estimates = {rate0, decay};
    fit.at_boundary = best.at_lower || best.at_upper || rate0 >= kMaxRate0;
    if (fit.at_boundary) {
        warn(diag, "intensity: estimate on the parameter boundary (rate0=" + std::to_string(rate0) +
                       ", decay=" + std::to_string(decay) + ")");
    }
    auto nll = [&](std::span<const double> p) {
        if (!(p[0] > 0.0) || !(p[1] > (family == IntensityFamily::Power ? 1.0 : 0.0))) return std::numeric_limits<double>::infinity();
        return -intensity_loglik(make(p[0], p[1]), claims);
    };
    fit.standard_errors = optim::standard_errors(nll, fit.estimates);
    return fit;
}

} // namespace granular

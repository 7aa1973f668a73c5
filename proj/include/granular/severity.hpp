#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace granular {

struct LogNormalSeverity {
    double mu = 0.0;
    double sigma = 1.0;
};

struct GammaSeverity {
    double shape = 1.0;
    double rate = 1.0;
};

using SeverityFamily = std::variant<LogNormalSeverity, GammaSeverity>;

struct IidSeverity {
    SeverityFamily family;
};

enum class InnovationKind {
    Gaussian,           // additive N(0, sd²), result floored at `floor`
    FirstPaymentFamily, // additive draw from the first-payment distribution
};

/// X_j = α_j X_{j-1} + ε_j for payment order j >= 2; X_1 from `first`.
/// alpha[0] belongs to order 2; orders past the last entry reuse it.
struct OrderAR {
    std::vector<double> alpha;
    SeverityFamily first;
    double innovation_sd = 0.0;
    InnovationKind innovation = InnovationKind::Gaussian;
    double floor = 0.01;

    double alpha_for(std::size_t order) const
    {
        if (alpha.empty()) return 0.0;
        return alpha[std::min(order - 2, alpha.size() - 1)];
    }
};

using SeverityModel = std::variant<IidSeverity, OrderAR>;

enum class SeverityKind { LogNormal, Gamma, Auto, OrderAR };

inline std::string_view to_string(SeverityKind k)
{
    switch (k) {
    case SeverityKind::LogNormal: return "lognormal";
    case SeverityKind::Gamma: return "gamma";
    case SeverityKind::Auto: return "auto";
    case SeverityKind::OrderAR: return "order_ar";
    }
    return "?";
}

inline SeverityKind parse_severity_kind(std::string_view s)
{
    for (auto k : {SeverityKind::LogNormal, SeverityKind::Gamma, SeverityKind::Auto, SeverityKind::OrderAR}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown severity family '" + std::string(s) + "'");
}

inline double family_mean(const SeverityFamily& f)
{
    if (const auto* ln = std::get_if<LogNormalSeverity>(&f)) return std::exp(ln->mu + 0.5 * ln->sigma * ln->sigma);
    const auto& g = std::get<GammaSeverity>(f);
    return g.shape / g.rate;
}

inline double family_variance(const SeverityFamily& f)
{
    if (const auto* ln = std::get_if<LogNormalSeverity>(&f)) {
        const double s2 = ln->sigma * ln->sigma;
        return std::expm1(s2) * std::exp(2.0 * ln->mu + s2);
    }
    const auto& g = std::get<GammaSeverity>(f);
    return g.shape / (g.rate * g.rate);
}

inline double draw_family(const SeverityFamily& f, Rng& rng)
{
    if (const auto* ln = std::get_if<LogNormalSeverity>(&f)) {
        std::normal_distribution<double> z(0.0, 1.0);
        return std::exp(ln->mu + ln->sigma * z(rng));
    }
    const auto& g = std::get<GammaSeverity>(f);
    std::gamma_distribution<double> d(g.shape, 1.0 / g.rate);
    return d(rng);
}

/// Mean payment size under the IID model; for OrderAR the first-payment mean.
inline double severity_mean(const SeverityModel& m)
{
    if (const auto* iid = std::get_if<IidSeverity>(&m)) return family_mean(iid->family);
    return family_mean(std::get<OrderAR>(m).first);
}

/// Where a claim's payment sequence stands: the order of the next payment
/// and the previous amount (only used by OrderAR).
struct SeverityState {
    std::size_t next_order = 1;
    double previous = 0.0;
};

inline std::vector<double> simulate_amounts(const SeverityModel& m, std::size_t n, Rng& rng, SeverityState state = {})
{
    std::vector<double> out;
    out.reserve(n);
    if (const auto* iid = std::get_if<IidSeverity>(&m)) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(draw_family(iid->family, rng));
        return out;
    }
    const auto& ar = std::get<OrderAR>(m);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t order = state.next_order + i;
        double x = 0.0;
        if (order <= 1) {
            x = draw_family(ar.first, rng);
        } else {
            const double eps = ar.innovation == InnovationKind::Gaussian ? ar.innovation_sd * z(rng) : draw_family(ar.first, rng);
            x = std::max(ar.alpha_for(order) * state.previous + eps, ar.floor);
        }
        out.push_back(x);
        state.previous = x;
    }
    return out;
}

struct SeverityFit {
    SeverityModel model;
    double log_likelihood = 0.0;
    std::vector<std::string> parameter_names;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    bool degenerate = false;
    std::size_t excluded_non_positive = 0;
    std::vector<double> frequent_amounts; // identical amounts seen more than 20 times

    double aic() const { return 2.0 * static_cast<double>(estimates.size()) - 2.0 * log_likelihood; }
};

namespace detail {

inline SeverityFit fit_lognormal(std::span<const double> xs)
{
    const auto n = static_cast<double>(xs.size());
    double s = 0.0;
    for (double x : xs) s += std::log(x);
    const double mu = s / n;
    double ss = 0.0, slog = 0.0;
    for (double x : xs) {
        const double d = std::log(x) - mu;
        ss += d * d;
        slog += std::log(x);
    }
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    const double sigma = *lo == *hi ? 0.0 : std::sqrt(ss / n);
    SeverityFit fit;
    fit.model = IidSeverity{LogNormalSeverity{mu, sigma}};
    fit.parameter_names = {"mu", "sigma"};
    fit.estimates = {mu, sigma};
    fit.standard_errors = {sigma / std::sqrt(n), sigma / std::sqrt(2.0 * n)};
    fit.degenerate = !(sigma > 0.0);
    constexpr double half_log_2pi = 0.91893853320467274178;
    fit.log_likelihood = fit.degenerate ? std::numeric_limits<double>::infinity() : -slog - n * std::log(sigma) - n * half_log_2pi - 0.5 * n;
    return fit;
}

inline SeverityFit fit_gamma(std::span<const double> xs)
{
    const auto n = static_cast<double>(xs.size());
    double sum = 0.0, slog = 0.0;
    for (double x : xs) {
        sum += x;
        slog += std::log(x);
    }
    const double mean = sum / n;
    const double s = std::log(mean) - slog / n;
    if (!(s > 1e-12)) throw ModelError("gamma severity fit is degenerate: all amounts are equal");
    // log a - ψ(a) = s has a unique root; bracket around the usual approximation.
    auto g = [s](double a) { return std::log(a) - boost::math::digamma(a) - s; };
    const double a0 = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(g, a0 * 0.5, a0 * 2.0, tol, iters);
    const double shape = 0.5 * (lo + hi);
    const double rate = shape / mean;

    SeverityFit fit;
    fit.model = IidSeverity{GammaSeverity{shape, rate}};
    fit.parameter_names = {"shape", "rate"};
    fit.estimates = {shape, rate};
    // Inverse Fisher information n [[ψ'(a), -1/b], [-1/b, a/b²]].
    const double i11 = boost::math::trigamma(shape);
    const double i12 = -1.0 / rate;
    const double i22 = shape / (rate * rate);
    const double det = n * (i11 * i22 - i12 * i12);
    fit.standard_errors = {std::sqrt(i22 / det), std::sqrt(i11 / det)};
    fit.log_likelihood = n * (shape * std::log(rate) - std::lgamma(shape)) + (shape - 1.0) * slog - rate * sum;
    return fit;
}

inline SeverityFit fit_iid(std::span<const double> xs, SeverityKind kind)
{
    if (kind == SeverityKind::LogNormal) return fit_lognormal(xs);
    if (kind == SeverityKind::Gamma) return fit_gamma(xs);
    SeverityFit ln = fit_lognormal(xs);
    if (ln.degenerate) return ln;
    SeverityFit ga = fit_gamma(xs);
    return ga.aic() < ln.aic() ? ga : ln;
}

} // namespace detail

struct SeverityOptions {
    std::size_t max_order = 5;   // J_max for OrderAR
    std::size_t min_pairs = 50;  // per order
    SeverityKind first_payment = SeverityKind::Auto;
};

/// Fits payment amounts. `amounts_by_claim[i]` holds claim i's payments in
/// order. IID families pool every positive amount; OrderAR estimates α_j by
/// least squares through the origin on consecutive pairs of each order.
inline SeverityFit fit_severity(const std::vector<std::vector<double>>& amounts_by_claim, SeverityKind kind,
                                Diagnostics* diag = nullptr, const SeverityOptions& opt = {})
{
    std::vector<double> positive;
    std::map<double, std::size_t> tally;
    std::size_t excluded = 0;
    for (const auto& claim : amounts_by_claim) {
        for (double x : claim) {
            if (x > 0.0) {
                positive.push_back(x);
                ++tally[x];
            } else {
                ++excluded;
            }
        }
    }
    if (excluded > 0) warn(diag, "severity: " + std::to_string(excluded) + " non-positive amounts excluded");

    SeverityFit fit;
    if (kind != SeverityKind::OrderAR) {
        if (positive.size() < 50) {
            throw ModelError("severity fit needs at least 50 positive amounts, got " + std::to_string(positive.size()));
        }
        fit = detail::fit_iid(positive, kind);
    } else {
        std::vector<double> firsts;
        for (const auto& claim : amounts_by_claim) {
            if (!claim.empty() && claim.front() > 0.0) firsts.push_back(claim.front());
        }
        if (firsts.size() < 50) throw ModelError("order_ar severity needs at least 50 first payments");
        SeverityFit first = detail::fit_iid(firsts, opt.first_payment);

        OrderAR ar;
        ar.first = std::get<IidSeverity>(first.model).family;
        std::size_t max_seen = 0;
        for (const auto& claim : amounts_by_claim) max_seen = std::max(max_seen, claim.size());
        const std::size_t j_max = std::clamp<std::size_t>(max_seen, 2, std::max<std::size_t>(2, opt.max_order));

        double rss = 0.0;
        std::size_t pairs_total = 0;
        for (std::size_t order = 2; order <= j_max; ++order) {
            double sxy = 0.0, sxx = 0.0;
            std::size_t pairs = 0;
            for (const auto& claim : amounts_by_claim) {
                if (claim.size() >= order) {
                    sxy += claim[order - 2] * claim[order - 1];
                    sxx += claim[order - 2] * claim[order - 2];
                    ++pairs;
                }
            }
            if (pairs < opt.min_pairs || !(sxx > 0.0)) {
                if (order == 2) throw ModelError("order_ar severity needs at least " + std::to_string(opt.min_pairs) + " second payments");
                warn(diag, "severity: order " + std::to_string(order) + " has " + std::to_string(pairs) +
                               " pairs; it and later orders inherit the previous alpha");
                ar.alpha.push_back(ar.alpha.back());
                break;
            }
            const double alpha = sxy / sxx;
            ar.alpha.push_back(alpha);
            for (const auto& claim : amounts_by_claim) {
                if (claim.size() >= order) {
                    const double r = claim[order - 1] - alpha * claim[order - 2];
                    rss += r * r;
                    ++pairs_total;
                }
            }
        }
        ar.innovation_sd = pairs_total > 0 ? std::sqrt(rss / static_cast<double>(pairs_total)) : 0.0;
        fit.model = ar;
        fit.parameter_names = first.parameter_names;
        fit.estimates = first.estimates;
        fit.standard_errors = first.standard_errors;
        for (std::size_t j = 0; j < ar.alpha.size(); ++j) {
            fit.parameter_names.push_back("alpha_" + std::to_string(j + 2));
            fit.estimates.push_back(ar.alpha[j]);
        }
        fit.parameter_names.push_back("innovation_sd");
        fit.estimates.push_back(ar.innovation_sd);
        fit.log_likelihood = first.log_likelihood;
        fit.degenerate = first.degenerate || ar.innovation_sd == 0.0;
    }
    if (fit.degenerate) warn(diag, "severity: degenerate fit (zero dispersion)");
    fit.excluded_non_positive = excluded;
    for (const auto& [x, count] : tally) {
        if (count > 20) fit.frequent_amounts.push_back(x);
    }
    if (!fit.frequent_amounts.empty()) {
        warn(diag, "severity: " + std::to_string(fit.frequent_amounts.size()) + " amounts occur more than 20 times identically");
    }
    return fit;
}

struct NormalScorePair {
    double x = 0.0;
    double y = 0.0;
    double score_x = 0.0;
    double score_y = 0.0;
};

namespace detail {

// F̂(x_i) · n/(n+1) = (#{x_k <= x_i}) / (n + 1)
inline std::vector<double> rescaled_ecdf(std::span<const double> xs)
{
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out(xs.size());
    const auto denom = static_cast<double>(xs.size()) + 1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto le = std::upper_bound(sorted.begin(), sorted.end(), xs[i]) - sorted.begin();
        out[i] = static_cast<double>(le) / denom;
    }
    return out;
}

} // namespace detail

/// Φ^{-1}(F̂_j(X_j)) against Φ^{-1}(F̂_k(X_k)) for paired payments of two orders.
inline std::vector<NormalScorePair> normal_scores(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size()) throw DataError("normal_scores: paired samples differ in length");
    const auto ux = detail::rescaled_ecdf(xs);
    const auto uy = detail::rescaled_ecdf(ys);
    std::vector<NormalScorePair> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = {xs[i], ys[i], stats::normal_quantile(ux[i]), stats::normal_quantile(uy[i])};
    }
    return out;
}

/// Pairs (X_j, X_k) from every claim with at least max(j, k) payments (orders 1-based).
inline std::pair<std::vector<double>, std::vector<double>> payment_order_pairs(
    const std::vector<std::vector<double>>& amounts_by_claim, std::size_t j, std::size_t k)
{
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& claim : amounts_by_claim) {
        if (claim.size() >= std::max(j, k)) {
            out.first.push_back(claim[j - 1]);
            out.second.push_back(claim[k - 1]);
        }
    }
    return out;
}

} // namespace granular

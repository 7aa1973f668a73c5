#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "claims.hpp"
#include "error.hpp"
#include "optimize.hpp"
#include "random.hpp"

namespace granular {

/// Weibull reporting delay (days) with constant shape and scale
/// exp(c0 + c1 * years_since_epoch(t)). c1 <= 0 keeps E[W | t] non-increasing.
struct WeibullTV {
    double shape = 1.0;
    double c0 = 3.0;
    double c1 = 0.0;

    double scale_at(double t_day) const { return std::exp(c0 + c1 * years_since_epoch(t_day)); }
};

/// Per-accident-year empirical delay distributions. Small years share the
/// cohort of a neighbour through `cohort_of_year`.
struct EmpiricalCohort {
    int first_year = 2000;
    std::vector<std::size_t> cohort_of_year;
    std::vector<std::vector<double>> cohorts; // sorted delays in days
};

using DelayModel = std::variant<WeibullTV, EmpiricalCohort>;

enum class DelayFamily { WeibullTV, EmpiricalCohort };

inline std::string_view to_string(DelayFamily f)
{
    return f == DelayFamily::WeibullTV ? "weibull_tv" : "empirical_cohort";
}

inline DelayFamily parse_delay_family(std::string_view s)
{
    if (s == "weibull_tv") return DelayFamily::WeibullTV;
    if (s == "empirical_cohort") return DelayFamily::EmpiricalCohort;
    throw DataError("unknown delay family '" + std::string(s) + "'");
}

namespace detail {

inline const std::vector<double>& cohort_for(const EmpiricalCohort& m, double t_day, Diagnostics* diag)
{
    if (m.cohorts.empty()) throw ModelError("empirical delay model has no cohorts");
    const int year = calendar_year(static_cast<Day>(std::floor(t_day)));
    const int last = m.first_year + static_cast<int>(m.cohort_of_year.size()) - 1;
    if (year < m.first_year || year > last) {
        warn(diag, "delay: accident year " + std::to_string(year) + " outside fitted cohorts; using nearest cohort");
    }
    const int idx = std::clamp(year - m.first_year, 0, static_cast<int>(m.cohort_of_year.size()) - 1);
    return m.cohorts[m.cohort_of_year[static_cast<std::size_t>(idx)]];
}

} // namespace detail

/// H_t(w) = P[W <= w | T = t].
inline double delay_cdf(const DelayModel& m, double t_day, double w, Diagnostics* diag = nullptr)
{
    if (w < 0.0) return 0.0;
    if (const auto* wb = std::get_if<WeibullTV>(&m)) {
        return -std::expm1(-std::pow(w / wb->scale_at(t_day), wb->shape));
    }
    const auto& xs = detail::cohort_for(std::get<EmpiricalCohort>(m), t_day, diag);
    const auto le = std::upper_bound(xs.begin(), xs.end(), w) - xs.begin();
    return static_cast<double>(le) / static_cast<double>(xs.size());
}

inline double delay_survival(const DelayModel& m, double t_day, double w)
{
    if (const auto* wb = std::get_if<WeibullTV>(&m)) {
        if (w <= 0.0) return 1.0;
        return std::exp(-std::pow(w / wb->scale_at(t_day), wb->shape));
    }
    return 1.0 - delay_cdf(m, t_day, w);
}

/// h_t(w) = dH_t/dw. Only the parametric variant has a density.
inline double delay_density(const DelayModel& m, double t_day, double w)
{
    const auto* wb = std::get_if<WeibullTV>(&m);
    if (wb == nullptr) {
        throw ModelError("empirical cohort delays have no density; fit the smooth weibull_tv variant instead");
    }
    if (w < 0.0) return 0.0;
    const double lam = wb->scale_at(t_day);
    const double k = wb->shape;
    if (w == 0.0) {
        if (k == 1.0) return 1.0 / lam;
        return k < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    const double z = std::pow(w / lam, k);
    return k / w * z * std::exp(-z);
}

inline double delay_quantile(const DelayModel& m, double t_day, double u)
{
    if (const auto* wb = std::get_if<WeibullTV>(&m)) {
        return wb->scale_at(t_day) * std::pow(-std::log1p(-u), 1.0 / wb->shape);
    }
    const auto& xs = detail::cohort_for(std::get<EmpiricalCohort>(m), t_day, nullptr);
    const auto n = xs.size();
    const auto idx = std::min(n - 1, static_cast<std::size_t>(std::ceil(u * static_cast<double>(n))) - (u > 0.0 ? 1 : 0));
    return xs[idx];
}

inline double delay_mean(const DelayModel& m, double t_day)
{
    if (const auto* wb = std::get_if<WeibullTV>(&m)) {
        return wb->scale_at(t_day) * std::tgamma(1.0 + 1.0 / wb->shape);
    }
    const auto& xs = detail::cohort_for(std::get<EmpiricalCohort>(m), t_day, nullptr);
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Inverse-cdf draw; the empirical variant resamples observed delays.
inline double simulate_delay(const DelayModel& m, double t_day, Rng& rng)
{
    return delay_quantile(m, t_day, uniform_open(rng));
}

struct DelayObservation {
    double t_day = 0.0;  // accident date
    double w_days = 0.0; // whole days; the true delay lies in [w, w + 1)
    // Largest whole-day delay that could have been observed (data cutoff
    // minus accident date). Infinite when the sample is not truncated.
    double max_w_days = std::numeric_limits<double>::infinity();
};

struct DelayFit {
    DelayModel model;
    double log_likelihood = 0.0;
    std::vector<std::string> parameter_names;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    bool trend_fixed = false; // c1 pinned to 0 (constraint active or unidentified)

    double aic() const { return 2.0 * static_cast<double>(estimates.size()) - 2.0 * log_likelihood; }
};

namespace detail {

// log(H(w + 1) - H(w)) for a Weibull with scale lam and shape k.
inline double weibull_interval_logprob(double log_w, double log_w1, double log_lam, double k)
{
    const double a = std::isfinite(log_w) ? std::exp(k * (log_w - log_lam)) : 0.0;
    const double b = std::exp(k * (log_w1 - log_lam));
    return -a + std::log(-std::expm1(-(b - a)));
}

struct WeibullData {
    std::vector<double> t_years;
    std::vector<double> log_w;
    std::vector<double> log_w1;
    std::vector<double> log_trunc1; // log(max_w + 1); +inf when untruncated

    explicit WeibullData(std::span<const DelayObservation> obs)
    {
        t_years.reserve(obs.size());
        log_trunc1.reserve(obs.size());
        log_w.reserve(obs.size());
        log_w1.reserve(obs.size());
        for (const auto& o : obs) {
            if (o.w_days < 0.0) throw DataError("negative reporting delay");
            t_years.push_back(years_since_epoch(o.t_day));
            log_w.push_back(o.w_days > 0.0 ? std::log(o.w_days) : -std::numeric_limits<double>::infinity());
            log_w1.push_back(std::log(o.w_days + 1.0));
            if (o.w_days > o.max_w_days) throw DataError("reporting delay beyond its truncation point");
            log_trunc1.push_back(std::log(o.max_w_days + 1.0));
        }
    }

    double nll(double shape, double c0, double c1) const
    {
        if (!(shape > 0.0) || !std::isfinite(c0) || !std::isfinite(c1)) return std::numeric_limits<double>::infinity();
        double s = 0.0;
        for (std::size_t i = 0; i < t_years.size(); ++i) {
            const double log_lam = c0 + c1 * t_years[i];
            s -= weibull_interval_logprob(log_w[i], log_w1[i], log_lam, shape);
            if (std::isfinite(log_trunc1[i])) {
                s += std::log(-std::expm1(-std::exp(shape * (log_trunc1[i] - log_lam))));
            }
        }
        return s;
    }
};

} // namespace detail

/// Interval-censored ML fit of the time-varying Weibull (delays recorded in
/// whole days), conditioned on each claim having been reported by the cutoff.
/// A positive trend estimate is projected onto c1 = 0.
inline DelayFit fit_weibull_tv(std::span<const DelayObservation> obs, Diagnostics* diag = nullptr)
{
    if (obs.size() < 100) {
        throw ModelError("delay fit needs at least 100 reported claims, got " + std::to_string(obs.size()));
    }
    const detail::WeibullData data(obs);
    double t_mean = 0.0, w_mean = 0.0;
    int first_year = calendar_year(static_cast<Day>(obs.front().t_day));
    bool single_year = true;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        t_mean += data.t_years[i];
        w_mean += obs[i].w_days + 0.5;
        single_year = single_year && calendar_year(static_cast<Day>(obs[i].t_day)) == first_year;
    }
    t_mean /= static_cast<double>(obs.size());
    w_mean /= static_cast<double>(obs.size());

    // Optimize over (log shape, centred intercept, slope).
    auto nll_centred = [&](std::span<const double> x) {
        const double c1 = x.size() > 2 ? x[2] : 0.0;
        return data.nll(std::exp(x[0]), x[1] - c1 * t_mean, c1);
    };

    DelayFit fit;
    std::vector<double> x;
    if (!single_year) {
        const auto res = optim::nelder_mead(nll_centred, {0.0, std::log(w_mean), 0.0}, {0.3, 0.3, 0.05});
        if (!res.converged) throw ModelError("weibull_tv delay fit did not converge");
        x = res.x;
        if (x[2] > 0.0) {
            warn(diag, "delay: fitted trend is increasing; projected onto c1 = 0 (decreasing-mean constraint)");
            x.clear();
        }
    } else {
        warn(diag, "delay: single accident year, trend c1 unidentified and fixed to 0");
    }
    if (x.empty()) {
        fit.trend_fixed = true;
        const auto res = optim::nelder_mead(nll_centred, {0.0, std::log(w_mean)}, {0.3, 0.3});
        if (!res.converged) throw ModelError("weibull_tv delay fit did not converge");
        x = {res.x[0], res.x[1], 0.0};
    }

    const WeibullTV model{std::exp(x[0]), x[1] - x[2] * t_mean, x[2]};
    fit.model = model;
    fit.log_likelihood = -data.nll(model.shape, model.c0, model.c1);
    if (fit.trend_fixed) {
        fit.parameter_names = {"shape", "c0"};
        fit.estimates = {model.shape, model.c0};
        auto nll = [&](std::span<const double> p) { return data.nll(p[0], p[1], 0.0); };
        fit.standard_errors = optim::standard_errors(nll, fit.estimates);
    } else {
        fit.parameter_names = {"shape", "c0", "c1"};
        fit.estimates = {model.shape, model.c0, model.c1};
        // Hessian in centred coordinates is well conditioned; map back via
        // c0 = c0' - c1 * t_mean.
        auto nll = [&](std::span<const double> p) { return data.nll(p[0], p[1] - p[2] * t_mean, p[2]); };
        const double centred[3] = {model.shape, model.c0 + model.c1 * t_mean, model.c1};
        const Eigen::MatrixXd H = optim::numerical_hessian(nll, centred);
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXd cov_c = llt.solve(Eigen::MatrixXd::Identity(3, 3));
            Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
            J(1, 2) = -t_mean;
            const Eigen::Matrix3d cov = J * cov_c * J.transpose();
            fit.standard_errors = {std::sqrt(cov(0, 0)), std::sqrt(cov(1, 1)), std::sqrt(cov(2, 2))};
        }
    }
    return fit;
}

inline EmpiricalCohort fit_empirical_cohort(std::span<const DelayObservation> obs, Diagnostics* diag = nullptr,
                                            std::size_t min_cohort = 30)
{
    if (obs.empty()) throw ModelError("empirical delay fit needs observations");
    std::map<int, std::vector<double>> by_year;
    for (const auto& o : obs) by_year[calendar_year(static_cast<Day>(o.t_day))].push_back(o.w_days);

    EmpiricalCohort m;
    m.first_year = by_year.begin()->first;
    const int last_year = by_year.rbegin()->first;
    m.cohort_of_year.assign(static_cast<std::size_t>(last_year - m.first_year + 1), 0);

    std::vector<std::vector<double>> cohorts;
    std::vector<int> cohort_start;
    for (auto& [year, xs] : by_year) {
        const bool merge = !cohorts.empty() && (cohorts.back().size() < min_cohort || xs.size() < min_cohort);
        if (merge) {
            warn(diag, "delay: cohort " + std::to_string(year) + " merged with neighbour (fewer than " +
                           std::to_string(min_cohort) + " claims)");
            cohorts.back().insert(cohorts.back().end(), xs.begin(), xs.end());
        } else {
            cohorts.push_back(xs);
            cohort_start.push_back(year);
        }
    }
    for (std::size_t c = 0; c < cohorts.size(); ++c) {
        std::sort(cohorts[c].begin(), cohorts[c].end());
        const int lo = cohort_start[c];
        const int hi = c + 1 < cohorts.size() ? cohort_start[c + 1] - 1 : last_year;
        for (int y = lo; y <= hi; ++y) m.cohort_of_year[static_cast<std::size_t>(y - m.first_year)] = c;
    }
    m.cohorts = std::move(cohorts);
    return m;
}

inline std::vector<DelayObservation> delay_observations(const Portfolio& p)
{
    std::vector<DelayObservation> obs;
    obs.reserve(p.claims.size());
    for (const auto& c : p.claims) {
        obs.push_back({static_cast<double>(c.accident_date), static_cast<double>(c.reporting_delay()),
                       static_cast<double>(p.data_cutoff - c.accident_date)});
    }
    return obs;
}

inline DelayFit fit_delay(std::span<const DelayObservation> obs, DelayFamily family, Diagnostics* diag = nullptr)
{
    if (family == DelayFamily::WeibullTV) return fit_weibull_tv(obs, diag);
    if (obs.size() < 100) {
        throw ModelError("delay fit needs at least 100 reported claims, got " + std::to_string(obs.size()));
    }
    DelayFit fit;
    auto m = fit_empirical_cohort(obs, diag);
    double ll = 0.0;
    for (const auto& o : obs) {
        const double p = delay_cdf(m, o.t_day, o.w_days) - delay_cdf(m, o.t_day, o.w_days - 0.5);
        ll += std::log(std::max(p, 1e-300));
    }
    fit.log_likelihood = ll;
    fit.model = std::move(m);
    return fit;
}

inline DelayFit fit_delay(const Portfolio& p, DelayFamily family, Diagnostics* diag = nullptr)
{
    const auto obs = delay_observations(p);
    return fit_delay(obs, family, diag);
}

} // namespace granular

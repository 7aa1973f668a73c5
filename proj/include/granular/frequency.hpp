#pragma once

#include <cmath>
#include <limits>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "claims.hpp"
#include "error.hpp"
#include "optimize.hpp"
#include "random.hpp"

namespace granular {

struct PoissonCount {
    double mean = 1.0;
};

/// pmf(k) = Γ(k + size) / (Γ(size) k!) · prob^size · (1 - prob)^k
struct NegativeBinomialCount {
    double size = 1.0;
    double prob = 0.5;
};

struct ZeroModifiedCount {
    std::variant<PoissonCount, NegativeBinomialCount> base;
    double zero_mass = 0.0;
};

/// Degenerate distribution at a fixed value.
struct PointMassCount {
    std::int64_t value = 1;
};

using CountDistribution = std::variant<PoissonCount, NegativeBinomialCount, ZeroModifiedCount, PointMassCount>;

enum class CountFamily { Poisson, NegativeBinomial, ZeroModifiedPoisson, ZeroModifiedNegativeBinomial };

inline std::string_view to_string(CountFamily f)
{
    switch (f) {
    case CountFamily::Poisson: return "poisson";
    case CountFamily::NegativeBinomial: return "negative_binomial";
    case CountFamily::ZeroModifiedPoisson: return "zero_modified_poisson";
    case CountFamily::ZeroModifiedNegativeBinomial: return "zero_modified_negative_binomial";
    }
    return "?";
}

inline CountFamily parse_count_family(std::string_view s)
{
    for (auto f : {CountFamily::Poisson, CountFamily::NegativeBinomial, CountFamily::ZeroModifiedPoisson,
                   CountFamily::ZeroModifiedNegativeBinomial}) {
        if (to_string(f) == s) return f;
    }
    throw DataError("unknown count family '" + std::string(s) + "'");
}

namespace detail {

inline double poisson_log_pmf(double mean, std::int64_t k)
{
    if (mean <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const auto kd = static_cast<double>(k);
    return kd * std::log(mean) - mean - std::lgamma(kd + 1.0);
}

inline double nb_log_pmf(double size, double prob, std::int64_t k)
{
    const auto kd = static_cast<double>(k);
    return std::lgamma(kd + size) - std::lgamma(size) - std::lgamma(kd + 1.0) + size * std::log(prob) +
           kd * std::log1p(-prob);
}

inline double base_log_pmf(const std::variant<PoissonCount, NegativeBinomialCount>& b, std::int64_t k)
{
    if (const auto* p = std::get_if<PoissonCount>(&b)) return poisson_log_pmf(p->mean, k);
    const auto& nb = std::get<NegativeBinomialCount>(b);
    return nb_log_pmf(nb.size, nb.prob, k);
}

inline void validate(const CountDistribution& d)
{
    std::visit(
        [](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PoissonCount>) {
                if (!(v.mean > 0.0)) throw ModelError("Poisson mean must be positive");
            } else if constexpr (std::is_same_v<T, NegativeBinomialCount>) {
                if (!(v.size > 0.0) || !(v.prob > 0.0 && v.prob < 1.0))
                    throw ModelError("negative binomial requires size > 0 and prob in (0,1)");
            } else if constexpr (std::is_same_v<T, ZeroModifiedCount>) {
                if (!(v.zero_mass >= 0.0 && v.zero_mass < 1.0)) throw ModelError("zero mass must lie in [0,1)");
                std::visit([](const auto& b) { validate(CountDistribution{b}); }, v.base);
            } else {
                if (v.value < 0) throw ModelError("point mass must be non-negative");
            }
        },
        d);
}

} // namespace detail

using detail::validate;

inline double count_log_pmf(const CountDistribution& d, std::int64_t k)
{
    if (k < 0) return -std::numeric_limits<double>::infinity();
    return std::visit(
        [k](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PoissonCount>) {
                return detail::poisson_log_pmf(v.mean, k);
            } else if constexpr (std::is_same_v<T, NegativeBinomialCount>) {
                return detail::nb_log_pmf(v.size, v.prob, k);
            } else if constexpr (std::is_same_v<T, ZeroModifiedCount>) {
                if (k == 0) return std::log(v.zero_mass);
                const double base0 = std::exp(detail::base_log_pmf(v.base, 0));
                return std::log1p(-v.zero_mass) + detail::base_log_pmf(v.base, k) - std::log1p(-base0);
            } else {
                return k == v.value ? 0.0 : -std::numeric_limits<double>::infinity();
            }
        },
        d);
}

inline double pmf(const CountDistribution& d, std::int64_t k)
{
    return std::exp(count_log_pmf(d, k));
}

inline double count_mean(const CountDistribution& d)
{
    return std::visit(
        [](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PoissonCount>) {
                return v.mean;
            } else if constexpr (std::is_same_v<T, NegativeBinomialCount>) {
                return v.size * (1.0 - v.prob) / v.prob;
            } else if constexpr (std::is_same_v<T, ZeroModifiedCount>) {
                const double base_mean = count_mean(std::visit([](const auto& b) { return CountDistribution{b}; }, v.base));
                const double base0 = std::exp(detail::base_log_pmf(v.base, 0));
                return (1.0 - v.zero_mass) * base_mean / (1.0 - base0);
            } else {
                return static_cast<double>(v.value);
            }
        },
        d);
}

inline double count_variance(const CountDistribution& d)
{
    return std::visit(
        [](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PoissonCount>) {
                return v.mean;
            } else if constexpr (std::is_same_v<T, NegativeBinomialCount>) {
                return v.size * (1.0 - v.prob) / (v.prob * v.prob);
            } else if constexpr (std::is_same_v<T, ZeroModifiedCount>) {
                const CountDistribution base = std::visit([](const auto& b) { return CountDistribution{b}; }, v.base);
                const double m = count_mean(base);
                const double second = count_variance(base) + m * m;
                const double base0 = std::exp(detail::base_log_pmf(v.base, 0));
                const double scale = (1.0 - v.zero_mass) / (1.0 - base0);
                const double mean = scale * m;
                return scale * second - mean * mean;
            } else {
                return 0.0;
            }
        },
        d);
}

namespace detail {

inline std::int64_t sample_base(const std::variant<PoissonCount, NegativeBinomialCount>& b, Rng& rng)
{
    if (const auto* p = std::get_if<PoissonCount>(&b)) return poisson_draw(p->mean, rng);
    const auto& nb = std::get<NegativeBinomialCount>(b);
    std::gamma_distribution<double> g(nb.size, (1.0 - nb.prob) / nb.prob);
    return poisson_draw(g(rng), rng);
}

} // namespace detail

inline std::int64_t sample_count(const CountDistribution& d, Rng& rng)
{
    return std::visit(
        [&rng](const auto& v) -> std::int64_t {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PoissonCount> || std::is_same_v<T, NegativeBinomialCount>) {
                return detail::sample_base(v, rng);
            } else if constexpr (std::is_same_v<T, ZeroModifiedCount>) {
                if (uniform_open(rng) < v.zero_mass) return 0;
                for (int attempt = 0; attempt < 100000; ++attempt) {
                    const auto k = detail::sample_base(v.base, rng);
                    if (k > 0) return k;
                }
                return 1;
            } else {
                return v.value;
            }
        },
        d);
}

struct CountFit {
    CountDistribution distribution;
    double log_likelihood = 0.0;
    std::vector<std::string> parameter_names;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    bool at_boundary = false;

    double aic() const { return 2.0 * static_cast<double>(estimates.size()) - 2.0 * log_likelihood; }
};

namespace detail {

using CountTable = std::map<std::int64_t, double>;

inline CountTable tabulate(std::span<const std::int64_t> xs)
{
    CountTable t;
    for (auto x : xs) {
        if (x < 0) throw DataError("count observations must be non-negative");
        t[x] += 1.0;
    }
    return t;
}

inline double table_loglik(const CountTable& t, const CountDistribution& d)
{
    double ll = 0.0;
    for (const auto& [k, c] : t) ll += c * count_log_pmf(d, k);
    return ll;
}

// Zero-truncated log-likelihood of the positive part.
inline double truncated_loglik(const CountTable& t, const std::variant<PoissonCount, NegativeBinomialCount>& b)
{
    const double log_pos = std::log1p(-std::exp(base_log_pmf(b, 0)));
    double ll = 0.0;
    for (const auto& [k, c] : t) {
        if (k > 0) ll += c * (base_log_pmf(b, k) - log_pos);
    }
    return ll;
}

struct NbFitCore {
    NegativeBinomialCount nb;
    std::vector<double> se;
    bool at_boundary = false;
};

inline constexpr double kMinNbSize = 1e-4;
inline constexpr double kMaxNbSize = 1e6;

inline NbFitCore fit_nb_full(const CountTable& t, double mean)
{
    // Profile: for fixed size the ML prob is size / (size + mean).
    auto nll_profile = [&](double log_size) {
        const double r = std::exp(log_size);
        const CountDistribution d = NegativeBinomialCount{r, r / (r + mean)};
        return -table_loglik(t, d);
    };
    const auto best = optim::minimize_scalar(nll_profile, std::log(kMinNbSize), std::log(kMaxNbSize));
    NbFitCore out;
    const double r = std::exp(best.x);
    out.nb = {r, r / (r + mean)};
    out.at_boundary = best.at_lower || best.at_upper;
    auto nll = [&](std::span<const double> x) {
        if (x[0] <= 0.0 || x[1] <= 0.0 || x[1] >= 1.0) return std::numeric_limits<double>::infinity();
        return -table_loglik(t, NegativeBinomialCount{x[0], x[1]});
    };
    const double pt[2] = {out.nb.size, out.nb.prob};
    out.se = optim::standard_errors(nll, pt);
    return out;
}

inline NbFitCore fit_nb_truncated(const CountTable& t, double positive_mean)
{
    auto nll = [&](std::span<const double> x) {
        if (x[0] < std::log(kMinNbSize) || x[0] > std::log(kMaxNbSize)) return std::numeric_limits<double>::infinity();
        const double r = std::exp(x[0]);
        const double p = 1.0 / (1.0 + std::exp(-x[1]));
        return -truncated_loglik(t, NegativeBinomialCount{r, p});
    };
    // Start from the untruncated profile solution.
    const double r0 = 1.0;
    const double p0 = r0 / (r0 + positive_mean);
    const auto res = optim::nelder_mead(nll, {std::log(r0), std::log(p0 / (1.0 - p0))}, {0.5, 0.5});
    if (!res.converged) throw ModelError("zero-truncated negative binomial fit did not converge");
    NbFitCore out;
    out.nb = {std::exp(res.x[0]), 1.0 / (1.0 + std::exp(-res.x[1]))};
    out.at_boundary = std::abs(res.x[0] - std::log(kMaxNbSize)) < 1e-3 || std::abs(res.x[0] - std::log(kMinNbSize)) < 1e-3;
    auto nll_nat = [&](std::span<const double> x) {
        if (x[0] <= 0.0 || x[1] <= 0.0 || x[1] >= 1.0) return std::numeric_limits<double>::infinity();
        return -truncated_loglik(t, NegativeBinomialCount{x[0], x[1]});
    };
    const double pt[2] = {out.nb.size, out.nb.prob};
    out.se = optim::standard_errors(nll_nat, pt);
    return out;
}

// Zero-truncated Poisson: positive-sample mean m+ = μ / (1 - e^{-μ}).
inline double fit_ztp_mean(double positive_mean)
{
    if (!(positive_mean > 1.0)) {
        throw ModelError("zero-truncated Poisson fit is degenerate: every positive observation equals 1");
    }
    auto g = [positive_mean](double mu) { return mu / (-std::expm1(-mu)) - positive_mean; };
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(g, 1e-12, positive_mean + 1.0, tol, iters);
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Maximum-likelihood fit of a count family. Poisson is closed form; the
/// zero-modified likelihood factorizes into the zero share and a
/// zero-truncated base fit.
inline CountFit fit_count_mle(std::span<const std::int64_t> observations, CountFamily family)
{
    if (observations.size() < 10) {
        throw ModelError("count fit needs at least 10 observations, got " + std::to_string(observations.size()));
    }
    const auto table = detail::tabulate(observations);
    const auto n = static_cast<double>(observations.size());
    double sum = 0.0;
    for (const auto& [k, c] : table) sum += static_cast<double>(k) * c;
    const double mean = sum / n;
    const double zeros = table.count(0) ? table.at(0) : 0.0;

    CountFit fit;
    switch (family) {
    case CountFamily::Poisson: {
        if (mean <= 0.0) throw ModelError("Poisson fit is degenerate: all observations are zero");
        fit.distribution = PoissonCount{mean};
        fit.parameter_names = {"mean"};
        fit.estimates = {mean};
        fit.standard_errors = {std::sqrt(mean / n)};
        break;
    }
    case CountFamily::NegativeBinomial: {
        if (mean <= 0.0) throw ModelError("negative binomial fit is degenerate: all observations are zero");
        const auto core = detail::fit_nb_full(table, mean);
        fit.distribution = core.nb;
        fit.parameter_names = {"size", "prob"};
        fit.estimates = {core.nb.size, core.nb.prob};
        fit.standard_errors = core.se;
        fit.at_boundary = core.at_boundary;
        break;
    }
    case CountFamily::ZeroModifiedPoisson:
    case CountFamily::ZeroModifiedNegativeBinomial: {
        const double positives = n - zeros;
        if (positives < 2.0) throw ModelError("zero-modified fit needs at least two positive observations");
        const double p0 = zeros / n;
        const double pos_mean = sum / positives;
        ZeroModifiedCount zm;
        zm.zero_mass = p0;
        const double p0_se = std::sqrt(p0 * (1.0 - p0) / n);
        if (family == CountFamily::ZeroModifiedPoisson) {
            const double mu = detail::fit_ztp_mean(pos_mean);
            zm.base = PoissonCount{mu};
            // Fisher information of the zero-truncated Poisson mean.
            const double e = std::exp(-mu);
            const double info = positives * (1.0 / (mu * (1.0 - e)) - e / ((1.0 - e) * (1.0 - e)));
            fit.parameter_names = {"mean", "zero_mass"};
            fit.estimates = {mu, p0};
            fit.standard_errors = {info > 0.0 ? 1.0 / std::sqrt(info) : NAN, p0_se};
        } else {
            const auto core = detail::fit_nb_truncated(table, pos_mean);
            zm.base = core.nb;
            fit.parameter_names = {"size", "prob", "zero_mass"};
            fit.estimates = {core.nb.size, core.nb.prob, p0};
            fit.standard_errors = core.se.empty() ? std::vector<double>{} : std::vector<double>{core.se[0], core.se[1], p0_se};
            fit.at_boundary = core.at_boundary;
        }
        fit.distribution = zm;
        break;
    }
    }
    fit.log_likelihood = detail::table_loglik(table, fit.distribution);
    return fit;
}

struct DateDifference {
    int year = 0;            // calendar year of the previous accident
    std::int64_t days = 0;   // non-negative gap in days
};

/// Gaps between consecutive accident dates, with T_0 = day 0 (2000-01-01).
inline std::vector<DateDifference> date_differences(std::span<const Day> sorted_accident_days)
{
    if (sorted_accident_days.size() < 2) {
        throw ModelError("date differences need at least two claims");
    }
    std::vector<DateDifference> out;
    out.reserve(sorted_accident_days.size());
    Day prev = 0;
    for (Day t : sorted_accident_days) {
        if (t < prev) throw DataError("accident dates must be chronologically ordered and on or after 2000-01-01");
        out.push_back({calendar_year(prev), static_cast<std::int64_t>(t - prev)});
        prev = t;
    }
    return out;
}

inline std::vector<DateDifference> date_differences(const Portfolio& p)
{
    std::vector<Day> days;
    days.reserve(p.claims.size());
    for (const auto& c : p.claims) days.push_back(c.accident_date);
    return date_differences(days);
}

/// Piecewise-constant (per calendar year) distribution of accident-date gaps.
struct OccurrenceModel {
    int first_year = 2000;
    std::vector<CountDistribution> by_year;

    const CountDistribution& for_year(int year) const
    {
        if (by_year.empty()) throw ModelError("occurrence model is empty");
        const int idx = std::clamp(year - first_year, 0, static_cast<int>(by_year.size()) - 1);
        return by_year[static_cast<std::size_t>(idx)];
    }
};

struct OccurrenceGroupFit {
    int first_year = 0;
    int last_year = 0;
    CountFit fit;
};

struct OccurrenceFit {
    OccurrenceModel model;
    std::vector<OccurrenceGroupFit> groups;
    double log_likelihood = 0.0;
};

/// Fits one count distribution per calendar year. Consecutive years are
/// pooled until a group holds at least `min_per_year` gaps.
inline OccurrenceFit fit_occurrence(std::span<const DateDifference> diffs, CountFamily family, Diagnostics* diag = nullptr,
                                    std::size_t min_per_year = 30)
{
    if (diffs.empty()) throw ModelError("occurrence fit needs date differences");
    std::map<int, std::vector<std::int64_t>> by_year;
    for (const auto& d : diffs) by_year[d.year].push_back(d.days);

    struct Group {
        int first = 0;
        std::vector<std::int64_t> xs;
    };
    std::vector<Group> groups;
    Group open;
    bool has_open = false;
    for (auto& [year, xs] : by_year) {
        if (!has_open) {
            open = Group{year, {}};
            has_open = true;
        }
        open.xs.insert(open.xs.end(), xs.begin(), xs.end());
        if (open.xs.size() >= min_per_year) {
            groups.push_back(std::move(open));
            has_open = false;
        }
    }
    if (has_open) {
        if (groups.empty()) {
            groups.push_back(std::move(open));
        } else {
            auto& last = groups.back().xs;
            last.insert(last.end(), open.xs.begin(), open.xs.end());
        }
    }
    if (groups.size() < by_year.size()) {
        warn(diag, "occurrence: years with fewer than " + std::to_string(min_per_year) +
                       " gaps were pooled with neighbouring years");
    }

    OccurrenceFit fit;
    fit.model.first_year = by_year.begin()->first;
    const int last_year = by_year.rbegin()->first;
    fit.model.by_year.resize(static_cast<std::size_t>(last_year - fit.model.first_year + 1));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const int lo = groups[g].first;
        const int hi = g + 1 < groups.size() ? groups[g + 1].first - 1 : last_year;
        CountFit cf = fit_count_mle(groups[g].xs, family);
        fit.log_likelihood += cf.log_likelihood;
        for (int y = lo; y <= hi; ++y) {
            fit.model.by_year[static_cast<std::size_t>(y - fit.model.first_year)] = cf.distribution;
        }
        fit.groups.push_back({lo, hi, std::move(cf)});
    }
    return fit;
}

/// Future accident dates in (from, to]: i.i.d. gaps from the distribution of
/// the current year, accumulated from `from`.
inline std::vector<Day> simulate_arrivals(const OccurrenceModel& m, Day from, Day to, Rng& rng)
{
    if (!(from < to)) throw ModelError("simulate_arrivals requires from < to");
    std::vector<Day> out;
    Day t = from;
    std::size_t zero_run = 0;
    for (;;) {
        const auto v = sample_count(m.for_year(calendar_year(t)), rng);
        zero_run = v == 0 ? zero_run + 1 : 0;
        if (zero_run > 1000000) throw ModelError("occurrence model produces unbounded same-day arrivals");
        const auto next = static_cast<std::int64_t>(t) + v;
        if (next > to) break;
        t = static_cast<Day>(next);
        if (t > from) out.push_back(t);
    }
    return out;
}

} // namespace granular

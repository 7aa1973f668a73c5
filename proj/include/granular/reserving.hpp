#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "claims.hpp"
#include "copula.hpp"
#include "dates.hpp"
#include "delay.hpp"
#include "error.hpp"
#include "hac.hpp"
#include "model.hpp"
#include "payments.hpp"
#include "random.hpp"
#include "severity.hpp"
#include "stats.hpp"

namespace granular {

/// Valuation date a (present) and horizon end b; future payments fall in (a, b].
struct ValuationWindow {
    Day a = 0;
    Day b = 0;
};

inline void validate(const ValuationWindow& w)
{
    if (!(w.a < w.b)) throw DataError("valuation window requires a < b");
}

inline ValuationWindow one_year_window(Day a) { return {a, a + 365}; }

inline ValuationWindow ultimate_window(Day a, double runoff_years = 15.0)
{
    return {a, a + static_cast<Day>(std::lround(runoff_years * kDaysPerYear))};
}

struct SimulatedPayment {
    Day date = 0;
    double amount = 0.0;
};

struct SimulatedClaim {
    ClaimType type = ClaimType::BodilyInjury;
    Day accident_date = 0;
    Day reporting_date = 0;
    std::vector<SimulatedPayment> payments;
};

namespace detail {

// Internal time s (years after reporting) to a payment date. A payment at
// s in ((d-1)/365.25, d/365.25] lands d days after reporting.
inline Day payment_day(Day reporting, double s)
{
    return reporting + static_cast<Day>(std::ceil(s * kDaysPerYear - 1e-9));
}

inline SeverityState severity_state_at(const ClaimRecord& c, Day a)
{
    SeverityState st;
    for (const auto& e : c.payments) {
        if (e.date > a) break;
        ++st.next_order;
        st.previous = e.amount;
    }
    return st;
}

inline std::vector<SimulatedPayment> draw_payments(const TypeModel& m, Day reporting, double s1, double s2,
                                                   std::int64_t n, SeverityState state, Day a, Day b, Rng& rng)
{
    std::vector<SimulatedPayment> out;
    if (n <= 0) return out;
    const auto times = place_payment_times(m.payments, s1, s2, n, rng);
    const auto amounts = simulate_amounts(m.severity, times.size(), rng, state);
    out.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        out.push_back({std::clamp(payment_day(reporting, times[i]), a + 1, b), amounts[i]});
    }
    return out;
}

} // namespace detail

/// Future payments in (a, b] of a claim reported by a. Increments of the
/// payment process are independent, so the draw ignores how many payments
/// were observed up to a; only the severity state may use the history.
inline std::vector<SimulatedPayment> rbns_predict(const ClaimRecord& claim, const TypeModel& m, ValuationWindow w, Rng& rng)
{
    validate(w);
    if (claim.reporting_date > w.a) throw ModelError("rbns_predict: claim " + claim.id + " is not reported by the valuation date");
    const double s1 = days_to_years(w.a - claim.reporting_date);
    const double s2 = days_to_years(w.b - claim.reporting_date);
    const auto& f = m.payments.intensity;
    const double mean = cumulative_intensity(f, s2) - cumulative_intensity(f, s1);
    const auto n = poisson_draw(mean, rng);
    return detail::draw_payments(m, claim.reporting_date, s1, s2, n, detail::severity_state_at(claim, w.a), w.a, w.b, rng);
}

/// P[a < T + W <= b | T = t] = H_t(b - t) - H_t(a - t).
inline double reporting_prob_window(const DelayModel& delay, ValuationWindow w, double t)
{
    if (t > w.a) throw ModelError("reporting_prob_window requires t <= a");
    return std::max(delay_cdf(delay, t, w.b - t) - delay_cdf(delay, t, w.a - t), 0.0);
}

inline double reporting_prob_window(const TypeModel& m, ValuationWindow w, double t)
{
    return reporting_prob_window(m.delay, w, t);
}

/// Conditional law of the payment count N(b - t - w) of a claim occurring at
/// t and surfacing after delay w inside the window: the mixed density at the
/// remaining horizon, normalized by the delay density and by the
/// probability of reporting within the window. Summed over n and integrated
/// against h_t over the admissible delays it gives 1.
inline double ibnr_count_conditional(const TypeModel& m, ValuationWindow win, double t, double w, std::int64_t n)
{
    if (!(win.a < t + w && t + w <= win.b)) throw ModelError("ibnr_count_conditional: (t, w) outside the window");
    if (n < 0) return 0.0;
    const double tau = (win.b - t - w) / kDaysPerYear;
    const double dens = delay_density(m.delay, t, w);
    const double pw = reporting_prob_window(m.delay, win, t);
    if (!(dens > 0.0) || !(pw > 0.0)) return 0.0;
    return mixed_density(m.delay, m.payments, m.copula, t, w, tau, n) / (dens * pw);
}

/// Longest delay worth simulating for claims occurring before a.
inline double max_delay_days(const DelayModel& d, Day a)
{
    constexpr double cap = 20.0 * kDaysPerYear;
    double L = std::min(delay_quantile(d, a, 1.0 - 1e-6), cap);
    for (int i = 0; i < 2; ++i) L = std::min(std::max(L, delay_quantile(d, a - L, 1.0 - 1e-6)), cap);
    return std::ceil(L) + 1.0;
}

namespace detail {

inline void ibnr_single(const TypeModel& m, ClaimType type, Day t, double u, double v_count, bool v_is_count_uniform,
                        ValuationWindow win, Rng& rng, std::vector<SimulatedClaim>& out)
{
    const double w = delay_quantile(m.delay, t, u);
    const double rep = static_cast<double>(t) + std::floor(w);
    if (rep <= win.a || rep > win.b) return;
    const auto r = static_cast<Day>(rep);
    const double tau = days_to_years(win.b - r);
    const double lam = cumulative_intensity(m.payments.intensity, tau);
    const std::int64_t n =
        v_is_count_uniform ? poisson_quantile(lam, v_count) : conditional_count(m.copula.at(tau), u, lam, v_count);
    SimulatedClaim c{type, t, r, {}};
    c.payments = draw_payments(m, r, 0.0, tau, n, {}, win.a, win.b, rng);
    out.push_back(std::move(c));
}

} // namespace detail

/// Claims incurred by a but reported in (a, b], with their payments in (a, b].
/// Occurrences are simulated over (a - L, a] with L the delay's effective
/// support; occurrences that would have been reported by a stand for
/// observed claims and are dropped.
inline std::vector<SimulatedClaim> ibnr_simulate(const GranularModel& model, ValuationWindow win, Rng& rng)
{
    validate(win);
    std::vector<SimulatedClaim> out;
    for (auto type : kClaimTypes) {
        if (!model.has(type)) continue;
        const auto& m = model.of(type);
        const Day from = win.a - static_cast<Day>(max_delay_days(m.delay, win.a));
        for (Day t : simulate_arrivals(m.occurrence, from, win.a, rng)) {
            detail::ibnr_single(m, type, t, uniform_open(rng), uniform_open(rng), false, win, rng, out);
        }
    }
    if (model.hac && model.pair_occurrence && model.has(ClaimType::BodilyInjury) && model.has(ClaimType::MaterialDamage)) {
        const std::array<const TypeModel*, 2> ms{&model.of(ClaimType::BodilyInjury), &model.of(ClaimType::MaterialDamage)};
        const double L = std::max(max_delay_days(ms[0]->delay, win.a), max_delay_days(ms[1]->delay, win.a));
        for (Day t : simulate_arrivals(*model.pair_occurrence, win.a - static_cast<Day>(L), win.a, rng)) {
            std::array<std::function<CopulaFamily(double)>, 2> leaf_at;
            for (std::size_t k = 0; k < 2; ++k) {
                leaf_at[k] = [&, k](double x) {
                    const double rep = t + std::floor(delay_quantile(ms[k]->delay, t, x));
                    return model.hac->leaves[k].at(std::max(win.b - rep, 0.0) / kDaysPerYear);
                };
            }
            const auto u = sample_hac(*model.hac, rng, leaf_at);
            for (std::size_t k = 0; k < 2; ++k) {
                detail::ibnr_single(*ms[k], kClaimTypes[k], t, u[2 * k], u[2 * k + 1], true, win, rng, out);
            }
        }
    }
    return out;
}

struct ScenarioResult {
    double rbns = 0.0;
    double ibnr = 0.0;
    std::array<double, 2> by_type{0.0, 0.0};
    std::vector<double> cash_flows; // per period of the window
    std::int64_t rbns_payments = 0;
    std::int64_t ibnr_payments = 0;
    std::int64_t ibnr_claims = 0;

    double total() const { return rbns + ibnr; }
};

struct ReserveDistribution {
    ValuationWindow window;
    double period_days = kDaysPerYear / 12.0;
    std::uint64_t seed = 0;
    std::vector<ScenarioResult> scenarios;

    std::size_t periods() const
    {
        return static_cast<std::size_t>(std::ceil(static_cast<double>(window.b - window.a) / period_days - 1e-9));
    }
};

struct SimulationOptions {
    std::size_t scenarios = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 0; // 0: hardware concurrency
    double period_days = kDaysPerYear / 12.0;
};

/// Full Monte Carlo of future payments in (a, b]: every claim reported by a
/// runs off as RBNS and IBNR claims are simulated afresh. Scenario i uses
/// its own stream derived from (seed, i), so results do not depend on the
/// number of workers.
inline ReserveDistribution simulate_reserves(const GranularModel& model, const Portfolio& portfolio, ValuationWindow win,
                                             const SimulationOptions& opt)
{
    validate(win);
    if (opt.scenarios < 1) throw DataError("at least one scenario is required");
    if (!(opt.period_days > 0.0)) throw DataError("cash-flow period must be positive");

    struct RbnsPlan {
        const ClaimRecord* claim;
        const TypeModel* model;
        double mean;
    };
    std::vector<RbnsPlan> plans;
    for (const auto& c : portfolio.claims) {
        if (c.accident_date > win.a || c.reporting_date > win.a) continue;
        const auto& m = model.of(c.type);
        const auto& f = m.payments.intensity;
        const double mean = cumulative_intensity(f, days_to_years(win.b - c.reporting_date)) -
                            cumulative_intensity(f, days_to_years(win.a - c.reporting_date));
        plans.push_back({&c, &m, mean});
    }

    ReserveDistribution dist;
    dist.window = win;
    dist.period_days = opt.period_days;
    dist.seed = opt.seed;
    dist.scenarios.resize(opt.scenarios);
    const std::size_t periods = dist.periods();

    auto add = [&](ScenarioResult& r, ClaimType type, const SimulatedPayment& p) {
        r.by_type[static_cast<std::size_t>(type)] += p.amount;
        auto idx = static_cast<std::size_t>(std::ceil(static_cast<double>(p.date - win.a) / opt.period_days - 1e-9));
        idx = std::clamp<std::size_t>(idx, 1, periods) - 1;
        r.cash_flows[idx] += p.amount;
    };

    auto run = [&](std::size_t i) {
        Rng rng = make_stream(opt.seed, i);
        ScenarioResult r;
        r.cash_flows.assign(periods, 0.0);
        for (const auto& plan : plans) {
            const auto n = poisson_draw(plan.mean, rng);
            if (n == 0) continue;
            const auto& c = *plan.claim;
            const auto pays = detail::draw_payments(*plan.model, c.reporting_date, days_to_years(win.a - c.reporting_date),
                                                    days_to_years(win.b - c.reporting_date), n,
                                                    detail::severity_state_at(c, win.a), win.a, win.b, rng);
            for (const auto& p : pays) {
                r.rbns += p.amount;
                add(r, c.type, p);
            }
            r.rbns_payments += static_cast<std::int64_t>(pays.size());
        }
        for (const auto& c : ibnr_simulate(model, win, rng)) {
            ++r.ibnr_claims;
            for (const auto& p : c.payments) {
                r.ibnr += p.amount;
                add(r, c.type, p);
            }
            r.ibnr_payments += static_cast<std::int64_t>(c.payments.size());
        }
        dist.scenarios[i] = std::move(r);
    };

    unsigned workers = opt.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.workers;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, opt.scenarios));
    if (workers <= 1) {
        for (std::size_t i = 0; i < opt.scenarios; ++i) run(i);
        return dist;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < opt.scenarios; i += workers) run(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return dist;
}

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
    std::vector<std::pair<double, double>> quantiles; // (level, value)
};

struct ReserveSummary {
    std::size_t scenarios = 0;
    std::vector<double> levels;
    Moments total;
    Moments rbns;
    Moments ibnr;
    std::array<Moments, 2> by_type;
    std::vector<double> expected_cash_flows;
};

inline const std::vector<double> kDefaultLevels{0.5, 0.75, 0.95, 0.995};

inline Moments summarize(std::vector<double> xs, std::span<const double> levels)
{
    Moments m;
    m.mean = stats::mean(xs);
    m.sd = xs.size() > 1 ? stats::sample_sd(xs) : 0.0;
    std::sort(xs.begin(), xs.end());
    for (double q : levels) m.quantiles.emplace_back(q, stats::quantile_sorted(xs, q));
    return m;
}

inline ReserveSummary reserve_summary(const ReserveDistribution& d, std::span<const double> levels = kDefaultLevels)
{
    if (d.scenarios.empty()) throw ModelError("reserve summary needs at least one scenario");
    for (double q : levels) {
        if (!(q >= 0.0 && q <= 1.0)) throw DataError("quantile level outside [0, 1]");
    }
    std::vector<double> sorted_levels(levels.begin(), levels.end());
    std::sort(sorted_levels.begin(), sorted_levels.end());
    ReserveSummary s;
    s.scenarios = d.scenarios.size();
    s.levels = sorted_levels;
    std::vector<double> tot, rb, ib, t0, t1;
    s.expected_cash_flows.assign(d.periods(), 0.0);
    for (const auto& r : d.scenarios) {
        tot.push_back(r.total());
        rb.push_back(r.rbns);
        ib.push_back(r.ibnr);
        t0.push_back(r.by_type[0]);
        t1.push_back(r.by_type[1]);
        for (std::size_t i = 0; i < r.cash_flows.size() && i < s.expected_cash_flows.size(); ++i) {
            s.expected_cash_flows[i] += r.cash_flows[i];
        }
    }
    for (auto& x : s.expected_cash_flows) x /= static_cast<double>(d.scenarios.size());
    s.total = summarize(std::move(tot), sorted_levels);
    s.rbns = summarize(std::move(rb), sorted_levels);
    s.ibnr = summarize(std::move(ib), sorted_levels);
    s.by_type = {summarize(std::move(t0), sorted_levels), summarize(std::move(t1), sorted_levels)};
    return s;
}

struct ChainLadderResult {
    std::vector<double> factors;
    std::vector<double> latest;
    std::vector<double> ultimate;
    std::vector<double> reserves;
    double total_reserve = 0.0;
};

/// Development factors f_j = Σ C[i][j+1] / Σ C[i][j] over rows with both
/// cells, projected from each origin's latest cumulative amount.
inline ChainLadderResult chain_ladder_reserve(const RunOffTriangle& tri)
{
    const auto& cells = tri.cells;
    if (cells.size() < 2) throw ModelError("chain ladder needs at least two origin periods");
    std::size_t cols = 0;
    for (const auto& row : cells) cols = std::max(cols, row.size());
    auto at = [&](std::size_t i, std::size_t j) -> std::optional<double> {
        return j < cells[i].size() ? cells[i][j] : std::nullopt;
    };
    ChainLadderResult r;
    for (std::size_t j = 0; j + 1 < cols; ++j) {
        double num = 0.0, den = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto a = at(i, j), b = at(i, j + 1);
            if (a && b) {
                num += *b;
                den += *a;
                any = true;
            }
        }
        if (!any) {
            r.factors.push_back(1.0);
            continue;
        }
        if (den == 0.0) throw ModelError("chain ladder: zero column sum at development period " + std::to_string(j));
        r.factors.push_back(num / den);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        std::optional<std::size_t> last;
        for (std::size_t j = 0; j < cells[i].size(); ++j) {
            if (cells[i][j]) last = j;
        }
        const double latest = last ? *at(i, *last) : 0.0;
        double ult = latest;
        for (std::size_t j = last ? *last : 0; j + 1 < cols; ++j) ult *= r.factors[j];
        r.latest.push_back(latest);
        r.ultimate.push_back(ult);
        r.reserves.push_back(ult - latest);
        r.total_reserve += ult - latest;
    }
    return r;
}

struct BacktestResult {
    ReserveDistribution predicted;
    ReserveSummary summary;
    double actual = 0.0;
    std::vector<std::pair<double, bool>> at_or_below; // (level, actual <= quantile)
    double band_lower = 0.0;
    double band_upper = 0.0;
    bool inside_band = false;
    FitReport fit_report;
};

/// Paid amounts in (a, b] on claims that occurred by a.
inline double realized_payments(const Portfolio& p, ValuationWindow w)
{
    double s = 0.0;
    for (const auto& c : p.claims) {
        if (c.accident_date > w.a) continue;
        for (const auto& e : c.payments) {
            if (e.date > w.a && e.date <= w.b) s += e.amount;
        }
    }
    return s;
}

/// Refits on the data observable at a and scores the realized (a, b] total
/// against the predictive distribution.
inline BacktestResult backtest(const Portfolio& p, const FitOptions& fit_opt, ValuationWindow win,
                               const SimulationOptions& sim, std::pair<double, double> band = {0.05, 0.95},
                               std::span<const double> levels = kDefaultLevels)
{
    validate(win);
    if (win.b > p.data_cutoff) {
        throw DataError("backtest window ends " + format_iso_date(win.b) + ", after the data cutoff " +
                        format_iso_date(p.data_cutoff) + " (no holdout)");
    }
    const Portfolio seen = censor_at(p, win.a);
    BacktestResult r;
    const GranularModel model = fit_granular_model(seen, fit_opt, &r.fit_report);
    r.predicted = simulate_reserves(model, seen, win, sim);
    r.summary = reserve_summary(r.predicted, levels);
    r.actual = realized_payments(p, win);
    std::vector<double> totals;
    for (const auto& s : r.predicted.scenarios) totals.push_back(s.total());
    std::sort(totals.begin(), totals.end());
    for (double q : levels) r.at_or_below.emplace_back(q, r.actual <= stats::quantile_sorted(totals, q));
    r.band_lower = stats::quantile_sorted(totals, band.first);
    r.band_upper = stats::quantile_sorted(totals, band.second);
    r.inside_band = r.actual >= r.band_lower && r.actual <= r.band_upper;
    return r;
}

} // namespace granular

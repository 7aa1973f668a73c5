#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "claims.hpp"
#include "copula.hpp"
#include "delay.hpp"
#include "error.hpp"
#include "frequency.hpp"
#include "hac.hpp"
#include "payments.hpp"
#include "severity.hpp"
#include "stats.hpp"

namespace granular {

/// Fitted components for one claim type.
struct TypeModel {
    OccurrenceModel occurrence;
    DelayModel delay;
    CountProcess payments;
    SeverityModel severity;
    CopulaSpec copula;
};

/// All fitted components. When `hac` is set, claims matched across types
/// arrive through `pair_occurrence` and per-type occurrence models describe
/// the unmatched claims only.
struct GranularModel {
    std::array<std::optional<TypeModel>, 2> types;
    std::optional<HacSpec> hac;
    std::optional<OccurrenceModel> pair_occurrence;
    Day data_cutoff = 0;

    bool has(ClaimType t) const { return types[static_cast<std::size_t>(t)].has_value(); }

    const TypeModel& of(ClaimType t) const
    {
        const auto& m = types[static_cast<std::size_t>(t)];
        if (!m) throw ModelError("no fitted model for claim type " + std::string(to_string(t)));
        return *m;
    }
};

enum class MatchKey { ClaimIdStem, AccidentDate, None };

inline std::string_view to_string(MatchKey k)
{
    switch (k) {
    case MatchKey::ClaimIdStem: return "claim_id_stem";
    case MatchKey::AccidentDate: return "accident_date";
    case MatchKey::None: return "none";
    }
    return "?";
}

inline MatchKey parse_match_key(std::string_view s)
{
    for (auto k : {MatchKey::ClaimIdStem, MatchKey::AccidentDate, MatchKey::None}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown matching key '" + std::string(s) + "'");
}

/// Claim id up to (excluding) its last '-', e.g. "P123-BI" -> "P123".
inline std::string claim_id_stem(std::string_view id)
{
    const auto pos = id.rfind('-');
    return std::string(pos == std::string_view::npos ? id : id.substr(0, pos));
}

/// Pairs (bodily-injury index, material-damage index) into p.claims. Matched
/// claims always share their accident date.
inline std::vector<std::pair<std::size_t, std::size_t>> match_claims(const Portfolio& p, MatchKey key,
                                                                     Diagnostics* diag = nullptr)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (key == MatchKey::None) return out;
    std::map<std::pair<std::string, Day>, std::vector<std::size_t>> md;
    auto key_of = [&](const ClaimRecord& c) {
        return std::make_pair(key == MatchKey::ClaimIdStem ? claim_id_stem(c.id) : std::string(), c.accident_date);
    };
    for (std::size_t i = 0; i < p.claims.size(); ++i) {
        if (p.claims[i].type == ClaimType::MaterialDamage) md[key_of(p.claims[i])].push_back(i);
    }
    std::map<std::string, std::size_t> stem_mismatch;
    for (auto& [k, v] : md) std::reverse(v.begin(), v.end());
    for (std::size_t i = 0; i < p.claims.size(); ++i) {
        const auto& c = p.claims[i];
        if (c.type != ClaimType::BodilyInjury) continue;
        auto it = md.find(key_of(c));
        if (it == md.end() || it->second.empty()) continue;
        out.emplace_back(i, it->second.back());
        it->second.pop_back();
    }
    if (key == MatchKey::ClaimIdStem) {
        std::map<std::string, std::array<std::size_t, 2>> stems;
        for (const auto& c : p.claims) ++stems[claim_id_stem(c.id)][static_cast<std::size_t>(c.type)];
        std::size_t both = 0;
        for (const auto& [s, n] : stems) both += std::min(n[0], n[1]);
        if (both > out.size()) {
            warn(diag, "matching: " + std::to_string(both - out.size()) +
                           " id-stem pairs left unmatched because their accident dates differ");
        }
    }
    return out;
}

struct FitOptions {
    std::optional<CountFamily> occurrence_family; // nullopt: choose by AIC
    DelayFamily delay_family = DelayFamily::WeibullTV;
    std::optional<IntensityFamily> intensity_family; // nullopt: choose by AIC
    SeverityKind severity = SeverityKind::Auto;
    std::vector<CopulaKind> copula_candidates{CopulaKind::Independence, CopulaKind::Clayton, CopulaKind::Gumbel,
                                              CopulaKind::Frank};
    bool time_varying_copula = false;
    CopulaKind hac_outer = CopulaKind::Gumbel;
    MatchKey matching = MatchKey::ClaimIdStem;
    std::size_t min_matched_pairs = 30;
    std::size_t min_per_year = 30;
    double occurrence_tail_quantile = 0.99;
};

struct PhaseReport {
    int phase = 0;
    std::string name;
    std::string claim_type; // empty for cross-type phases
    std::string family;
    double log_likelihood = 0.0;
    double aic = 0.0;
    std::vector<std::string> parameter_names;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    std::vector<std::string> notes;
};

struct FitReport {
    std::vector<PhaseReport> phases;
    std::vector<std::string> warnings;
    std::size_t claims = 0;
    std::size_t matched_pairs = 0;
    bool hac_fitted = false;
};

/// Observed payment process of a reported claim at `cutoff`, in years since
/// reporting. A payment dated d days after reporting covers internal time
/// ((d-1)/365.25, d/365.25]; its midpoint stands in for the event time.
inline PaymentHistory payment_history(const ClaimRecord& c, Day cutoff)
{
    PaymentHistory h;
    h.horizon = days_to_years(std::max(cutoff - c.reporting_date, 0));
    for (const auto& e : c.payments) {
        if (e.date > cutoff) break;
        const double d = static_cast<double>(e.date - c.reporting_date);
        h.event_times.push_back(std::min(std::max(d - 0.5, 0.0) / kDaysPerYear, h.horizon));
    }
    return h;
}

inline MixedObservation mixed_observation(const ClaimRecord& c, Day cutoff)
{
    std::int64_t n = 0;
    for (const auto& e : c.payments) n += e.date <= cutoff ? 1 : 0;
    return {static_cast<double>(c.accident_date), static_cast<double>(c.reporting_delay()) + 0.5,
            days_to_years(std::max(cutoff - c.reporting_date, 0)), n};
}

namespace detail {

template <class F>
auto run_phase(int phase, const std::string& name, std::string_view type, F&& f)
{
    const std::string where = "phase " + std::to_string(phase) + " (" + name + (type.empty() ? "" : ", " + std::string(type)) + ")";
    try {
        return f();
    } catch (const ModelError& e) {
        throw ModelError(where + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
    }
}

// Gaps between consecutive accident dates, leaving out the gap from the
// epoch and gaps ending within `tail_days` of the cutoff (where unreported
// claims make gaps look longer).
inline std::vector<DateDifference> occurrence_gaps(std::vector<Day> days, Day cutoff, double tail_days)
{
    std::sort(days.begin(), days.end());
    std::vector<DateDifference> out;
    for (std::size_t i = 1; i < days.size(); ++i) {
        if (static_cast<double>(days[i]) > static_cast<double>(cutoff) - tail_days) break;
        out.push_back({calendar_year(days[i - 1]), static_cast<std::int64_t>(days[i] - days[i - 1])});
    }
    return out;
}

inline double occurrence_aic(const OccurrenceFit& f)
{
    double a = 0.0;
    for (const auto& g : f.groups) a += g.fit.aic();
    return a;
}

inline OccurrenceFit fit_occurrence_auto(std::span<const DateDifference> gaps, std::optional<CountFamily> family,
                                         Diagnostics* diag, std::size_t min_per_year)
{
    if (family) return fit_occurrence(gaps, *family, diag, min_per_year);
    std::optional<OccurrenceFit> best;
    std::string last_error;
    for (auto f : {CountFamily::Poisson, CountFamily::NegativeBinomial, CountFamily::ZeroModifiedPoisson,
                   CountFamily::ZeroModifiedNegativeBinomial}) {
        try {
            Diagnostics local;
            auto fit = fit_occurrence(gaps, f, &local, min_per_year);
            if (!best || occurrence_aic(fit) < occurrence_aic(*best)) best = std::move(fit);
        } catch (const ModelError& e) {
            last_error = e.what();
        }
    }
    if (!best) throw ModelError("no occurrence family could be fitted: " + last_error);
    return *best;
}

inline std::string count_family_name(const CountDistribution& d)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, PoissonCount>) return "poisson";
            else if constexpr (std::is_same_v<T, NegativeBinomialCount>) return "negative_binomial";
            else if constexpr (std::is_same_v<T, ZeroModifiedCount>)
                return std::holds_alternative<PoissonCount>(x.base) ? "zero_modified_poisson" : "zero_modified_negative_binomial";
            else return "point_mass";
        },
        d);
}

inline PhaseReport occurrence_report(const OccurrenceFit& f, std::string_view type, std::string name)
{
    PhaseReport r;
    r.phase = 1;
    r.name = std::move(name);
    r.claim_type = std::string(type);
    r.family = f.groups.empty() ? "" : count_family_name(f.groups.front().fit.distribution);
    r.log_likelihood = f.log_likelihood;
    r.aic = occurrence_aic(f);
    for (const auto& g : f.groups) {
        const std::string tag = std::to_string(g.first_year) + (g.last_year != g.first_year ? "-" + std::to_string(g.last_year) : "");
        for (std::size_t i = 0; i < g.fit.estimates.size(); ++i) {
            r.parameter_names.push_back(g.fit.parameter_names[i] + "[" + tag + "]");
            r.estimates.push_back(g.fit.estimates[i]);
            r.standard_errors.push_back(i < g.fit.standard_errors.size() ? g.fit.standard_errors[i]
                                                                         : std::numeric_limits<double>::quiet_NaN());
        }
    }
    return r;
}

inline std::vector<double> padded(std::vector<double> se, std::size_t n)
{
    se.resize(n, std::numeric_limits<double>::quiet_NaN());
    return se;
}

} // namespace detail

/// Multistage fit: occurrence, delay, payment process, severity, then the
/// delay/count copula per type and finally the cross-type HAC.
inline GranularModel fit_granular_model(const Portfolio& p, const FitOptions& opt = {}, FitReport* report = nullptr)
{
    FitReport local_report;
    FitReport& rep = report != nullptr ? *report : local_report;
    Diagnostics diag;
    rep.claims = p.claims.size();

    GranularModel model;
    model.data_cutoff = p.data_cutoff;

    std::array<std::vector<std::size_t>, 2> by_type;
    for (std::size_t i = 0; i < p.claims.size(); ++i) by_type[static_cast<std::size_t>(p.claims[i].type)].push_back(i);
    const bool both_types = !by_type[0].empty() && !by_type[1].empty();
    if (by_type[0].empty() && by_type[1].empty()) throw ModelError("portfolio has no claims to fit");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (both_types) pairs = match_claims(p, opt.matching, &diag);
    rep.matched_pairs = pairs.size();
    const bool use_pairs = both_types && pairs.size() >= opt.min_matched_pairs && opt.hac_outer != CopulaKind::Independence;
    if (!both_types) {
        diag.warn("HAC stage skipped: portfolio holds a single claim type");
    } else if (pairs.size() < opt.min_matched_pairs) {
        diag.warn("HAC stage skipped: " + std::to_string(pairs.size()) + " matched pairs (need " +
                  std::to_string(opt.min_matched_pairs) + ")");
    }
    std::vector<bool> matched(p.claims.size(), false);
    if (use_pairs) {
        for (auto [i, j] : pairs) matched[i] = matched[j] = true;
    }

    std::array<double, 2> tail_days{0.0, 0.0};
    for (std::size_t k = 0; k < 2; ++k) {
        if (by_type[k].empty()) continue;
        std::vector<double> delays;
        for (auto i : by_type[k]) delays.push_back(static_cast<double>(p.claims[i].reporting_delay()));
        tail_days[k] = stats::quantile(delays, opt.occurrence_tail_quantile);
    }

    std::array<std::optional<TypeModel>, 2> fitted;
    for (std::size_t k = 0; k < 2; ++k) {
        if (by_type[k].empty()) continue;
        const auto type = static_cast<ClaimType>(k);
        const std::string tname(to_string(type));
        TypeModel tm;

        // Phase 1: accident-date differences.
        const auto occ = detail::run_phase(1, "occurrence", tname, [&] {
            std::vector<Day> days;
            for (auto i : by_type[k]) {
                if (!matched[i]) days.push_back(p.claims[i].accident_date);
            }
            const auto gaps = detail::occurrence_gaps(days, p.data_cutoff, tail_days[k]);
            return detail::fit_occurrence_auto(gaps, opt.occurrence_family, &diag, opt.min_per_year);
        });
        tm.occurrence = occ.model;
        rep.phases.push_back(detail::occurrence_report(occ, tname, "occurrence"));

        // Phase 2: reporting delay.
        std::vector<DelayObservation> dobs;
        for (auto i : by_type[k]) {
            const auto& c = p.claims[i];
            dobs.push_back({static_cast<double>(c.accident_date), static_cast<double>(c.reporting_delay()),
                            static_cast<double>(p.data_cutoff - c.accident_date)});
        }
        const auto dfit = detail::run_phase(2, "reporting delay", tname, [&] { return fit_delay(dobs, opt.delay_family, &diag); });
        tm.delay = dfit.model;
        rep.phases.push_back({2, "reporting delay", tname, std::string(to_string(opt.delay_family)), dfit.log_likelihood,
                              dfit.aic(), dfit.parameter_names, dfit.estimates,
                              detail::padded(dfit.standard_errors, dfit.estimates.size()),
                              dfit.trend_fixed ? std::vector<std::string>{"trend fixed at c1 = 0"} : std::vector<std::string>{}});

        // Phase 3a: payment counting process.
        std::vector<PaymentHistory> hist;
        for (auto i : by_type[k]) hist.push_back(payment_history(p.claims[i], p.data_cutoff));
        const auto ifit = detail::run_phase(3, "payment process", tname, [&] {
            if (opt.intensity_family) return fit_intensity(hist, *opt.intensity_family, &diag);
            auto a = fit_intensity(hist, IntensityFamily::Exponential, &diag);
            std::optional<IntensityFit> b;
            try {
                Diagnostics quiet;
                b = fit_intensity(hist, IntensityFamily::Power, &quiet);
            } catch (const ModelError&) {
            }
            return b && b->aic() < a.aic() ? *b : a;
        });
        tm.payments = CountProcess{ifit.intensity};
        rep.phases.push_back({3, "payment process", tname,
                              std::holds_alternative<ExponentialDecay>(ifit.intensity) ? "exponential" : "power",
                              ifit.log_likelihood, ifit.aic(), ifit.parameter_names, ifit.estimates,
                              detail::padded(ifit.standard_errors, ifit.estimates.size()),
                              ifit.at_boundary ? std::vector<std::string>{"estimate on boundary"} : std::vector<std::string>{}});

        // Phase 4: severities.
        std::vector<std::vector<double>> amounts;
        for (auto i : by_type[k]) {
            std::vector<double> xs;
            for (const auto& e : p.claims[i].payments) {
                if (e.date <= p.data_cutoff) xs.push_back(e.amount);
            }
            amounts.push_back(std::move(xs));
        }
        const auto sfit = detail::run_phase(4, "severity", tname, [&] { return fit_severity(amounts, opt.severity, &diag); });
        tm.severity = sfit.model;
        std::string sfam = "order_ar";
        if (const auto* iid = std::get_if<IidSeverity>(&sfit.model)) {
            sfam = std::holds_alternative<LogNormalSeverity>(iid->family) ? "lognormal" : "gamma";
        }
        rep.phases.push_back({4, "severity", tname, sfam, sfit.log_likelihood, sfit.aic(), sfit.parameter_names,
                              sfit.estimates, detail::padded(sfit.standard_errors, sfit.estimates.size()), {}});

        // Phase 3b: delay/count copula (needs both margins).
        PhaseReport cr{3, "delay-count copula", tname, "independence", 0.0, 0.0, {}, {}, {}, {}};
        if (!std::holds_alternative<WeibullTV>(tm.delay)) {
            cr.notes.push_back("delay model has no density; copula fixed to independence");
            diag.warn("copula (" + tname + "): empirical delay model has no density, independence assumed");
        } else if (by_type[k].size() < 200) {
            cr.notes.push_back("fewer than 200 claims; copula fixed to independence");
            diag.warn("copula (" + tname + "): fewer than 200 claims, independence assumed");
        } else {
            std::vector<MixedObservation> mobs;
            for (auto i : by_type[k]) mobs.push_back(mixed_observation(p.claims[i], p.data_cutoff));
            const auto cfit = detail::run_phase(3, "delay-count copula", tname, [&] {
                std::vector<CopulaFit> all;
                auto best = select_copula(mobs, tm.delay, tm.payments, opt.copula_candidates, opt.time_varying_copula,
                                          &diag, &all);
                for (const auto& f : all) {
                    cr.notes.push_back(std::string(to_string(f.spec.kind)) + " aic=" + std::to_string(f.aic()));
                }
                return best;
            });
            tm.copula = cfit.spec;
            cr.family = std::string(to_string(cfit.spec.kind));
            cr.log_likelihood = cfit.log_likelihood;
            cr.aic = cfit.aic();
            cr.parameter_names = cfit.parameter_names;
            cr.estimates = cfit.estimates;
            cr.standard_errors = detail::padded(cfit.standard_errors, cfit.estimates.size());
        }
        rep.phases.push_back(std::move(cr));
        fitted[k] = std::move(tm);
    }
    model.types = fitted;

    // Phase 5: dependence between matched claims of the two types.
    if (use_pairs) {
        detail::run_phase(5, "cross-type copula", "", [&] {
            std::vector<std::pair<double, double>> u13;
            std::vector<Day> days;
            for (auto [i, j] : pairs) {
                const auto& a = p.claims[i];
                const auto& b = p.claims[j];
                u13.emplace_back(std::clamp(delay_cdf(fitted[0]->delay, a.accident_date, a.reporting_delay() + 0.5), 1e-12, 1.0 - 1e-12),
                                 std::clamp(delay_cdf(fitted[1]->delay, b.accident_date, b.reporting_delay() + 0.5), 1e-12, 1.0 - 1e-12));
                days.push_back(a.accident_date);
            }
            const std::array<CopulaSpec, 2> leaves{fitted[0]->copula, fitted[1]->copula};
            const auto outer = fit_hac_outer(u13, opt.hac_outer, leaves, &diag);
            model.hac = make_hac(outer.outer, leaves[0], leaves[1]);
            const auto gaps = detail::occurrence_gaps(days, p.data_cutoff, std::max(tail_days[0], tail_days[1]));
            const auto occ = detail::fit_occurrence_auto(gaps, opt.occurrence_family, &diag, opt.min_per_year);
            model.pair_occurrence = occ.model;
            rep.phases.push_back(detail::occurrence_report(occ, "", "matched-pair occurrence"));
            PhaseReport hr{5, "cross-type copula", "", std::string(to_string(outer.outer.kind)), outer.log_likelihood,
                           2.0 - 2.0 * outer.log_likelihood, {"theta"}, {outer.outer.theta}, {outer.standard_error}, {}};
            hr.notes.push_back("matched pairs: " + std::to_string(pairs.size()) + " by " + std::string(to_string(opt.matching)));
            if (outer.clamped_to_nesting) hr.notes.push_back("outer parameter capped by nesting condition");
            rep.phases.push_back(std::move(hr));
            rep.hac_fitted = true;
            return 0;
        });
    }
    rep.warnings = diag.warnings;
    return model;
}

} // namespace granular

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "claims.hpp"
#include "copula.hpp"
#include "delay.hpp"
#include "frequency.hpp"
#include "hac.hpp"
#include "model.hpp"
#include "payments.hpp"
#include "reserving.hpp"
#include "severity.hpp"

namespace granular {

using Json = nlohmann::json;

namespace detail {

template <class T>
T json_get(const Json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) throw DataError(std::string("missing JSON field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad JSON field '") + key + "': " + e.what());
    }
}

template <class T>
T json_get_or(const Json& j, const char* key, T fallback)
{
    if (!j.is_object() || !j.contains(key)) return fallback;
    return json_get<T>(j, key);
}

// NaN is not representable in JSON; it is written as null.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json numbers(const std::vector<double>& xs)
{
    Json a = Json::array();
    for (double x : xs) a.push_back(number(x));
    return a;
}

} // namespace detail

// ---- counts -------------------------------------------------------------

inline Json to_json(const CountDistribution& d)
{
    return std::visit(
        [](const auto& x) -> Json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, PoissonCount>) return {{"family", "poisson"}, {"mean", x.mean}};
            else if constexpr (std::is_same_v<T, NegativeBinomialCount>)
                return {{"family", "negative_binomial"}, {"size", x.size}, {"prob", x.prob}};
            else if constexpr (std::is_same_v<T, ZeroModifiedCount>) {
                const CountDistribution base = std::visit([](const auto& b) -> CountDistribution { return b; }, x.base);
                return {{"family", "zero_modified"}, {"zero_mass", x.zero_mass}, {"base", to_json(base)}};
            } else return {{"family", "point_mass"}, {"value", x.value}};
        },
        d);
}

inline CountDistribution count_from_json(const Json& j)
{
    const auto fam = detail::json_get<std::string>(j, "family");
    CountDistribution d;
    if (fam == "poisson") d = PoissonCount{detail::json_get<double>(j, "mean")};
    else if (fam == "negative_binomial") d = NegativeBinomialCount{detail::json_get<double>(j, "size"), detail::json_get<double>(j, "prob")};
    else if (fam == "point_mass") d = PointMassCount{detail::json_get<std::int64_t>(j, "value")};
    else if (fam == "zero_modified") {
        const auto base = count_from_json(detail::json_get<Json>(j, "base"));
        ZeroModifiedCount z;
        z.zero_mass = detail::json_get<double>(j, "zero_mass");
        if (const auto* p = std::get_if<PoissonCount>(&base)) z.base = *p;
        else if (const auto* nb = std::get_if<NegativeBinomialCount>(&base)) z.base = *nb;
        else throw DataError("zero-modified base must be poisson or negative_binomial");
        d = z;
    } else throw DataError("unknown count family '" + fam + "'");
    try {
        validate(d);
    } catch (const ModelError& e) {
        throw DataError(e.what());
    }
    return d;
}

inline Json to_json(const OccurrenceModel& m)
{
    Json by = Json::array();
    for (const auto& d : m.by_year) by.push_back(to_json(d));
    return {{"first_year", m.first_year}, {"by_year", by}};
}

inline OccurrenceModel occurrence_from_json(const Json& j)
{
    OccurrenceModel m;
    m.first_year = detail::json_get<int>(j, "first_year");
    for (const auto& d : detail::json_get<Json>(j, "by_year")) m.by_year.push_back(count_from_json(d));
    if (m.by_year.empty()) throw DataError("occurrence model has no years");
    return m;
}

// ---- delay --------------------------------------------------------------

inline Json to_json(const DelayModel& m)
{
    if (const auto* w = std::get_if<WeibullTV>(&m)) {
        return {{"family", "weibull_tv"}, {"shape", w->shape}, {"c0", w->c0}, {"c1", w->c1}};
    }
    const auto& e = std::get<EmpiricalCohort>(m);
    return {{"family", "empirical_cohort"}, {"first_year", e.first_year}, {"cohort_of_year", e.cohort_of_year}, {"cohorts", e.cohorts}};
}

inline DelayModel delay_from_json(const Json& j)
{
    const auto fam = detail::json_get<std::string>(j, "family");
    if (fam == "weibull_tv") {
        WeibullTV w{detail::json_get<double>(j, "shape"), detail::json_get<double>(j, "c0"), detail::json_get<double>(j, "c1")};
        if (!(w.shape > 0.0)) throw DataError("weibull shape must be positive");
        return w;
    }
    if (fam == "empirical_cohort") {
        EmpiricalCohort e;
        e.first_year = detail::json_get<int>(j, "first_year");
        e.cohort_of_year = detail::json_get<std::vector<std::size_t>>(j, "cohort_of_year");
        e.cohorts = detail::json_get<std::vector<std::vector<double>>>(j, "cohorts");
        for (auto c : e.cohort_of_year) {
            if (c >= e.cohorts.size() || e.cohorts[c].empty()) throw DataError("empirical delay cohort index out of range");
        }
        return e;
    }
    throw DataError("unknown delay family '" + fam + "'");
}

// ---- payment intensity --------------------------------------------------

inline Json to_json(const IntensityFunction& f)
{
    if (const auto* e = std::get_if<ExponentialDecay>(&f)) return {{"family", "exponential"}, {"rate0", e->rate0}, {"decay", e->decay}};
    const auto& p = std::get<PowerDecay>(f);
    return {{"family", "power"}, {"rate0", p.rate0}, {"decay", p.decay}};
}

inline IntensityFunction intensity_from_json(const Json& j)
{
    const auto fam = parse_intensity_family(detail::json_get<std::string>(j, "family"));
    const double r = detail::json_get<double>(j, "rate0"), d = detail::json_get<double>(j, "decay");
    IntensityFunction f = fam == IntensityFamily::Exponential ? IntensityFunction{ExponentialDecay{r, d}} : IntensityFunction{PowerDecay{r, d}};
    try {
        validate(f);
    } catch (const ModelError& e) {
        throw DataError(e.what());
    }
    return f;
}

// ---- severity -----------------------------------------------------------

inline Json to_json(const SeverityFamily& f)
{
    if (const auto* l = std::get_if<LogNormalSeverity>(&f)) return {{"family", "lognormal"}, {"mu", l->mu}, {"sigma", l->sigma}};
    const auto& g = std::get<GammaSeverity>(f);
    return {{"family", "gamma"}, {"shape", g.shape}, {"rate", g.rate}};
}

inline SeverityFamily severity_family_from_json(const Json& j)
{
    const auto fam = detail::json_get<std::string>(j, "family");
    if (fam == "lognormal") {
        LogNormalSeverity l{detail::json_get<double>(j, "mu"), detail::json_get<double>(j, "sigma")};
        if (!(l.sigma >= 0.0)) throw DataError("lognormal sigma must be non-negative");
        return l;
    }
    if (fam == "gamma") {
        GammaSeverity g{detail::json_get<double>(j, "shape"), detail::json_get<double>(j, "rate")};
        if (!(g.shape > 0.0 && g.rate > 0.0)) throw DataError("gamma parameters must be positive");
        return g;
    }
    throw DataError("unknown severity family '" + fam + "'");
}

inline Json to_json(const SeverityModel& m)
{
    if (const auto* iid = std::get_if<IidSeverity>(&m)) {
        Json j = to_json(iid->family);
        j["model"] = "iid";
        return j;
    }
    const auto& ar = std::get<OrderAR>(m);
    return {{"model", "order_ar"},
            {"alpha", ar.alpha},
            {"first", to_json(ar.first)},
            {"innovation_sd", ar.innovation_sd},
            {"innovation", ar.innovation == InnovationKind::Gaussian ? "gaussian" : "first_payment_family"},
            {"floor", ar.floor}};
}

inline SeverityModel severity_from_json(const Json& j)
{
    const auto kind = detail::json_get_or<std::string>(j, "model", "iid");
    if (kind == "iid") return IidSeverity{severity_family_from_json(j)};
    if (kind != "order_ar") throw DataError("unknown severity model '" + kind + "'");
    OrderAR ar;
    ar.alpha = detail::json_get<std::vector<double>>(j, "alpha");
    ar.first = severity_family_from_json(detail::json_get<Json>(j, "first"));
    ar.innovation_sd = detail::json_get<double>(j, "innovation_sd");
    const auto inn = detail::json_get_or<std::string>(j, "innovation", "gaussian");
    if (inn == "gaussian") ar.innovation = InnovationKind::Gaussian;
    else if (inn == "first_payment_family") ar.innovation = InnovationKind::FirstPaymentFamily;
    else throw DataError("unknown innovation kind '" + inn + "'");
    ar.floor = detail::json_get_or<double>(j, "floor", 0.01);
    return ar;
}

// ---- copulas ------------------------------------------------------------

inline Json to_json(const CopulaFamily& f) { return {{"family", to_string(f.kind)}, {"theta", f.theta}}; }

inline CopulaFamily copula_family_from_json(const Json& j)
{
    CopulaFamily f{parse_copula_kind(detail::json_get<std::string>(j, "family")), detail::json_get_or<double>(j, "theta", 0.0)};
    try {
        validate(f);
    } catch (const ModelError& e) {
        throw DataError(e.what());
    }
    return f;
}

inline Json to_json(const CopulaSpec& s)
{
    Json j{{"family", to_string(s.kind)}};
    if (s.kind == CopulaKind::Independence) return j;
    if (s.is_static()) {
        j["theta"] = copula_inverse_link(s.kind, s.param.eta_inf);
    } else {
        j["eta0"] = s.param.eta0;
        j["eta_inf"] = s.param.eta_inf;
        j["kappa"] = s.param.kappa;
    }
    return j;
}

inline CopulaSpec copula_spec_from_json(const Json& j)
{
    const auto kind = parse_copula_kind(detail::json_get<std::string>(j, "family"));
    try {
        if (kind == CopulaKind::Independence) return CopulaSpec::independence();
        if (j.contains("theta")) return CopulaSpec::fixed(kind, detail::json_get<double>(j, "theta"));
        CopulaSpec s{kind, {detail::json_get<double>(j, "eta0"), detail::json_get<double>(j, "eta_inf"), detail::json_get<double>(j, "kappa")}};
        s.validate();
        return s;
    } catch (const ModelError& e) {
        throw DataError(e.what());
    }
}

inline Json to_json(const HacSpec& h)
{
    return {{"outer", to_json(h.outer)}, {"leaves", Json::array({to_json(h.leaves[0]), to_json(h.leaves[1])})}};
}

inline HacSpec hac_from_json(const Json& j)
{
    const auto leaves = detail::json_get<Json>(j, "leaves");
    if (!leaves.is_array() || leaves.size() != 2) throw DataError("HAC needs exactly two leaves");
    try {
        return make_hac(copula_family_from_json(detail::json_get<Json>(j, "outer")), copula_spec_from_json(leaves[0]),
                        copula_spec_from_json(leaves[1]));
    } catch (const ModelError& e) {
        throw DataError(e.what());
    }
}

// ---- full model ---------------------------------------------------------

inline Json to_json(const TypeModel& m)
{
    return {{"occurrence", to_json(m.occurrence)},
            {"delay", to_json(m.delay)},
            {"payments", to_json(m.payments.intensity)},
            {"severity", to_json(m.severity)},
            {"copula", to_json(m.copula)}};
}

inline TypeModel type_model_from_json(const Json& j)
{
    TypeModel m;
    m.occurrence = occurrence_from_json(detail::json_get<Json>(j, "occurrence"));
    m.delay = delay_from_json(detail::json_get<Json>(j, "delay"));
    m.payments = CountProcess{intensity_from_json(detail::json_get<Json>(j, "payments"))};
    m.severity = severity_from_json(detail::json_get<Json>(j, "severity"));
    m.copula = copula_spec_from_json(detail::json_get_or<Json>(j, "copula", Json{{"family", "independence"}}));
    return m;
}

inline Json to_json(const GranularModel& m)
{
    Json types = Json::object();
    for (auto t : kClaimTypes) {
        if (m.has(t)) types[std::string(to_string(t))] = to_json(m.of(t));
    }
    Json j{{"data_cutoff", format_iso_date(m.data_cutoff)}, {"types", types}};
    if (m.hac) j["hac"] = to_json(*m.hac);
    if (m.pair_occurrence) j["pair_occurrence"] = to_json(*m.pair_occurrence);
    return j;
}

inline GranularModel model_from_json(const Json& j)
{
    GranularModel m;
    m.data_cutoff = parse_iso_date_or_throw(detail::json_get<std::string>(j, "data_cutoff"));
    const auto types = detail::json_get<Json>(j, "types");
    for (const auto& [name, tj] : types.items()) {
        const auto t = parse_claim_type(name);
        if (!t) throw DataError("unknown claim type '" + name + "' in model");
        m.types[static_cast<std::size_t>(*t)] = type_model_from_json(tj);
    }
    if (j.contains("hac")) m.hac = hac_from_json(j.at("hac"));
    if (j.contains("pair_occurrence")) m.pair_occurrence = occurrence_from_json(j.at("pair_occurrence"));
    if (m.hac.has_value() != m.pair_occurrence.has_value()) throw DataError("hac and pair_occurrence must be given together");
    return m;
}

// ---- reports ------------------------------------------------------------

inline Json to_json(const FitReport& r)
{
    Json phases = Json::array();
    for (const auto& p : r.phases) {
        Json params = Json::array();
        for (std::size_t i = 0; i < p.estimates.size(); ++i) {
            params.push_back({{"name", i < p.parameter_names.size() ? p.parameter_names[i] : ""},
                              {"estimate", detail::number(p.estimates[i])},
                              {"se", detail::number(i < p.standard_errors.size() ? p.standard_errors[i] : NAN)}});
        }
        Json pj{{"phase", p.phase}, {"name", p.name}, {"family", p.family}, {"log_likelihood", detail::number(p.log_likelihood)},
                {"aic", detail::number(p.aic)}, {"parameters", params}, {"notes", p.notes}};
        if (!p.claim_type.empty()) pj["claim_type"] = p.claim_type;
        phases.push_back(pj);
    }
    return {{"claims", r.claims}, {"matched_pairs", r.matched_pairs}, {"hac_fitted", r.hac_fitted},
            {"phases", phases}, {"warnings", r.warnings}};
}

inline Json to_json(const Moments& m)
{
    Json q = Json::object();
    for (const auto& [level, v] : m.quantiles) {
        char key[32];
        std::snprintf(key, sizeof key, "%g", level);
        q[key] = detail::number(v);
    }
    return {{"mean", detail::number(m.mean)}, {"sd", detail::number(m.sd)}, {"quantiles", q}};
}

inline Json to_json(const ReserveSummary& s)
{
    return {{"scenarios", s.scenarios},
            {"levels", s.levels},
            {"total", to_json(s.total)},
            {"rbns", to_json(s.rbns)},
            {"ibnr", to_json(s.ibnr)},
            {"by_type", {{std::string(to_string(ClaimType::BodilyInjury)), to_json(s.by_type[0])},
                         {std::string(to_string(ClaimType::MaterialDamage)), to_json(s.by_type[1])}}},
            {"expected_cash_flows", detail::numbers(s.expected_cash_flows)}};
}

inline Json to_json(const ChainLadderResult& r)
{
    return {{"factors", detail::numbers(r.factors)}, {"latest", detail::numbers(r.latest)}, {"ultimate", detail::numbers(r.ultimate)},
            {"reserves", detail::numbers(r.reserves)}, {"total_reserve", detail::number(r.total_reserve)}};
}

} // namespace granular

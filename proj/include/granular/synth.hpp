#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "claims.hpp"
#include "copula.hpp"
#include "dates.hpp"
#include "delay.hpp"
#include "frequency.hpp"
#include "hac.hpp"
#include "payments.hpp"
#include "random.hpp"
#include "serialization.hpp"
#include "severity.hpp"

namespace granular {

/// Generator for one claim type.
struct SynthType {
    ClaimType type = ClaimType::BodilyInjury;
    CountDistribution gaps = PoissonCount{1.0};
    WeibullTV delay;
    IntensityFunction intensity = ExponentialDecay{3.0, 1.2};
    SeverityModel severity = IidSeverity{LogNormalSeverity{8.0, 1.0}};
    CopulaSpec copula; // static families only
};

/// Accidents that hit both claim types at once, joined by a HAC.
struct SynthPairs {
    CountDistribution gaps = PoissonCount{5.0};
    CopulaFamily outer{CopulaKind::Clayton, 0.5};
};

struct SynthConfig {
    Day start = 1827; // 2005-01-01
    std::size_t claims = 5000; // claims reported by the cutoff
    std::vector<SynthType> types;
    std::optional<SynthPairs> pairs;
    std::uint64_t seed = 1;
};

inline SynthConfig default_synth_config()
{
    SynthConfig c;
    SynthType bi;
    bi.type = ClaimType::BodilyInjury;
    bi.gaps = PoissonCount{0.8};
    bi.delay = WeibullTV{1.5, std::log(40.0), -0.03};
    bi.intensity = ExponentialDecay{3.0, 1.2};
    bi.severity = IidSeverity{LogNormalSeverity{8.0, 1.0}};
    bi.copula = CopulaSpec::fixed(CopulaKind::Clayton, 1.0);
    SynthType md;
    md.type = ClaimType::MaterialDamage;
    md.gaps = PoissonCount{0.6};
    md.delay = WeibullTV{1.2, std::log(20.0), -0.02};
    md.intensity = ExponentialDecay{2.0, 2.0};
    md.severity = IidSeverity{GammaSeverity{2.0, 0.002}};
    md.copula = CopulaSpec::independence();
    c.types = {bi, md};
    c.pairs = SynthPairs{PoissonCount{5.0}, {CopulaKind::Independence, 0.0}};
    return c;
}

inline Json to_json(const SynthConfig& c)
{
    Json types = Json::array();
    for (const auto& t : c.types) {
        types.push_back({{"type", to_string(t.type)},
                         {"gaps", to_json(t.gaps)},
                         {"delay", to_json(DelayModel{t.delay})},
                         {"payments", to_json(t.intensity)},
                         {"severity", to_json(t.severity)},
                         {"copula", to_json(t.copula)}});
    }
    Json j{{"start", format_iso_date(c.start)}, {"claims", c.claims}, {"types", types}, {"seed", c.seed}};
    if (c.pairs) j["pairs"] = {{"gaps", to_json(c.pairs->gaps)}, {"outer", to_json(c.pairs->outer)}};
    return j;
}

inline SynthConfig synth_config_from_json(const Json& j)
{
    SynthConfig c;
    if (j.contains("start")) c.start = parse_iso_date_or_throw(detail::json_get<std::string>(j, "start"));
    c.claims = detail::json_get_or<std::size_t>(j, "claims", c.claims);
    c.seed = detail::json_get_or<std::uint64_t>(j, "seed", c.seed);
    for (const auto& tj : detail::json_get<Json>(j, "types")) {
        SynthType t;
        const auto name = detail::json_get<std::string>(tj, "type");
        const auto type = parse_claim_type(name);
        if (!type) throw DataError("unknown claim type '" + name + "'");
        t.type = *type;
        t.gaps = count_from_json(detail::json_get<Json>(tj, "gaps"));
        const auto d = delay_from_json(detail::json_get<Json>(tj, "delay"));
        if (!std::holds_alternative<WeibullTV>(d)) throw DataError("synthetic delays must be weibull_tv");
        t.delay = std::get<WeibullTV>(d);
        t.intensity = intensity_from_json(detail::json_get<Json>(tj, "payments"));
        t.severity = severity_from_json(detail::json_get<Json>(tj, "severity"));
        t.copula = copula_spec_from_json(detail::json_get_or<Json>(tj, "copula", Json{{"family", "independence"}}));
        c.types.push_back(std::move(t));
    }
    if (j.contains("pairs")) {
        const auto& pj = j.at("pairs");
        c.pairs = SynthPairs{count_from_json(detail::json_get<Json>(pj, "gaps")),
                             copula_family_from_json(detail::json_get<Json>(pj, "outer"))};
    }
    return c;
}

inline void validate(const SynthConfig& c)
{
    if (c.types.empty()) throw DataError("synthetic generator needs at least one claim type");
    if (c.claims < 1) throw DataError("synthetic generator needs a positive claim count");
    std::array<int, 2> seen{0, 0};
    for (const auto& t : c.types) {
        if (++seen[static_cast<std::size_t>(t.type)] > 1) throw DataError("claim type listed twice in generator");
        if (!t.copula.is_static()) throw DataError("synthetic generator supports static copulas only");
        if (!(t.delay.shape > 0.0) || t.delay.c1 > 0.0) throw DataError("generator delay needs shape > 0 and c1 <= 0");
        try {
            validate(t.gaps);
            validate(t.intensity);
            if (count_mean(t.gaps) <= 0.0) throw ModelError("accident gaps must have a positive mean");
        } catch (const ModelError& e) {
            throw DataError(e.what());
        }
    }
    if (c.pairs) {
        if (seen[0] == 0 || seen[1] == 0) throw DataError("paired accidents need both claim types");
        try {
            HacSpec h{c.pairs->outer, {}};
            for (const auto& t : c.types) h.leaves[static_cast<std::size_t>(t.type)] = t.copula;
            validate(h);
        } catch (const ModelError& e) {
            throw DataError(e.what());
        }
    }
}

namespace detail {

struct PendingClaim {
    std::string id;
    ClaimType type;
    Day accident;
    Day reporting;
    std::vector<double> times; // internal years, possibly beyond any cutoff
    std::vector<double> amounts;
};

// Jump times of a claim's payment count. With count uniform v and a
// non-trivial copula, N(τ) = Q_τ⁻¹(v) for every τ: the k-th payment comes
// when Λ(τ) reaches the (1 - v) quantile of Gamma(k, 1). This gives the
// intended (W, N(τ)) copula at every horizon but makes increments dependent.
inline std::vector<double> latent_payment_times(const IntensityFunction& f, double v)
{
    std::vector<double> out;
    const double total = total_intensity(f);
    for (int k = 1; k < 100000; ++k) {
        const double level = boost::math::gamma_p_inv(static_cast<double>(k), 1.0 - v);
        if (!(level < total)) break;
        out.push_back(inverse_cumulative_intensity(f, level));
    }
    return out;
}

inline PendingClaim make_claim(const SynthType& t, Day accident, double u, std::optional<double> count_uniform, Rng& rng,
                               std::string id)
{
    PendingClaim c{std::move(id), t.type, accident, 0, {}, {}};
    c.reporting = accident + static_cast<Day>(std::floor(delay_quantile(DelayModel{t.delay}, accident, u)));
    const CountProcess cp{t.intensity};
    if (!count_uniform && t.copula.kind == CopulaKind::Independence) {
        // A long horizon covers the whole run-off of any finite-mass intensity.
        c.times = simulate_payment_times(cp, 0.0, 200.0, rng);
    } else {
        const double v = count_uniform ? *count_uniform : h_inverse(t.copula.at(0.0), u, uniform_open(rng));
        c.times = latent_payment_times(t.intensity, v);
    }
    c.amounts = simulate_amounts(t.severity, c.times.size(), rng);
    return c;
}

inline std::string claim_id(char prefix, std::size_t n, ClaimType t)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%07zu-%s", prefix, n, t == ClaimType::BodilyInjury ? "BI" : "MD");
    return buf;
}

} // namespace detail

struct SynthResult {
    Portfolio portfolio;
    Json truth;
};

/// Draws a portfolio from fully specified parameters. Accident streams are
/// extended month by month until at least `claims` claims are reported by
/// the end of the last month, which becomes the data cutoff.
inline SynthResult synthesize(const SynthConfig& cfg)
{
    validate(cfg);
    struct Stream {
        Rng rng;
        std::int64_t next; // day of the stream's next accident
    };
    auto first_arrival = [&](Stream& st, const CountDistribution& gaps) { st.next = cfg.start + sample_count(gaps, st.rng); };
    std::vector<Stream> streams;
    for (std::size_t k = 0; k < cfg.types.size(); ++k) {
        streams.push_back({make_stream(cfg.seed, k), 0});
        first_arrival(streams.back(), cfg.types[k].gaps);
    }
    Stream pair_stream{make_stream(cfg.seed, 100), 0};
    if (cfg.pairs) first_arrival(pair_stream, cfg.pairs->gaps);
    const SynthType* by_type[2] = {nullptr, nullptr};
    for (const auto& t : cfg.types) by_type[static_cast<std::size_t>(t.type)] = &t;

    std::vector<detail::PendingClaim> claims;
    std::size_t single_no = 0, pair_no = 0;
    Day end = cfg.start;
    std::size_t reported = 0;
    constexpr Day chunk = 30;
    const std::size_t max_claims = std::max<std::size_t>(100 * cfg.claims, 1000000);
    while (reported < cfg.claims) {
        const Day next_end = end + chunk;
        for (std::size_t k = 0; k < cfg.types.size(); ++k) {
            auto& st = streams[k];
            const auto& t = cfg.types[k];
            while (st.next <= next_end) {
                const auto day = static_cast<Day>(st.next);
                claims.push_back(detail::make_claim(t, day, uniform_open(st.rng), std::nullopt, st.rng,
                                                    detail::claim_id('C', ++single_no, t.type)));
                st.next += sample_count(t.gaps, st.rng);
                if (claims.size() > max_claims) throw ModelError("synthetic generator: too many claims");
            }
        }
        if (cfg.pairs) {
            const HacSpec h{cfg.pairs->outer, {by_type[0]->copula, by_type[1]->copula}};
            auto& st = pair_stream;
            while (st.next <= next_end) {
                const auto day = static_cast<Day>(st.next);
                const auto u = sample_hac(h, st.rng);
                ++pair_no;
                for (std::size_t k = 0; k < 2; ++k) {
                    const bool poisson_path = by_type[k]->copula.kind == CopulaKind::Independence;
                    claims.push_back(detail::make_claim(*by_type[k], day, u[2 * k],
                                                        poisson_path ? std::nullopt : std::optional<double>(u[2 * k + 1]), st.rng,
                                                        detail::claim_id('P', pair_no, kClaimTypes[k])));
                }
                st.next += sample_count(cfg.pairs->gaps, st.rng);
                if (claims.size() > max_claims) throw ModelError("synthetic generator: too many claims");
            }
        }
        end = next_end;
        reported = static_cast<std::size_t>(
            std::count_if(claims.begin(), claims.end(), [end](const auto& c) { return c.reporting <= end; }));
    }

    SynthResult out;
    out.portfolio.data_cutoff = end;
    for (auto& c : claims) {
        if (c.reporting > end) continue;
        ClaimRecord r{c.id, c.type, c.accident, c.reporting, {}};
        for (std::size_t i = 0; i < c.times.size(); ++i) {
            const Day d = c.reporting + static_cast<Day>(std::ceil(c.times[i] * kDaysPerYear - 1e-9));
            if (d > end) break;
            const double amount = std::max(std::round(c.amounts[i] * 100.0) / 100.0, 0.01);
            r.payments.push_back({std::max(d, c.reporting), amount});
        }
        out.portfolio.claims.push_back(std::move(r));
    }
    std::stable_sort(out.portfolio.claims.begin(), out.portfolio.claims.end(),
                     [](const ClaimRecord& a, const ClaimRecord& b) { return a.accident_date < b.accident_date; });
    out.truth = to_json(cfg);
    out.truth["data_cutoff"] = format_iso_date(end);
    out.truth["reported_claims"] = out.portfolio.claims.size();
    return out;
}

} // namespace granular

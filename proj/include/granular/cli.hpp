#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "claims.hpp"
#include "dates.hpp"
#include "error.hpp"
#include "model.hpp"
#include "reserving.hpp"
#include "serialization.hpp"
#include "synth.hpp"

namespace granular {

enum ExitCode : int { kExitOk = 0, kExitModel = 1, kExitData = 2 };

/// Settings shared by all commands. A JSON config file supplies defaults;
/// command-line flags override it.
struct RunConfig {
    std::string input;
    std::string model_path;
    std::vector<ClaimType> claim_types;
    std::optional<Day> valuation_date;
    std::string horizon; // one-year | ultimate | YYYY-MM-DD; empty: command default
    double runoff_years = 15.0;
    std::size_t scenarios = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    double period_days = kDaysPerYear / 12.0;
    std::vector<double> levels = kDefaultLevels;
    std::string out = "granular_out";
    int triangle_granularity = 1;
    FitOptions fit;
    SynthConfig synth = default_synth_config();
};

inline FitOptions fit_options_from_json(const Json& j, FitOptions o = {})
{
    using detail::json_get;
    if (j.contains("occurrence_family")) {
        const auto s = json_get<std::string>(j, "occurrence_family");
        o.occurrence_family = s == "auto" ? std::nullopt : std::optional<CountFamily>(parse_count_family(s));
    }
    if (j.contains("delay_family")) o.delay_family = parse_delay_family(json_get<std::string>(j, "delay_family"));
    if (j.contains("intensity_family")) {
        const auto s = json_get<std::string>(j, "intensity_family");
        o.intensity_family = s == "auto" ? std::nullopt : std::optional<IntensityFamily>(parse_intensity_family(s));
    }
    if (j.contains("severity")) o.severity = parse_severity_kind(json_get<std::string>(j, "severity"));
    if (j.contains("copula_candidates")) {
        o.copula_candidates.clear();
        for (const auto& s : json_get<std::vector<std::string>>(j, "copula_candidates")) o.copula_candidates.push_back(parse_copula_kind(s));
        if (o.copula_candidates.empty()) throw DataError("copula_candidates must not be empty");
    }
    o.time_varying_copula = detail::json_get_or<bool>(j, "time_varying_copula", o.time_varying_copula);
    if (j.contains("hac_outer")) o.hac_outer = parse_copula_kind(json_get<std::string>(j, "hac_outer"));
    if (j.contains("matching")) o.matching = parse_match_key(json_get<std::string>(j, "matching"));
    o.min_matched_pairs = detail::json_get_or<std::size_t>(j, "min_matched_pairs", o.min_matched_pairs);
    return o;
}

inline void apply_config_file(RunConfig& c, const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError("config file " + path + " must hold a JSON object");
    using detail::json_get_or;
    c.input = json_get_or<std::string>(j, "input", c.input);
    c.model_path = json_get_or<std::string>(j, "model", c.model_path);
    if (j.contains("claim_types")) {
        c.claim_types.clear();
        for (const auto& s : detail::json_get<std::vector<std::string>>(j, "claim_types")) {
            const auto t = parse_claim_type(s);
            if (!t) throw DataError("unknown claim type '" + s + "' in config");
            c.claim_types.push_back(*t);
        }
    }
    if (j.contains("valuation_date")) c.valuation_date = parse_iso_date_or_throw(detail::json_get<std::string>(j, "valuation_date"));
    c.horizon = json_get_or<std::string>(j, "horizon", c.horizon);
    c.runoff_years = json_get_or<double>(j, "runoff_years", c.runoff_years);
    c.scenarios = json_get_or<std::size_t>(j, "scenarios", c.scenarios);
    c.seed = json_get_or<std::uint64_t>(j, "seed", c.seed);
    c.workers = json_get_or<unsigned>(j, "workers", c.workers);
    c.period_days = json_get_or<double>(j, "period_days", c.period_days);
    c.levels = json_get_or<std::vector<double>>(j, "levels", c.levels);
    c.out = json_get_or<std::string>(j, "out", c.out);
    c.triangle_granularity = json_get_or<int>(j, "triangle_granularity", c.triangle_granularity);
    if (j.contains("fit")) c.fit = fit_options_from_json(j.at("fit"), c.fit);
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
}

namespace detail {

inline Portfolio load_portfolio(const RunConfig& c, std::ostream& err)
{
    if (c.input.empty()) throw DataError("no input file given (--input)");
    std::ifstream in(c.input);
    if (!in) throw DataError("cannot open input file: " + c.input);
    auto res = ingest_csv(in);
    if (!res.report.ok()) throw DataError("input file " + c.input + " rejected:\n" + res.report.to_text());
    for (const auto& w : res.report.warnings) err << "warning: " << c.input << ": line " << w.line << ": " << w.message << "\n";
    Portfolio p = std::move(res.portfolio);
    if (!c.claim_types.empty()) {
        std::erase_if(p.claims, [&](const ClaimRecord& r) {
            return std::find(c.claim_types.begin(), c.claim_types.end(), r.type) == c.claim_types.end();
        });
    }
    return p;
}

inline std::filesystem::path out_dir(const RunConfig& c)
{
    std::filesystem::path d(c.out);
    std::error_code ec;
    std::filesystem::create_directories(d, ec);
    if (ec) throw DataError("cannot create output directory " + c.out + ": " + ec.message());
    return d;
}

inline void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << content;
    if (!f) throw DataError("failed writing " + path.string());
}

inline ValuationWindow resolve_window(const RunConfig& c, Day a, const std::string& default_horizon)
{
    const std::string h = c.horizon.empty() ? default_horizon : c.horizon;
    ValuationWindow w;
    if (h == "one-year") w = one_year_window(a);
    else if (h == "ultimate") w = ultimate_window(a, c.runoff_years);
    else w = {a, parse_iso_date_or_throw(h)};
    validate(w);
    return w;
}

inline SimulationOptions sim_options(const RunConfig& c)
{
    if (c.scenarios < 1) throw DataError("--scenarios must be at least 1");
    return {c.scenarios, c.seed, c.workers, c.period_days};
}

inline std::string fmt(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

inline std::string scenarios_csv(const ReserveDistribution& d)
{
    std::ostringstream s;
    s << "scenario,total,rbns,ibnr,bodily_injury,material_damage,rbns_payments,ibnr_payments,ibnr_claims\n";
    for (std::size_t i = 0; i < d.scenarios.size(); ++i) {
        const auto& r = d.scenarios[i];
        s << i << ',' << fmt(r.total()) << ',' << fmt(r.rbns) << ',' << fmt(r.ibnr) << ',' << fmt(r.by_type[0]) << ','
          << fmt(r.by_type[1]) << ',' << r.rbns_payments << ',' << r.ibnr_payments << ',' << r.ibnr_claims << '\n';
    }
    return s.str();
}

inline std::string cash_flows_csv(const ReserveDistribution& d, const ReserveSummary& s)
{
    std::ostringstream o;
    o << "period,start_exclusive,end_inclusive,expected_payments\n";
    for (std::size_t i = 0; i < s.expected_cash_flows.size(); ++i) {
        const auto lo = d.window.a + static_cast<Day>(std::floor(static_cast<double>(i) * d.period_days + 1e-9));
        const auto hi = std::min<Day>(d.window.b, d.window.a + static_cast<Day>(std::floor(static_cast<double>(i + 1) * d.period_days + 1e-9)));
        o << i + 1 << ',' << format_iso_date(lo) << ',' << format_iso_date(hi) << ',' << fmt(s.expected_cash_flows[i]) << '\n';
    }
    return o.str();
}

// First against second payment amounts per claim type, with normal scores.
inline std::string severity_scores_csv(const Portfolio& p)
{
    std::ostringstream o;
    o << "claim_type,x1,x2,score1,score2\n";
    for (auto type : kClaimTypes) {
        std::vector<std::vector<double>> amounts;
        for (const auto& c : p.claims) {
            if (c.type != type) continue;
            std::vector<double> xs;
            for (const auto& e : c.payments) xs.push_back(e.amount);
            amounts.push_back(std::move(xs));
        }
        const auto [x1, x2] = payment_order_pairs(amounts, 1, 2);
        for (const auto& s : normal_scores(x1, x2)) {
            o << to_string(type) << ',' << fmt(s.x) << ',' << fmt(s.y) << ',' << fmt(s.score_x) << ',' << fmt(s.score_y) << '\n';
        }
    }
    return o.str();
}

inline Json window_json(const ValuationWindow& w)
{
    return {{"valuation_date", format_iso_date(w.a)}, {"horizon_end", format_iso_date(w.b)}, {"days", w.b - w.a}};
}

} // namespace detail

inline int cmd_synth(const RunConfig& c, std::ostream& out)
{
    SynthConfig sc = c.synth;
    sc.seed = c.seed;
    const auto res = synthesize(sc);
    const auto dir = detail::out_dir(c);
    std::ostringstream csv;
    write_csv(csv, res.portfolio);
    detail::write_file(dir / "portfolio.csv", csv.str());
    detail::write_file(dir / "truth.json", res.truth.dump(2) + "\n");
    out << "seed: " << sc.seed << "\n"
        << "claims: " << res.portfolio.claims.size() << " (data cutoff " << format_iso_date(res.portfolio.data_cutoff) << ")\n"
        << "wrote " << (dir / "portfolio.csv").string() << ", " << (dir / "truth.json").string() << "\n";
    return kExitOk;
}

inline int cmd_fit(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const Portfolio p = detail::load_portfolio(c, err);
    FitReport report;
    const auto model = fit_granular_model(p, c.fit, &report);
    const auto dir = detail::out_dir(c);
    detail::write_file(dir / "model.json", to_json(model).dump(2) + "\n");
    detail::write_file(dir / "fit_report.json", to_json(report).dump(2) + "\n");
    detail::write_file(dir / "severity_scores.csv", detail::severity_scores_csv(p));
    out << "fitted " << p.claims.size() << " claims (data cutoff " << format_iso_date(p.data_cutoff) << ")\n";
    for (const auto& ph : report.phases) {
        out << "  phase " << ph.phase << " " << ph.name << (ph.claim_type.empty() ? "" : " [" + ph.claim_type + "]") << ": "
            << ph.family << ", logL " << detail::fmt(ph.log_likelihood) << ", AIC " << detail::fmt(ph.aic) << "\n";
    }
    for (const auto& w : report.warnings) out << "  note: " << w << "\n";
    out << "wrote " << (dir / "model.json").string() << ", " << (dir / "fit_report.json").string() << "\n";
    return kExitOk;
}

inline int cmd_reserve(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const Portfolio p = detail::load_portfolio(c, err);
    GranularModel model;
    if (!c.model_path.empty()) {
        std::ifstream in(c.model_path);
        if (!in) throw DataError("cannot open model file: " + c.model_path);
        try {
            model = model_from_json(Json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("model file " + c.model_path + " is not valid JSON: " + e.what());
        }
    } else {
        model = fit_granular_model(p, c.fit);
    }
    const Day a = c.valuation_date.value_or(p.data_cutoff);
    if (a > p.data_cutoff) throw DataError("valuation date is after the data cutoff " + format_iso_date(p.data_cutoff));
    const auto win = detail::resolve_window(c, a, "one-year");
    const Portfolio seen = censor_at(p, a);
    const auto dist = simulate_reserves(model, seen, win, detail::sim_options(c));
    const auto summary = reserve_summary(dist, c.levels);
    const auto dir = detail::out_dir(c);
    Json j{{"seed", c.seed}, {"window", detail::window_json(win)}, {"summary", to_json(summary)},
           {"period_days", c.period_days}};
    detail::write_file(dir / "summary.json", j.dump(2) + "\n");
    detail::write_file(dir / "scenarios.csv", detail::scenarios_csv(dist));
    detail::write_file(dir / "cash_flows.csv", detail::cash_flows_csv(dist, summary));
    out << "seed: " << c.seed << "\n"
        << "window: (" << format_iso_date(win.a) << ", " << format_iso_date(win.b) << "]\n"
        << "scenarios: " << summary.scenarios << "\n"
        << "mean reserve: " << detail::fmt(summary.total.mean) << " (rbns " << detail::fmt(summary.rbns.mean) << ", ibnr "
        << detail::fmt(summary.ibnr.mean) << ")\n";
    for (const auto& [q, v] : summary.total.quantiles) out << "  q" << q << ": " << detail::fmt(v) << "\n";
    out << "wrote " << (dir / "summary.json").string() << "\n";
    return kExitOk;
}

inline int cmd_backtest(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const Portfolio p = detail::load_portfolio(c, err);
    const Day a = c.valuation_date.value_or(p.data_cutoff - 365);
    const auto win = detail::resolve_window(c, a, "one-year");
    const auto r = backtest(p, c.fit, win, detail::sim_options(c), {0.05, 0.95}, c.levels);
    Json cov = Json::object();
    for (const auto& [q, below] : r.at_or_below) {
        char key[32];
        std::snprintf(key, sizeof key, "%g", q);
        cov[key] = below;
    }
    Json j{{"seed", c.seed},
           {"window", detail::window_json(win)},
           {"actual", r.actual},
           {"summary", to_json(r.summary)},
           {"actual_at_or_below_quantile", cov},
           {"band", {{"lower_level", 0.05}, {"upper_level", 0.95}, {"lower", r.band_lower}, {"upper", r.band_upper}, {"inside", r.inside_band}}},
           {"fit_report", to_json(r.fit_report)}};
    const auto dir = detail::out_dir(c);
    detail::write_file(dir / "backtest.json", j.dump(2) + "\n");
    out << "seed: " << c.seed << "\n"
        << "window: (" << format_iso_date(win.a) << ", " << format_iso_date(win.b) << "]\n"
        << "actual: " << detail::fmt(r.actual) << ", predicted mean " << detail::fmt(r.summary.total.mean) << "\n"
        << "band (0.05, 0.95): [" << detail::fmt(r.band_lower) << ", " << detail::fmt(r.band_upper) << "] "
        << (r.inside_band ? "inside" : "outside") << "\n"
        << "wrote " << (dir / "backtest.json").string() << "\n";
    return kExitOk;
}

inline int cmd_triangle(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const Portfolio p = detail::load_portfolio(c, err);
    const auto tri = aggregate_triangle(p, c.triangle_granularity);
    const auto cl = chain_ladder_reserve(tri);
    std::ostringstream csv;
    std::size_t cols = 0;
    for (const auto& row : tri.cells) cols = std::max(cols, row.size());
    csv << "origin";
    for (std::size_t j = 0; j < cols; ++j) csv << ",dev" << j;
    csv << "\n";
    for (std::size_t i = 0; i < tri.cells.size(); ++i) {
        csv << tri.first_year + static_cast<int>(i) * tri.granularity_years;
        for (std::size_t j = 0; j < cols; ++j) {
            csv << ',';
            if (j < tri.cells[i].size() && tri.cells[i][j]) csv << detail::fmt(*tri.cells[i][j]);
        }
        csv << "\n";
    }
    const auto dir = detail::out_dir(c);
    detail::write_file(dir / "triangle.csv", csv.str());
    detail::write_file(dir / "chain_ladder.json", to_json(cl).dump(2) + "\n");
    out << "origins: " << tri.cells.size() << "\n"
        << "chain-ladder reserve: " << detail::fmt(cl.total_reserve) << "\n"
        << "wrote " << (dir / "triangle.csv").string() << ", " << (dir / "chain_ladder.json").string() << "\n";
    return kExitOk;
}

/// Parses arguments, runs one command and maps failures to exit codes:
/// 0 success, 1 model/numeric failure, 2 I/O or configuration failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Claim-by-claim stochastic loss reserving"};
    app.require_subcommand(1);

    std::string config_path, input, model_path, valuation, horizon, out_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> scenarios;
    std::optional<unsigned> workers;

    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", config_path, "JSON config file (flags override it)");
        s->add_option("--out", out_path, "output directory");
        s->add_option("--seed", seed, "master random seed");
    };
    auto add_input = [&](CLI::App* s) { s->add_option("--input", input, "claims CSV"); };
    auto add_sim = [&](CLI::App* s) {
        s->add_option("--scenarios", scenarios, "number of Monte Carlo scenarios");
        s->add_option("--valuation-date", valuation, "valuation date a (YYYY-MM-DD)");
        s->add_option("--horizon", horizon, "one-year | ultimate | YYYY-MM-DD");
        s->add_option("--workers", workers, "worker threads (default: available cores)");
    };

    auto* synth = app.add_subcommand("synth", "write a synthetic portfolio and its true parameters");
    add_common(synth);
    std::optional<std::size_t> claims;
    synth->add_option("--claims", claims, "number of reported claims to generate");
    auto* fit = app.add_subcommand("fit", "fit the model and write model.json and fit_report.json");
    add_common(fit);
    add_input(fit);
    auto* reserve = app.add_subcommand("reserve", "simulate reserves and write summary.json, scenarios.csv, cash_flows.csv");
    add_common(reserve);
    add_input(reserve);
    add_sim(reserve);
    reserve->add_option("--model", model_path, "fitted model JSON (fits from --input when omitted)");
    auto* bt = app.add_subcommand("backtest", "refit at the valuation date and score the holdout");
    add_common(bt);
    add_input(bt);
    add_sim(bt);
    auto* tri = app.add_subcommand("triangle", "write the run-off triangle and the chain-ladder reserve");
    add_common(tri);
    add_input(tri);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitData;
    }

    try {
        RunConfig c;
        if (!config_path.empty()) apply_config_file(c, config_path);
        if (!input.empty()) c.input = input;
        if (!model_path.empty()) c.model_path = model_path;
        if (!valuation.empty()) c.valuation_date = parse_iso_date_or_throw(valuation);
        if (!horizon.empty()) c.horizon = horizon;
        if (!out_path.empty()) c.out = out_path;
        if (seed) c.seed = *seed;
        if (scenarios) c.scenarios = *scenarios;
        if (workers) c.workers = *workers;
        if (claims) c.synth.claims = *claims;

        if (synth->parsed()) return cmd_synth(c, out);
        if (fit->parsed()) return cmd_fit(c, out, err);
        if (reserve->parsed()) return cmd_reserve(c, out, err);
        if (bt->parsed()) return cmd_backtest(c, out, err);
        return cmd_triangle(c, out, err);
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ModelError& e) {
        err << "model error: " << e.what() << "\n";
        return kExitModel;
    } catch (const std::exception& e) {
        err << "model error: " << e.what() << "\n";
        return kExitModel;
    }
}

} // namespace granular

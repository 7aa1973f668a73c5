#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace granular;
using testing_support::ymd;

namespace {

ClaimRecord claim(std::string id, ClaimType t, Day acc, Day rep)
{
    return ClaimRecord{std::move(id), t, acc, rep, {{rep + 10, 100.0}}};
}

const PhaseReport& phase(const FitReport& r, const std::string& name, const std::string& type)
{
    for (const auto& p : r.phases) {
        if (p.name == name && p.claim_type == type) return p;
    }
    throw std::runtime_error("no phase " + name + " for " + type);
}

double estimate(const PhaseReport& p, const std::string& name, double* se = nullptr)
{
    for (std::size_t i = 0; i < p.parameter_names.size(); ++i) {
        if (p.parameter_names[i] == name) {
            if (se) *se = p.standard_errors[i];
            return p.estimates[i];
        }
    }
    throw std::runtime_error("no parameter " + name + " in " + p.name);
}

void expect_within_se(const PhaseReport& p, const std::string& name, double truth, double k = 3.0)
{
    double se = 0.0;
    const double est = estimate(p, name, &se);
    ASSERT_TRUE(std::isfinite(se) && se > 0.0) << p.name << " " << name;
    EXPECT_LE(std::abs(est - truth), k * se) << p.name << "/" << p.claim_type << " " << name << " est " << est
                                             << " truth " << truth << " se " << se;
}

SynthConfig bi_only(std::size_t claims, std::uint64_t seed)
{
    auto cfg = default_synth_config();
    cfg.types.resize(1);
    cfg.pairs.reset();
    cfg.claims = claims;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST(Matching, IdStemRequiresSharedAccidentDate)
{
    const Day d = ymd(2010, 3, 1);
    Portfolio p;
    p.data_cutoff = ymd(2012, 1, 1);
    p.claims = {claim("A-BI", ClaimType::BodilyInjury, d, d + 3), claim("A-MD", ClaimType::MaterialDamage, d, d + 1),
                claim("B-BI", ClaimType::BodilyInjury, d, d + 2), claim("C-MD", ClaimType::MaterialDamage, d, d + 5),
                claim("E-BI", ClaimType::BodilyInjury, d + 1, d + 4), claim("E-MD", ClaimType::MaterialDamage, d + 3, d + 6)};

    Diagnostics diag;
    const auto by_stem = match_claims(p, MatchKey::ClaimIdStem, &diag);
    ASSERT_EQ(by_stem.size(), 1u);
    EXPECT_EQ(p.claims[by_stem[0].first].id, "A-BI");
    EXPECT_EQ(p.claims[by_stem[0].second].id, "A-MD");
    ASSERT_EQ(diag.warnings.size(), 1u);
    EXPECT_NE(diag.warnings[0].find("accident dates differ"), std::string::npos);

    const auto by_date = match_claims(p, MatchKey::AccidentDate);
    ASSERT_EQ(by_date.size(), 2u);
    for (auto [i, j] : by_date) {
        EXPECT_EQ(p.claims[i].type, ClaimType::BodilyInjury);
        EXPECT_EQ(p.claims[j].type, ClaimType::MaterialDamage);
        EXPECT_EQ(p.claims[i].accident_date, p.claims[j].accident_date);
    }
    EXPECT_TRUE(match_claims(p, MatchKey::None).empty());
    EXPECT_EQ(claim_id_stem("P0000012-MD"), "P0000012");
    EXPECT_EQ(claim_id_stem("nodash"), "nodash");
}

TEST(Matching, KeysParse)
{
    for (auto k : {MatchKey::ClaimIdStem, MatchKey::AccidentDate, MatchKey::None}) EXPECT_EQ(parse_match_key(to_string(k)), k);
    EXPECT_THROW(parse_match_key("policy"), DataError);
}

TEST(Fit, SingleTypeSkipsHacWithNotice)
{
    const auto s = synthesize(bi_only(3000, 4));
    FitReport rep;
    const auto m = fit_granular_model(s.portfolio, {}, &rep);
    EXPECT_TRUE(m.has(ClaimType::BodilyInjury));
    EXPECT_FALSE(m.has(ClaimType::MaterialDamage));
    EXPECT_FALSE(m.hac.has_value());
    EXPECT_FALSE(rep.hac_fitted);
    const auto& w = rep.warnings;
    EXPECT_NE(std::find(w.begin(), w.end(), "HAC stage skipped: portfolio holds a single claim type"), w.end());
}

TEST(Fit, PhasesRunInOrderMarginsFirst)
{
    const auto s = synthesize(bi_only(3000, 5));
    FitReport rep;
    fit_granular_model(s.portfolio, {}, &rep);
    std::vector<std::string> names;
    for (const auto& p : rep.phases) names.push_back(p.name);
    const std::vector<std::string> expect{"occurrence", "reporting delay", "payment process", "severity", "delay-count copula"};
    EXPECT_EQ(names, expect);
    for (const auto& p : rep.phases) {
        EXPECT_EQ(p.estimates.size(), p.standard_errors.size()) << p.name;
        EXPECT_FALSE(p.family.empty()) << p.name;
    }
}

TEST(Fit, FailureNamesThePhase)
{
    // Too few claims for the delay fit.
    const auto s = synthesize(bi_only(60, 2));
    FitOptions opt;
    opt.min_per_year = 5;
    try {
        fit_granular_model(s.portfolio, opt);
        FAIL() << "expected a model error";
    } catch (const ModelError& e) {
        const std::string msg = e.what();
        EXPECT_EQ(msg.rfind("phase ", 0), 0u) << msg;
        EXPECT_NE(msg.find("bodily_injury"), std::string::npos) << msg;
    }
    EXPECT_THROW(fit_granular_model(Portfolio{{}, ymd(2010, 1, 1)}), ModelError);
}

TEST(Fit, SyntheticRoundTripWithinThreeStandardErrors)
{
    auto cfg = default_synth_config();
    cfg.claims = 8000;
    cfg.seed = 21;
    const auto s = synthesize(cfg);
    FitOptions opt;
    opt.occurrence_family = CountFamily::Poisson;
    opt.intensity_family = IntensityFamily::Exponential;
    FitReport rep;
    const auto m = fit_granular_model(s.portfolio, opt, &rep);

    const auto& bi = cfg.types[0];
    const auto& md = cfg.types[1];
    for (const auto* t : {&bi, &md}) {
        const std::string name(to_string(t->type));
        const auto& d = phase(rep, "reporting delay", name);
        expect_within_se(d, "shape", t->delay.shape);
        expect_within_se(d, "c0", t->delay.c0);
        expect_within_se(d, "c1", t->delay.c1);
        const auto& pay = phase(rep, "payment process", name);
        const auto& f = std::get<ExponentialDecay>(t->intensity);
        expect_within_se(pay, "rate0", f.rate0);
        expect_within_se(pay, "decay", f.decay);

        // Yearly occurrence rates: allow the odd 3-SE miss across ~40 years.
        const auto& occ = phase(rep, "occurrence", name);
        const double mean = std::get<PoissonCount>(t->gaps).mean;
        std::size_t inside = 0;
        for (std::size_t i = 0; i < occ.estimates.size(); ++i) {
            inside += std::abs(occ.estimates[i] - mean) <= 3.0 * occ.standard_errors[i];
        }
        EXPECT_GE(static_cast<double>(inside), 0.9 * static_cast<double>(occ.estimates.size())) << name;
    }
    const auto& sev_bi = phase(rep, "severity", "bodily_injury");
    EXPECT_EQ(sev_bi.family, "lognormal");
    expect_within_se(sev_bi, "mu", 8.0);
    expect_within_se(sev_bi, "sigma", 1.0);
    const auto& sev_md = phase(rep, "severity", "material_damage");
    EXPECT_EQ(sev_md.family, "gamma");
    expect_within_se(sev_md, "shape", 2.0);
    expect_within_se(sev_md, "rate", 0.002);

    const auto& cop = phase(rep, "delay-count copula", "bodily_injury");
    EXPECT_EQ(cop.family, "clayton");
    expect_within_se(cop, "theta", 1.0);
    EXPECT_EQ(m.of(ClaimType::BodilyInjury).copula.kind, CopulaKind::Clayton);
    EXPECT_GT(rep.matched_pairs, 30u);
}

TEST(Fit, CrossTypeDependenceIsPickedUp)
{
    auto cfg = default_synth_config();
    cfg.claims = 6000;
    cfg.seed = 8;
    cfg.types[1].copula = CopulaSpec::fixed(CopulaKind::Clayton, 2.0);
    cfg.pairs = SynthPairs{PoissonCount{2.0}, make_copula(CopulaKind::Clayton, 0.6)};
    const auto s = synthesize(cfg);
    FitOptions opt;
    opt.hac_outer = CopulaKind::Clayton;
    FitReport rep;
    const auto m = fit_granular_model(s.portfolio, opt, &rep);
    ASSERT_TRUE(rep.hac_fitted);
    ASSERT_TRUE(m.hac.has_value());
    ASSERT_TRUE(m.pair_occurrence.has_value());
    EXPECT_EQ(m.hac->outer.kind, CopulaKind::Clayton);
    EXPECT_NEAR(kendall_tau(m.hac->outer), 0.6 / 2.6, 0.08);
    EXPECT_NO_THROW(validate(*m.hac));
}

TEST(Fit, TooFewMatchedPairsSkipsHac)
{
    auto cfg = default_synth_config();
    cfg.claims = 3000;
    cfg.seed = 6;
    cfg.pairs.reset();
    const auto s = synthesize(cfg);
    FitReport rep;
    const auto m = fit_granular_model(s.portfolio, {}, &rep);
    EXPECT_FALSE(m.hac.has_value());
    bool noticed = false;
    for (const auto& w : rep.warnings) noticed |= w.rfind("HAC stage skipped: 0 matched pairs", 0) == 0;
    EXPECT_TRUE(noticed);
}

TEST(Serialization, ModelRoundTripIsExact)
{
    auto cfg = default_synth_config();
    cfg.claims = 4000;
    cfg.seed = 13;
    const auto s = synthesize(cfg);
    auto m = fit_granular_model(s.portfolio);
    // Exercise the less common variants too.
    auto& md = *m.types[1];
    md.severity = OrderAR{{0.4, 0.2}, GammaSeverity{2.0, 0.002}, 300.0, InnovationKind::Gaussian, 0.01};
    md.copula = CopulaSpec{CopulaKind::Gumbel, {0.3, -0.5, 1.7}};
    md.occurrence.by_year[0] = ZeroModifiedCount{NegativeBinomialCount{2.0, 0.4}, 0.3};
    m.hac = make_hac(make_copula(CopulaKind::Gumbel, 1.1), m.types[0]->copula, md.copula);
    m.pair_occurrence = OccurrenceModel{2005, {PoissonCount{5.0}, NegativeBinomialCount{3.0, 0.5}}};

    const auto j = to_json(m);
    const auto back = model_from_json(Json::parse(j.dump()));
    EXPECT_EQ(to_json(back).dump(), j.dump());

    SimulationOptions sim;
    sim.scenarios = 50;
    sim.seed = 3;
    sim.workers = 1;
    const ValuationWindow w = one_year_window(s.portfolio.data_cutoff);
    const auto r1 = simulate_reserves(m, s.portfolio, w, sim);
    const auto r2 = simulate_reserves(back, s.portfolio, w, sim);
    for (std::size_t i = 0; i < r1.scenarios.size(); ++i) EXPECT_EQ(r1.scenarios[i].total(), r2.scenarios[i].total());
}

TEST(Serialization, RejectsMalformedModels)
{
    EXPECT_THROW(model_from_json(Json::parse(R"({"types": {"bodily_injury": {}}})")), DataError);
    EXPECT_THROW(model_from_json(Json::parse(R"({"types": {"theft": {}}})")), DataError);
}

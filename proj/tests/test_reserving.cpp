#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "test_support.hpp"

using namespace granular;
using testing_support::ymd;

namespace {

TypeModel simple_type(CopulaSpec copula = CopulaSpec::independence(), double gap_mean = 0.8)
{
    TypeModel m;
    m.occurrence = OccurrenceModel{2010, {PoissonCount{gap_mean}}};
    m.delay = WeibullTV{1.5, std::log(30.0), 0.0};
    m.payments = CountProcess{ExponentialDecay{3.0, 1.2}};
    m.severity = IidSeverity{LogNormalSeverity{8.0, 1.0}};
    m.copula = copula;
    return m;
}

GranularModel one_type_model(const TypeModel& m, Day cutoff)
{
    GranularModel g;
    g.types[0] = m;
    g.data_cutoff = cutoff;
    return g;
}

ClaimRecord open_claim(std::string id, Day acc, Day rep, std::vector<PaymentEvent> pays = {})
{
    return {std::move(id), ClaimType::BodilyInjury, acc, rep, std::move(pays)};
}

std::vector<double> totals(const ReserveDistribution& d)
{
    std::vector<double> xs;
    for (const auto& s : d.scenarios) xs.push_back(s.total());
    return xs;
}

const Day kA = ymd(2015, 6, 30);

} // namespace

TEST(Window, Construction)
{
    EXPECT_EQ(one_year_window(kA).b, kA + 365);
    EXPECT_EQ(ultimate_window(kA).b, kA + 5479);
    EXPECT_EQ(ultimate_window(kA, 2.0).b, kA + 731);
    EXPECT_THROW(validate(ValuationWindow{kA, kA}), DataError);
    EXPECT_THROW(validate(ValuationWindow{kA, kA - 1}), DataError);
}

TEST(ReportingProb, ExponentialDelayExample)
{
    // Exponential delay with mean 10 days, t = a - 5, b = a + 10.
    const DelayModel d = WeibullTV{1.0, std::log(10.0), 0.0};
    const ValuationWindow w{kA, kA + 10};
    EXPECT_NEAR(reporting_prob_window(d, w, kA - 5.0), std::exp(-0.5) - std::exp(-1.5), 1e-12);
    EXPECT_THROW(reporting_prob_window(d, w, kA + 1.0), ModelError);
    // All mass long before a.
    const DelayModel quick = WeibullTV{2.0, std::log(0.01), 0.0};
    EXPECT_EQ(reporting_prob_window(quick, w, kA - 30.0), 0.0);
}

TEST(IbnrConditional, IndependenceFactorizes)
{
    const auto m = simple_type();
    const ValuationWindow win = one_year_window(kA);
    const double t = kA - 20.0, w = 45.0;
    const double pw = reporting_prob_window(m.delay, win, t);
    const double tau = (win.b - t - w) / kDaysPerYear;
    for (std::int64_t n = 0; n < 12; ++n) {
        const double direct = count_pmf(m.payments, tau, n) / pw;
        EXPECT_NEAR(ibnr_count_conditional(m, win, t, w, n), direct, 1e-12 * std::max(1.0, direct)) << n;
    }
    EXPECT_EQ(ibnr_count_conditional(m, win, t, w, -1), 0.0);
    EXPECT_THROW(ibnr_count_conditional(m, win, t, 10.0, 1), ModelError); // reported by a
    EXPECT_THROW(ibnr_count_conditional(m, win, t, 400.0, 1), ModelError); // after b
}

TEST(IbnrConditional, NormalizesOverTheWindow)
{
    const ValuationWindow win = one_year_window(kA);
    for (const auto& spec : {CopulaSpec::fixed(CopulaKind::Clayton, 2.0), CopulaSpec::fixed(CopulaKind::Gumbel, 1.8),
                             CopulaSpec::fixed(CopulaKind::Frank, -3.0)}) {
        const auto m = simple_type(spec);
        for (double lag : {3.0, 40.0}) {
            const double t = kA - lag;
            // Σ_n over a generous count range; the remaining horizon is at most a year.
            auto inner = [&](double w) {
                double s = 0.0;
                for (std::int64_t n = 0; n <= 40; ++n) s += ibnr_count_conditional(m, win, t, w, n);
                return s * delay_density(m.delay, t, w);
            };
            const double lo = kA - t + 1e-9, hi = win.b - t;
            const double total = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(inner, lo, hi, 10, 1e-10);
            EXPECT_NEAR(total, 1.0, 1e-3) << to_string(spec.kind) << " lag " << lag;
        }
    }
}

TEST(IbnrConditional, ShortRemainingHorizonMeansNoPayments)
{
    const auto m = simple_type(CopulaSpec::fixed(CopulaKind::Clayton, 2.0));
    const ValuationWindow win = one_year_window(kA);
    const double t = kA - 10.0;
    const double w = win.b - t - 1e-7;
    double all = 0.0, positive = 0.0;
    for (std::int64_t n = 0; n <= 30; ++n) {
        const double f = ibnr_count_conditional(m, win, t, w, n);
        all += f;
        if (n >= 1) positive += f;
    }
    EXPECT_GT(all, 0.0);
    EXPECT_LT(positive / all, 1e-6);
}

TEST(IbnrSimulate, NothingWhenDelaysEndBeforeValuation)
{
    auto m = simple_type();
    m.delay = WeibullTV{3.0, std::log(0.05), 0.0};
    const auto g = one_type_model(m, kA);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) EXPECT_TRUE(ibnr_simulate(g, one_year_window(kA), rng).empty());
}

TEST(IbnrSimulate, IndependenceMeanCountMatchesQuadrature)
{
    auto m = simple_type();
    m.delay = WeibullTV{1.3, std::log(60.0), -0.02};
    const auto g = one_type_model(m, kA);
    const ValuationWindow win = one_year_window(kA);
    const double oracle = testing_support::ibnr_payment_count_oracle(m, win);
    std::vector<double> counts;
    for (std::uint64_t s = 0; s < 3000; ++s) {
        Rng rng = make_stream(77, s);
        double n = 0.0;
        for (const auto& c : ibnr_simulate(g, win, rng)) {
            n += static_cast<double>(c.payments.size());
            EXPECT_GT(c.reporting_date, win.a);
            EXPECT_LE(c.reporting_date, win.b);
            EXPECT_LE(c.accident_date, win.a);
            for (const auto& p : c.payments) {
                EXPECT_GT(p.date, c.reporting_date);
                EXPECT_LE(p.date, win.b);
            }
        }
        counts.push_back(n);
    }
    EXPECT_NEAR(stats::mean(counts), oracle, 3.0 * testing_support::mc_se(counts)) << "oracle " << oracle;
}

TEST(IbnrSimulate, Deterministic)
{
    const auto g = one_type_model(simple_type(CopulaSpec::fixed(CopulaKind::Clayton, 1.0)), kA);
    Rng a(5), b(5);
    const auto x = ibnr_simulate(g, one_year_window(kA), a);
    const auto y = ibnr_simulate(g, one_year_window(kA), b);
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(x[i].reporting_date, y[i].reporting_date);
        ASSERT_EQ(x[i].payments.size(), y[i].payments.size());
        for (std::size_t j = 0; j < x[i].payments.size(); ++j) EXPECT_EQ(x[i].payments[j].amount, y[i].payments[j].amount);
    }
}

TEST(Rbns, MeanCountIsIncrementOfCumulativeIntensity)
{
    const auto m = simple_type();
    const auto c = open_claim("A", kA - 200, kA - 150);
    const ValuationWindow win = one_year_window(kA);
    const double expect = cumulative_intensity(m.payments.intensity, (win.b - c.reporting_date) / kDaysPerYear) -
                          cumulative_intensity(m.payments.intensity, (win.a - c.reporting_date) / kDaysPerYear);
    std::vector<double> n;
    Rng rng(9);
    for (int i = 0; i < 50000; ++i) {
        const auto pays = rbns_predict(c, m, win, rng);
        for (const auto& p : pays) {
            ASSERT_GT(p.date, win.a);
            ASSERT_LE(p.date, win.b);
        }
        n.push_back(static_cast<double>(pays.size()));
    }
    EXPECT_NEAR(stats::mean(n), expect, 3.0 * testing_support::mc_se(n));
    EXPECT_THROW(rbns_predict(open_claim("B", kA, kA + 1), m, win, rng), ModelError);
}

TEST(Rbns, IndependentOfObservedCount)
{
    const auto m = simple_type();
    const ValuationWindow win = one_year_window(kA);
    const auto quiet = open_claim("A", kA - 300, kA - 250);
    const auto busy = open_claim("B", kA - 300, kA - 250, {{kA - 240, 500.0}, {kA - 100, 80.0}, {kA - 3, 1200.0}});
    for (std::uint64_t s = 0; s < 200; ++s) {
        Rng r1 = make_stream(4, s), r2 = make_stream(4, s);
        const auto x = rbns_predict(quiet, m, win, r1);
        const auto y = rbns_predict(busy, m, win, r2);
        ASSERT_EQ(x.size(), y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            EXPECT_EQ(x[i].date, y[i].date);
            EXPECT_EQ(x[i].amount, y[i].amount);
        }
    }
}

TEST(SimulateReserves, EmptyPortfolioWithoutArrivalsIsZero)
{
    auto m = simple_type();
    m.occurrence = OccurrenceModel{2010, {PointMassCount{1000000}}};
    const auto g = one_type_model(m, kA);
    SimulationOptions opt;
    opt.scenarios = 20;
    const auto d = simulate_reserves(g, Portfolio{{}, kA}, one_year_window(kA), opt);
    for (double x : totals(d)) EXPECT_EQ(x, 0.0);
    const auto s = reserve_summary(d);
    EXPECT_EQ(s.total.mean, 0.0);
    EXPECT_EQ(s.total.sd, 0.0);
}

TEST(SimulateReserves, DeterministicAcrossWorkerCounts)
{
    const auto g = one_type_model(simple_type(CopulaSpec::fixed(CopulaKind::Clayton, 1.0)), kA);
    Portfolio p{{open_claim("A", kA - 90, kA - 60), open_claim("B", kA - 20, kA - 2)}, kA};
    SimulationOptions opt;
    opt.scenarios = 64;
    opt.seed = 11;
    opt.workers = 1;
    const auto one = totals(simulate_reserves(g, p, one_year_window(kA), opt));
    opt.workers = 3;
    const auto three = totals(simulate_reserves(g, p, one_year_window(kA), opt));
    EXPECT_EQ(one, three);
    opt.seed = 12;
    EXPECT_NE(one, totals(simulate_reserves(g, p, one_year_window(kA), opt)));
}

TEST(SimulateReserves, ConservationAndDecomposition)
{
    const auto g = one_type_model(simple_type(CopulaSpec::fixed(CopulaKind::Gumbel, 1.5)), kA);
    Portfolio p{{open_claim("A", kA - 400, kA - 380), open_claim("B", kA - 30, kA - 10)}, kA};
    SimulationOptions opt;
    opt.scenarios = 200;
    const auto d = simulate_reserves(g, p, one_year_window(kA), opt);
    EXPECT_EQ(d.periods(), 12u);
    for (const auto& s : d.scenarios) {
        double flows = 0.0;
        for (double x : s.cash_flows) flows += x;
        EXPECT_NEAR(flows, s.total(), 1e-9 * std::max(1.0, s.total()));
        EXPECT_NEAR(s.by_type[0] + s.by_type[1], s.total(), 1e-9 * std::max(1.0, s.total()));
        EXPECT_EQ(s.by_type[1], 0.0);
    }
    EXPECT_THROW(simulate_reserves(g, p, one_year_window(kA), SimulationOptions{0, 1, 1, 30.0}), DataError);
}

TEST(SimulateReserves, DoublingSeverityScaleDoublesMean)
{
    auto m = simple_type();
    Portfolio p{{open_claim("A", kA - 100, kA - 70), open_claim("B", kA - 50, kA - 40)}, kA};
    SimulationOptions opt;
    opt.scenarios = 2000;
    opt.seed = 3;
    const auto base = totals(simulate_reserves(one_type_model(m, kA), p, one_year_window(kA), opt));
    m.severity = IidSeverity{LogNormalSeverity{8.0 + std::log(2.0), 1.0}};
    const auto doubled = totals(simulate_reserves(one_type_model(m, kA), p, one_year_window(kA), opt));
    std::vector<double> diff;
    for (std::size_t i = 0; i < base.size(); ++i) diff.push_back(doubled[i] - 2.0 * base[i]);
    const double mb = stats::mean(base);
    EXPECT_NEAR(stats::mean(doubled), 2.0 * mb, 3.0 * testing_support::mc_se(diff) + 1e-9 * mb);
}

TEST(SimulateReserves, IndependenceMeanIsCompoundPoisson)
{
    const auto m = simple_type();
    const auto g = one_type_model(m, kA);
    const ValuationWindow win = one_year_window(kA);
    Portfolio p{{open_claim("A", kA - 700, kA - 650), open_claim("B", kA - 120, kA - 100), open_claim("C", kA - 8, kA - 1)}, kA};
    double count = testing_support::ibnr_payment_count_oracle(m, win);
    for (const auto& c : p.claims) {
        count += cumulative_intensity(m.payments.intensity, (win.b - c.reporting_date) / kDaysPerYear) -
                 cumulative_intensity(m.payments.intensity, (win.a - c.reporting_date) / kDaysPerYear);
    }
    const double mean_x = std::exp(8.0 + 0.5);
    SimulationOptions opt;
    opt.scenarios = 4000;
    opt.seed = 19;
    const auto xs = totals(simulate_reserves(g, p, win, opt));
    EXPECT_NEAR(stats::mean(xs), count * mean_x, 3.0 * testing_support::mc_se(xs));
}

TEST(Summary, ConstantScenarios)
{
    ReserveDistribution d;
    d.window = one_year_window(kA);
    for (int i = 0; i < 10; ++i) d.scenarios.push_back({60.0, 40.0, {100.0, 0.0}, {}, 0, 0, 0});
    const auto s = reserve_summary(d);
    EXPECT_EQ(s.total.sd, 0.0);
    ASSERT_EQ(s.total.quantiles.size(), kDefaultLevels.size());
    for (const auto& [q, v] : s.total.quantiles) EXPECT_EQ(v, 100.0) << q;
    EXPECT_EQ(s.total.quantiles.back().first, 0.995);
    EXPECT_EQ(s.rbns.mean, 60.0);
    EXPECT_EQ(s.ibnr.mean, 40.0);
}

TEST(Summary, MedianMidpointConvention)
{
    std::vector<double> xs;
    for (int i = 1; i <= 100; ++i) xs.push_back(i);
    const std::vector<double> levels{0.5};
    EXPECT_DOUBLE_EQ(summarize(xs, levels).quantiles[0].second, 50.5);
}

TEST(Summary, QuantilesMonotoneInLevel)
{
    Rng rng(3);
    std::lognormal_distribution<double> ln(0.0, 2.0);
    const std::vector<double> levels{0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.995};
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> xs(1 + rep * 7);
        for (auto& x : xs) x = ln(rng);
        const auto m = summarize(xs, levels);
        for (std::size_t i = 1; i < m.quantiles.size(); ++i) EXPECT_LE(m.quantiles[i - 1].second, m.quantiles[i].second);
    }
}

TEST(Summary, Errors)
{
    ReserveDistribution d;
    d.window = one_year_window(kA);
    EXPECT_THROW(reserve_summary(d), ModelError);
    d.scenarios.push_back({1.0, 0.0, {1.0, 0.0}, {}, 0, 0, 0});
    const std::vector<double> bad{1.5};
    EXPECT_THROW(reserve_summary(d, bad), DataError);
}

TEST(ChainLadder, HandExample)
{
    RunOffTriangle tri;
    tri.cells = {{100.0, 150.0}, {120.0, std::nullopt}};
    const auto r = chain_ladder_reserve(tri);
    ASSERT_EQ(r.factors.size(), 1u);
    EXPECT_EQ(r.factors[0], 1.5);
    EXPECT_EQ(r.reserves[0], 0.0);
    EXPECT_EQ(r.reserves[1], 60.0);
    EXPECT_EQ(r.total_reserve, 60.0);
}

TEST(ChainLadder, SquareTriangleNeedsNoReserve)
{
    RunOffTriangle tri;
    tri.cells = {{10.0, 15.0, 16.0}, {20.0, 29.0, 33.0}, {5.0, 8.0, 9.0}};
    EXPECT_EQ(chain_ladder_reserve(tri).total_reserve, 0.0);
}

TEST(ChainLadder, HomogeneousInScale)
{
    RunOffTriangle tri;
    tri.cells = {{100.0, 160.0, 175.0}, {110.0, 170.0, std::nullopt}, {130.0, std::nullopt, std::nullopt}};
    const auto base = chain_ladder_reserve(tri);
    for (double c : {0.5, 3.0, 1000.0}) {
        RunOffTriangle scaled = tri;
        for (auto& row : scaled.cells) {
            for (auto& x : row) {
                if (x) *x *= c;
            }
        }
        const auto r = chain_ladder_reserve(scaled);
        for (std::size_t i = 0; i < r.reserves.size(); ++i) EXPECT_NEAR(r.reserves[i], c * base.reserves[i], 1e-9 * c * 1000.0);
    }
}

TEST(ChainLadder, Errors)
{
    RunOffTriangle zero;
    zero.cells = {{0.0, 10.0}, {0.0, std::nullopt}};
    EXPECT_THROW(chain_ladder_reserve(zero), ModelError);
    RunOffTriangle single;
    single.cells = {{1.0, 2.0}};
    EXPECT_THROW(chain_ladder_reserve(single), ModelError);
}

TEST(ChainLadder, FromPortfolio)
{
    Portfolio p;
    p.data_cutoff = ymd(2011, 12, 31);
    p.claims = {{"A", ClaimType::BodilyInjury, ymd(2010, 3, 1), ymd(2010, 3, 5), {{ymd(2010, 4, 1), 100.0}, {ymd(2011, 2, 1), 50.0}}},
                {"B", ClaimType::MaterialDamage, ymd(2011, 5, 1), ymd(2011, 5, 2), {{ymd(2011, 6, 1), 120.0}}}};
    const auto r = chain_ladder_reserve(aggregate_triangle(p));
    EXPECT_DOUBLE_EQ(r.total_reserve, 60.0);
}

TEST(Backtest, NeedsAHoldout)
{
    auto cfg = default_synth_config();
    cfg.claims = 3000;
    cfg.seed = 2;
    const auto s = synthesize(cfg);
    EXPECT_THROW(backtest(s.portfolio, {}, one_year_window(s.portfolio.data_cutoff), {}), DataError);
}

TEST(Backtest, ZeroClaimsHoldout)
{
    auto cfg = default_synth_config();
    cfg.claims = 3000;
    cfg.seed = 2;
    auto p = synthesize(cfg).portfolio;
    const Day a = p.data_cutoff - 365;
    // Nothing is paid after a, yet the cutoff still covers the window.
    Portfolio silent = censor_at(p, a);
    silent.data_cutoff = p.data_cutoff;
    SimulationOptions sim;
    sim.scenarios = 200;
    const auto r = backtest(silent, {}, one_year_window(a), sim);
    EXPECT_EQ(r.actual, 0.0);
    EXPECT_FALSE(r.inside_band);
    for (const auto& [q, below] : r.at_or_below) EXPECT_TRUE(below) << q;
    EXPECT_GT(r.summary.total.mean, 0.0);
    EXPECT_EQ(realized_payments(p, {a, p.data_cutoff}), backtest(p, {}, one_year_window(a), sim).actual);
}

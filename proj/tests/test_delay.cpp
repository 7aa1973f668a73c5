#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "test_support.hpp"

using namespace granular;

namespace {

WeibullTV exponential10()
{
    return WeibullTV{1.0, std::log(10.0), 0.0};
}

} // namespace

TEST(DelayCdf, ExponentialSpecialCase)
{
    const DelayModel m = exponential10();
    EXPECT_NEAR(delay_cdf(m, 1000, 10.0), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_EQ(delay_cdf(m, 1000, 0.0), 0.0);
    EXPECT_NEAR(delay_density(m, 1000, 1e-12), 0.1, 1e-12);
    EXPECT_NEAR(delay_quantile(m, 1000, 1.0 - std::exp(-1.0)), 10.0, 1e-12);
}

TEST(DelayCdf, EmpiricalCohort)
{
    std::vector<DelayObservation> obs;
    for (double w : {1.0, 2.0, 3.0}) obs.push_back({100.0, w});
    const DelayModel m = fit_empirical_cohort(obs);
    EXPECT_NEAR(delay_cdf(m, 100, 2.0), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(delay_cdf(m, 100, 3.0), 1.0);
    EXPECT_THROW(delay_density(m, 100, 2.0), ModelError);
    Diagnostics diag;
    EXPECT_NEAR(delay_cdf(m, 5000, 2.0, &diag), 2.0 / 3.0, 1e-15);
    EXPECT_FALSE(diag.warnings.empty());
}

TEST(DelayDensity, FiniteDifferenceAndMode)
{
    const DelayModel m = WeibullTV{1.5, std::log(30.0), -0.02};
    const double eps = 1e-4;
    for (double w : {0.5, 5.0, 40.0}) {
        const double fd = (delay_cdf(m, 2000, w + eps) - delay_cdf(m, 2000, w - eps)) / (2 * eps);
        EXPECT_NEAR(fd, delay_density(m, 2000, w), 1e-6 * std::max(1.0, delay_density(m, 2000, w)));
    }
    const WeibullTV ray{2.0, std::log(20.0), 0.0};
    const double mode = 20.0 / std::sqrt(2.0);
    EXPECT_GT(delay_density(ray, 0, mode), delay_density(ray, 0, mode - 0.01));
    EXPECT_GT(delay_density(ray, 0, mode), delay_density(ray, 0, mode + 0.01));
}

TEST(DelayDensity, IntegratesToOne)
{
    for (double k : {0.7, 1.0, 1.5, 3.0}) {
        const DelayModel m = WeibullTV{k, std::log(25.0), 0.0};
        const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double w) { return delay_density(m, 0, w); }, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-12);
        EXPECT_NEAR(total, 1.0, 1e-6) << "shape " << k;
    }
}

TEST(DelayCdf, MonotoneLimitsAndRoundTrip)
{
    const DelayModel m = WeibullTV{1.3, std::log(45.0), -0.04};
    for (double t : {0.0, 3000.0, 6000.0}) {
        double prev = 0.0;
        for (double w = 0.0; w < 1000.0; w += 0.7) {
            const double h = delay_cdf(m, t, w);
            EXPECT_GE(h, prev);
            prev = h;
        }
        const double scale = std::get<WeibullTV>(m).scale_at(t);
        EXPECT_GE(delay_cdf(m, t, 50.0 * scale), 1.0 - 1e-6);
        for (int i = 1; i <= 99; ++i) {
            const double u = i / 100.0;
            EXPECT_NEAR(delay_cdf(m, t, delay_quantile(m, t, u)), u, 1e-10);
        }
    }
}

TEST(DelaySimulation, MeanAndDeterminism)
{
    const DelayModel m = WeibullTV{1.5, std::log(30.0), 0.0};
    Rng rng(5);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = simulate_delay(m, 0, rng);
    EXPECT_NEAR(stats::mean(xs), delay_mean(m, 0), 3.0 * testing_support::mc_se(xs));
    Rng a(8), b(8);
    EXPECT_EQ(simulate_delay(m, 0, a), simulate_delay(m, 0, b));
}

namespace {

std::vector<DelayObservation> weibull_sample(const WeibullTV& truth, std::size_t n, std::uint64_t seed, Day from, Day to)
{
    Rng rng = make_stream(seed, 1);
    std::uniform_int_distribution<Day> acc(from, to);
    std::vector<DelayObservation> obs;
    obs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = acc(rng);
        obs.push_back({t, std::floor(simulate_delay(truth, t, rng))});
    }
    return obs;
}

} // namespace

TEST(DelayFit, WeibullSimulateRefit)
{
    const WeibullTV truth{1.5, 3.0, -0.05};
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto fit = fit_weibull_tv(weibull_sample(truth, 20000, seed, 0, testing_support::ymd(2016, 12, 31)));
        ASSERT_FALSE(fit.trend_fixed);
        ASSERT_EQ(fit.standard_errors.size(), 3u);
        const double t[3] = {truth.shape, truth.c0, truth.c1};
        bool ok = true;
        for (int i = 0; i < 3; ++i) ok = ok && std::abs(fit.estimates[i] - t[i]) <= 3.0 * fit.standard_errors[i];
        hits += ok;
        EXPECT_LE(std::get<WeibullTV>(fit.model).c1, 0.0);
    }
    EXPECT_GE(hits, 4);
}

TEST(DelayFit, TruncatedSampleIsCorrected)
{
    // Delays of recent accidents are cut at the data cutoff.
    const WeibullTV truth{1.2, std::log(200.0), 0.0};
    Rng rng(17);
    const Day cutoff = testing_support::ymd(2010, 12, 31);
    std::uniform_int_distribution<Day> acc(testing_support::ymd(2008, 1, 1), cutoff);
    std::vector<DelayObservation> obs;
    while (obs.size() < 20000) {
        const double t = acc(rng);
        const double w = std::floor(simulate_delay(truth, t, rng));
        if (t + w <= cutoff) obs.push_back({t, w, cutoff - t});
    }
    const auto fit = fit_weibull_tv(obs);
    const auto& m = std::get<WeibullTV>(fit.model);
    EXPECT_NEAR(m.shape, truth.shape, 3.0 * fit.standard_errors[0]);
    EXPECT_NEAR(m.c0, truth.c0, 3.0 * fit.standard_errors[1] + 0.02);
}

TEST(DelayFit, IncreasingTrendIsProjected)
{
    const WeibullTV rising{1.5, 3.0, 0.05};
    Diagnostics diag;
    const auto fit = fit_weibull_tv(weibull_sample(rising, 5000, 3, 0, testing_support::ymd(2010, 12, 31)), &diag);
    EXPECT_TRUE(fit.trend_fixed);
    EXPECT_EQ(std::get<WeibullTV>(fit.model).c1, 0.0);
    EXPECT_FALSE(diag.warnings.empty());
}

TEST(DelayFit, SingleYearFixesTrend)
{
    Diagnostics diag;
    const auto fit = fit_weibull_tv(weibull_sample(WeibullTV{1.5, 3.0, 0.0}, 1000, 4, testing_support::ymd(2005, 1, 1), testing_support::ymd(2005, 12, 31)), &diag);
    EXPECT_TRUE(fit.trend_fixed);
    EXPECT_EQ(fit.parameter_names.size(), 2u);
    EXPECT_FALSE(diag.warnings.empty());
}

TEST(DelayFit, NeedsHundredClaims)
{
    std::vector<DelayObservation> obs(99, DelayObservation{0.0, 3.0});
    EXPECT_THROW(fit_delay(obs, DelayFamily::WeibullTV), ModelError);
    EXPECT_THROW(fit_delay(obs, DelayFamily::EmpiricalCohort), ModelError);
}

TEST(DelayFit, EmpiricalCohortsMergeSmallYears)
{
    std::vector<DelayObservation> obs;
    for (int i = 0; i < 100; ++i) obs.push_back({static_cast<double>(testing_support::ymd(2003, 3, 1)), static_cast<double>(i % 10)});
    for (int i = 0; i < 10; ++i) obs.push_back({static_cast<double>(testing_support::ymd(2004, 3, 1)), 50.0});
    Diagnostics diag;
    const auto m = fit_empirical_cohort(obs, &diag);
    EXPECT_EQ(m.cohorts.size(), 1u);
    EXPECT_FALSE(diag.warnings.empty());
    const DelayModel dm = m;
    EXPECT_EQ(delay_cdf(dm, testing_support::ymd(2004, 6, 1), 1000.0), 1.0);
}

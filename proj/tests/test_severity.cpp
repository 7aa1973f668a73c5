#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace granular;

namespace {

// Two-sided Kolmogorov-Smirnov statistic against the standard normal.
double ks_normal(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = stats::normal_cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

// Asymptotic 1% critical value of the Kolmogorov distribution.
constexpr double kKs01 = 1.628;

std::vector<std::vector<double>> singletons(const std::vector<double>& xs)
{
    std::vector<std::vector<double>> out;
    for (double x : xs) out.push_back({x});
    return out;
}

} // namespace

TEST(SeverityFit, ConstantAmountsAreDegenerate)
{
    Diagnostics diag;
    const auto fit = fit_severity(singletons(std::vector<double>(60, 100.0)), SeverityKind::LogNormal, &diag);
    const auto& ln = std::get<LogNormalSeverity>(std::get<IidSeverity>(fit.model).family);
    EXPECT_NEAR(ln.mu, std::log(100.0), 1e-14);
    EXPECT_EQ(ln.sigma, 0.0);
    EXPECT_TRUE(fit.degenerate);
    EXPECT_EQ(fit.frequent_amounts, std::vector<double>{100.0});
    EXPECT_FALSE(diag.warnings.empty());
}

TEST(SeverityFit, NonPositiveAmountsExcluded)
{
    std::vector<double> xs;
    for (int i = 1; i <= 60; ++i) xs.push_back(10.0 * i);
    xs.push_back(-5.0);
    xs.push_back(0.0);
    const auto fit = fit_severity(singletons(xs), SeverityKind::LogNormal);
    EXPECT_EQ(fit.excluded_non_positive, 2u);
    EXPECT_THROW(fit_severity(singletons(std::vector<double>(49, 3.0)), SeverityKind::Gamma), ModelError);
}

TEST(SeverityFit, LogNormalClosedForm)
{
    const std::vector<double> xs = {1.0, 2.0, 4.0, 8.0, 16.0, 3.0, 5.0, 7.0, 11.0, 13.0};
    std::vector<double> all;
    for (int r = 0; r < 6; ++r) all.insert(all.end(), xs.begin(), xs.end());
    const auto fit = fit_severity(singletons(all), SeverityKind::LogNormal);
    double m = 0.0;
    for (double x : all) m += std::log(x);
    m /= all.size();
    double v = 0.0;
    for (double x : all) v += (std::log(x) - m) * (std::log(x) - m);
    v /= all.size();
    const auto& ln = std::get<LogNormalSeverity>(std::get<IidSeverity>(fit.model).family);
    EXPECT_NEAR(ln.mu, m, 1e-12);
    EXPECT_NEAR(ln.sigma, std::sqrt(v), 1e-12);
}

TEST(SeverityFit, SimulateRefitBothFamilies)
{
    int hits_ln = 0, hits_ga = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng = make_stream(seed, 4);
        const SeverityModel ln = IidSeverity{LogNormalSeverity{8.0, 1.5}};
        const auto f1 = fit_severity(singletons(simulate_amounts(ln, 10000, rng)), SeverityKind::LogNormal);
        hits_ln += std::abs(f1.estimates[0] - 8.0) <= 3 * f1.standard_errors[0] &&
                   std::abs(f1.estimates[1] - 1.5) <= 3 * f1.standard_errors[1];
        const SeverityModel ga = IidSeverity{GammaSeverity{2.0, 0.002}};
        const auto f2 = fit_severity(singletons(simulate_amounts(ga, 10000, rng)), SeverityKind::Gamma);
        hits_ga += std::abs(f2.estimates[0] - 2.0) <= 3 * f2.standard_errors[0] &&
                   std::abs(f2.estimates[1] - 0.002) <= 3 * f2.standard_errors[1];
    }
    EXPECT_GE(hits_ln, 19);
    EXPECT_GE(hits_ga, 19);
}

TEST(SeverityFit, AutoPicksGeneratingFamily)
{
    Rng rng(12);
    const SeverityModel ga = IidSeverity{GammaSeverity{3.0, 0.01}};
    const auto f = fit_severity(singletons(simulate_amounts(ga, 5000, rng)), SeverityKind::Auto);
    EXPECT_TRUE(std::holds_alternative<GammaSeverity>(std::get<IidSeverity>(f.model).family));
    const SeverityModel ln = IidSeverity{LogNormalSeverity{5.0, 1.2}};
    const auto g = fit_severity(singletons(simulate_amounts(ln, 5000, rng)), SeverityKind::Auto);
    EXPECT_TRUE(std::holds_alternative<LogNormalSeverity>(std::get<IidSeverity>(g.model).family));
}

TEST(SeverityFit, NoiselessOrderRegression)
{
    std::vector<std::vector<double>> claims;
    for (int i = 1; i <= 60; ++i) claims.push_back({10.0 * i, 5.0 * i, 2.5 * i});
    const auto fit = fit_severity(claims, SeverityKind::OrderAR);
    const auto& ar = std::get<OrderAR>(fit.model);
    ASSERT_GE(ar.alpha.size(), 2u);
    EXPECT_NEAR(ar.alpha[0], 0.5, 1e-14);
    EXPECT_NEAR(ar.alpha[1], 0.5, 1e-14);
    EXPECT_NEAR(ar.innovation_sd, 0.0, 1e-12);
}

TEST(SeverityFit, SparseOrderInheritsAlpha)
{
    std::vector<std::vector<double>> claims;
    for (int i = 1; i <= 60; ++i) claims.push_back({10.0 * i, 4.0 * i});
    for (int i = 1; i <= 5; ++i) claims.back().push_back(1.0 * i);
    Diagnostics diag;
    const auto fit = fit_severity(claims, SeverityKind::OrderAR, &diag);
    const auto& ar = std::get<OrderAR>(fit.model);
    ASSERT_EQ(ar.alpha.size(), 2u);
    EXPECT_EQ(ar.alpha[1], ar.alpha[0]);
    EXPECT_FALSE(diag.warnings.empty());
}

TEST(SeveritySimulation, Examples)
{
    Rng rng(3);
    const SeverityModel ln = IidSeverity{LogNormalSeverity{1.0, 0.8}};
    EXPECT_TRUE(simulate_amounts(ln, 0, rng).empty());
    const auto xs = simulate_amounts(ln, 100000, rng);
    EXPECT_NEAR(stats::mean(xs), std::exp(1.0 + 0.32), 3.0 * testing_support::mc_se(xs));

    OrderAR ar;
    ar.alpha = {0.5};
    ar.first = LogNormalSeverity{std::log(100.0), 0.0};
    ar.innovation_sd = 0.0;
    const auto path = simulate_amounts(SeverityModel{ar}, 3, rng);
    ASSERT_EQ(path.size(), 3u);
    EXPECT_NEAR(path[0], 100.0, 1e-9);
    EXPECT_NEAR(path[1], 50.0, 1e-9);
    EXPECT_NEAR(path[2], 25.0, 1e-9);

    // Continuing a claim whose last observed payment was 80 at order 2.
    const auto cont = simulate_amounts(SeverityModel{ar}, 2, rng, SeverityState{3, 80.0});
    EXPECT_NEAR(cont[0], 40.0, 1e-9);
    EXPECT_NEAR(cont[1], 20.0, 1e-9);
}

TEST(SeveritySimulation, OrderArWithZeroAlphaIsIid)
{
    OrderAR ar;
    ar.alpha = {0.0};
    ar.first = LogNormalSeverity{4.0, 0.7};
    ar.innovation = InnovationKind::FirstPaymentFamily;
    Rng rng(31);
    std::vector<double> later;
    for (int i = 0; i < 20000; ++i) {
        const auto path = simulate_amounts(SeverityModel{ar}, 3, rng);
        later.push_back(path[2]);
    }
    const auto iid = simulate_amounts(SeverityModel{IidSeverity{ar.first}}, 20000, rng);
    const double n = 20000.0;
    EXPECT_LT(ks_two_sample(later, iid), kKs01 * std::sqrt(2.0 / n));
}

TEST(NormalScores, Examples)
{
    const std::vector<double> one = {3.0};
    const auto s = normal_scores(one, one);
    EXPECT_NEAR(s[0].score_x, 0.0, 1e-15);
    EXPECT_NEAR(s[0].score_y, 0.0, 1e-15);

    Rng rng(2);
    std::vector<double> xs(1000), ys(1000), zs(1000);
    std::lognormal_distribution<double> d(0.0, 1.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = d(rng);
        ys[i] = 3.0 * xs[i] * xs[i];
        zs[i] = d(rng);
    }
    auto corr = [](const std::vector<NormalScorePair>& ps) {
        std::vector<double> a, b;
        for (const auto& p : ps) {
            a.push_back(p.score_x);
            b.push_back(p.score_y);
        }
        return stats::correlation(a, b);
    };
    EXPECT_GE(corr(normal_scores(xs, ys)), 0.99);
    EXPECT_LT(std::abs(corr(normal_scores(xs, zs))), 3.0 / std::sqrt(1000.0));

    std::vector<double> sx;
    for (const auto& p : normal_scores(xs, zs)) sx.push_back(p.score_x);
    EXPECT_LT(ks_normal(sx), kKs01 / std::sqrt(1000.0));
}

TEST(NormalScores, OrderPairs)
{
    const std::vector<std::vector<double>> claims = {{1, 2, 3}, {4}, {5, 6}};
    const auto [a, b] = payment_order_pairs(claims, 1, 2);
    EXPECT_EQ(a, (std::vector<double>{1, 5}));
    EXPECT_EQ(b, (std::vector<double>{2, 6}));
}

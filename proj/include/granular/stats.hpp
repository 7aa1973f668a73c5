#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace granular::stats {

inline double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double normal_quantile(double p)
{
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

inline double normal_pdf(double x)
{
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double mean(std::span<const double> xs)
{
    if (xs.empty()) {
        return 0.0;
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_sd(std::span<const double> xs)
{
    if (xs.size() < 2) {
        return 0.0;
    }
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Linear-interpolation quantile of a sorted sample (Hyndman-Fan type 7).
/// The median of {1..100} is 50.5.
inline double quantile_sorted(std::span<const double> sorted, double level)
{
    if (sorted.empty()) {
        throw std::invalid_argument("quantile of empty sample");
    }
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(level, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double level)
{
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, level);
}

/// Pearson correlation.
inline double correlation(std::span<const double> xs, std::span<const double> ys)
{
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

namespace detail {

inline std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi)
{
    if (hi - lo < 2) {
        return 0;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

template <class Eq>
std::int64_t tied_pairs(std::size_t n, Eq same)
{
    std::int64_t total = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i < n && same(i - 1, i)) {
            ++run;
        } else {
            total += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
            run = 1;
        }
    }
    return total;
}

} // namespace detail

/// Kendall's tau-b (ties-adjusted) in O(n log n) via Knight's merge-sort count.
inline double kendall_tau_b(std::span<const double> xs, std::span<const double> ys)
{
    const std::size_t n = xs.size();
    if (n != ys.size()) {
        throw std::invalid_argument("kendall_tau_b: size mismatch");
    }
    if (n < 2) {
        return 0.0;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return xs[a] < xs[b] || (xs[a] == xs[b] && ys[a] < ys[b]);
    });
    const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    const std::int64_t n1 = detail::tied_pairs(n, [&](std::size_t a, std::size_t b) { return xs[idx[a]] == xs[idx[b]]; });
    const std::int64_t n3 = detail::tied_pairs(n, [&](std::size_t a, std::size_t b) {
        return xs[idx[a]] == xs[idx[b]] && ys[idx[a]] == ys[idx[b]];
    });
    std::vector<double> y(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = ys[idx[i]];
    }
    const std::int64_t swaps = detail::merge_count(y, buf, 0, n);
    const std::int64_t n2 = detail::tied_pairs(n, [&](std::size_t a, std::size_t b) { return y[a] == y[b]; });
    const double num = static_cast<double>(n0 - n1 - n2 + n3 - 2 * swaps);
    const double den = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
    return den > 0.0 ? num / den : 0.0;
}

} // namespace granular::stats

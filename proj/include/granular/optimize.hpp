#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

namespace granular::optim {

using Objective = std::function<double(std::span<const double>)>;

struct NelderMeadOptions {
    double tolerance = 1e-8;  // relative spread of objective over the simplex
    int max_iterations = 500; // per restart
    int max_restarts = 3;
};

struct OptimResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double safe_eval(const Objective& f, std::span<const double> x)
{
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

inline OptimResult nelder_mead_once(const Objective& f, const std::vector<double>& x0,
                                    const std::vector<double>& step, const NelderMeadOptions& opt)
{
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        simplex[i + 1][i] += step[i];
    }
    for (std::size_t i = 0; i <= n; ++i) {
        values[i] = safe_eval(f, simplex[i]);
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    OptimResult res;
    for (int it = 0; it < opt.max_iterations; ++it) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[n - 1];
        res.iterations = it;

        const double spread = values[worst] - values[best];
        if (std::isfinite(spread) && spread <= opt.tolerance * std::max(1.0, std::abs(values[best]))) {
            res.converged = true;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
        }
        auto along = [&](double coef, std::vector<double>& out) {
            for (std::size_t d = 0; d < n; ++d) out[d] = centroid[d] + coef * (simplex[worst][d] - centroid[d]);
            return safe_eval(f, out);
        };

        const double fr = along(-1.0, trial);
        if (fr < values[best]) {
            const double fe = along(-2.0, trial2);
            if (fe < fr) {
                simplex[worst] = trial2;
                values[worst] = fe;
            } else {
                simplex[worst] = trial;
                values[worst] = fr;
            }
            continue;
        }
        if (fr < values[second]) {
            simplex[worst] = trial;
            values[worst] = fr;
            continue;
        }
        const bool outside = fr < values[worst];
        const double fc = along(outside ? -0.5 : 0.5, trial2);
        if (fc < (outside ? fr : values[worst])) {
            simplex[worst] = trial2;
            values[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t d = 0; d < n; ++d) {
                simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
            }
            values[i] = safe_eval(f, simplex[i]);
        }
    }
    const auto best_it = std::min_element(values.begin(), values.end());
    res.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
    res.value = *best_it;
    return res;
}

} // namespace detail

/// Derivative-free minimization. Restarts from the best vertex until a restart
/// no longer improves the objective, which guards against simplex collapse.
inline OptimResult nelder_mead(const Objective& f, std::vector<double> x0, std::vector<double> step,
                               const NelderMeadOptions& opt = {})
{
    OptimResult best = detail::nelder_mead_once(f, x0, step, opt);
    int total = best.iterations;
    for (int r = 0; r < opt.max_restarts; ++r) {
        for (auto& s : step) s *= 0.5;
        OptimResult next = detail::nelder_mead_once(f, best.x, step, opt);
        total += next.iterations;
        const bool improved = next.value < best.value - opt.tolerance * std::max(1.0, std::abs(best.value));
        if (next.value <= best.value) {
            best.x = next.x;
            best.value = next.value;
        }
        best.converged = next.converged;
        if (!improved && next.converged) {
            break;
        }
    }
    best.iterations = total;
    return best;
}

struct ScalarResult {
    double x = 0.0;
    double value = 0.0;
    bool at_lower = false;
    bool at_upper = false;
};

/// Bounded scalar minimization (Brent).
inline ScalarResult minimize_scalar(const std::function<double(double)>& f, double lo, double hi)
{
    std::uintmax_t iters = 200;
    auto safe = [&](double x) {
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };
    const auto [x, v] = boost::math::tools::brent_find_minima(safe, lo, hi, 52, iters);
    ScalarResult r{x, v};
    const double edge = 1e-6 * (hi - lo);
    r.at_lower = x - lo < edge;
    r.at_upper = hi - x < edge;
    return r;
}

/// Central-difference Hessian with relative steps.
inline Eigen::MatrixXd numerical_hessian(const Objective& f, std::span<const double> x, double rel_step = 1e-4)
{
    const std::size_t n = x.size();
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = rel_step * std::max(1.0, std::abs(x[i]));
    std::vector<double> p(x.begin(), x.end());
    const double f0 = f(p);
    Eigen::MatrixXd H(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = x[i] + h[i];
        const double fp = f(p);
        p[i] = x[i] - h[i];
        const double fm = f(p);
        p[i] = x[i];
        H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for (std::size_t j = 0; j < i; ++j) {
            double acc = 0.0;
            for (int si : {1, -1}) {
                for (int sj : {1, -1}) {
                    p[i] = x[i] + si * h[i];
                    p[j] = x[j] + sj * h[j];
                    acc += si * sj * f(p);
                }
            }
            p[i] = x[i];
            p[j] = x[j];
            H(i, j) = H(j, i) = acc / (4.0 * h[i] * h[j]);
        }
    }
    return H;
}

/// Standard errors from the observed information (Hessian of the negative
/// log-likelihood at the optimum). Empty when the Hessian is not positive definite.
inline std::vector<double> standard_errors_from_hessian(const Eigen::MatrixXd& H)
{
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) {
        return {};
    }
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
    std::vector<double> se(static_cast<std::size_t>(H.rows()));
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
        se[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, cov(i, i)));
    }
    return se;
}

inline std::vector<double> standard_errors(const Objective& neg_loglik, std::span<const double> x, double rel_step = 1e-4)
{
    return standard_errors_from_hessian(numerical_hessian(neg_loglik, x, rel_step));
}

} // namespace granular::optim

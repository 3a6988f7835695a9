#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "kappasim/errors.hpp"

namespace kappasim::detail {

/// Brent root finder on a bracketing interval [a, b] with f(a)*f(b) <= 0.
template <typename F>
double brent_root(F&& f, double a, double b, double xtol = 1e-15, int max_iter = 200) {
    double fa = f(a);
    double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw IllConditionedError("brent_root: interval does not bracket a root");
    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int iter = 0; iter < max_iter; ++iter) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol = 2.0 * 2.220446049250313e-16 * std::abs(b) + 0.5 * xtol;
        const double m = 0.5 * (c - b);
        if (std::abs(m) <= tol || fb == 0.0) return b;
        if (std::abs(e) < tol || std::abs(fa) <= std::abs(fb)) {
            d = m; e = m;
        } else {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
                e = d; d = p / q;
            } else {
                d = m; e = m;
            }
        }
        a = b; fa = fb;
        b += (std::abs(d) > tol) ? d : (m > 0.0 ? tol : -tol);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a; fc = fa;
            d = b - a; e = d;
        }
    }
    return b;
}

/// Brent scalar minimizer on [a, b]; returns the minimizing abscissa.
template <typename F>
double brent_minimize(F&& f, double a, double b, double xtol = 1e-12, int max_iter = 200) {
    constexpr double golden = 0.3819660112501051;
    double x = a + golden * (b - a);
    double w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        const double m = 0.5 * (a + b);
        const double tol = xtol * std::abs(x) + 1e-300;
        const double tol2 = 2.0 * tol;
        if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
        double p = 0.0, q = 0.0, r = 0.0;
        if (std::abs(e) > tol) {
            r = (x - w) * (fx - fv);
            q = (x - v) * (fx - fw);
            p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            const double etmp = e;
            e = d;
            if (std::abs(p) >= std::abs(0.5 * q * etmp) || p <= q * (a - x) || p >= q * (b - x)) {
                e = (x >= m) ? a - x : b - x;
                d = golden * e;
            } else {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (m > x) ? tol : -tol;
            }
        } else {
            e = (x >= m) ? a - x : b - x;
            d = golden * e;
        }
        const double u = (std::abs(d) >= tol) ? x + d : x + (d > 0.0 ? tol : -tol);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    return x;
}

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
/// Returns false when the system is numerically singular.
inline bool solve_linear(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t row = col + 1; row < n; ++row) {
            if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) pivot = row;
        }
        if (std::abs(a[pivot * n + col]) < 1e-300) return false;
        if (pivot != col) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t row = col + 1; row < n; ++row) {
            const double factor = a[row * n + col] * inv;
            if (factor == 0.0) continue;
            for (std::size_t k = col; k < n; ++k) a[row * n + k] -= factor * a[col * n + k];
            b[row] -= factor * b[col];
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        double s = b[col];
        for (std::size_t k = col + 1; k < n; ++k) s -= a[col * n + k] * b[k];
        b[col] = s / a[col * n + col];
    }
    return true;
}

/// Levenberg-Marquardt least squares for tiny parameter counts, with a box
/// projection applied after every step. `residuals(p)` returns the residual
/// vector; the Jacobian is formed by forward differences. Returns the final
/// sum of squared residuals; `params` is updated in place. `iters_used`
/// accumulates function-evaluation-equivalent iterations so callers can
/// enforce a shared budget across restarts.
template <typename Residuals>
double levenberg_marquardt(Residuals&& residuals, std::vector<double>& params,
                           const std::vector<double>& lo, const std::vector<double>& hi,
                           int max_iters, double ftol, long* iters_used = nullptr) {
    const std::size_t n = params.size();
    auto clamp = [&](std::vector<double>& p) {
        for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(p[i], lo[i], hi[i]);
    };
    auto objective = [&](const std::vector<double>& p) {
        const std::vector<double> r = residuals(p);
        double s = 0.0;
        for (double v : r) s += v * v;
        return s;
    };

    clamp(params);
    std::vector<double> r = residuals(params);
    const std::size_t m = r.size();
    double obj = 0.0;
    for (double v : r) obj += v * v;

    double lambda = 1e-3;
    for (int iter = 0; iter < max_iters; ++iter) {
        if (iters_used) ++(*iters_used);
        // Forward-difference Jacobian, m x n.
        std::vector<double> jac(m * n);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(params[j]));
            std::vector<double> pp = params;
            pp[j] = std::min(params[j] + h, hi[j]);
            const double step = pp[j] - params[j];
            if (step == 0.0) {
                pp[j] = std::max(params[j] - h, lo[j]);
            }
            const double actual = pp[j] - params[j];
            if (actual == 0.0) continue; // degenerate box; column stays zero
            const std::vector<double> rp = residuals(pp);
            for (std::size_t i = 0; i < m; ++i) jac[i * n + j] = (rp[i] - r[i]) / actual;
        }
        // Normal equations (J^T J + lambda diag) step = -J^T r.
        std::vector<double> jtj(n * n, 0.0), jtr(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double jij = jac[i * n + j];
                jtr[j] += jij * r[i];
                for (std::size_t k = j; k < n; ++k) jtj[j * n + k] += jij * jac[i * n + k];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < j; ++k) jtj[j * n + k] = jtj[k * n + j];
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
            std::vector<double> a = jtj;
            std::vector<double> rhs(n);
            for (std::size_t j = 0; j < n; ++j) {
                a[j * n + j] += lambda * std::max(jtj[j * n + j], 1e-12);
                rhs[j] = -jtr[j];
            }
            if (!solve_linear(a, rhs, n)) {
                lambda *= 10.0;
                continue;
            }
            std::vector<double> trial = params;
            for (std::size_t j = 0; j < n; ++j) trial[j] += rhs[j];
            clamp(trial);
            const double trial_obj = objective(trial);
            if (trial_obj < obj) {
                const double gain = obj - trial_obj;
                params = trial;
                r = residuals(params);
                obj = trial_obj;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (gain <= ftol * std::max(obj, 1e-300)) return obj;
            } else {
                lambda *= 10.0;
            }
        }
        if (!stepped) break; // no descent direction left
        if (obj <= 1e-30) break;
    }
    return obj;
}

} // namespace kappasim::detail

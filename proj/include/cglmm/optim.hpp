#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace cglmm {

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Central-difference gradient, step rel_step * max(1, |x_k|).
inline Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x,
                                   double rel_step = 1e-5) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd g(n);
    Eigen::VectorXd xp = x;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double h = rel_step * std::max(1.0, std::abs(x(k)));
        const double orig = x(k);
        xp(k) = orig + h;
        const double fp = f(xp);
        xp(k) = orig - h;
        const double fm = f(xp);
        xp(k) = orig;
        g(k) = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Fourth-order five-point gradient: larger steps keep the rounding part of
// the noise tiny, which matters when the result must be reproducible to
// many digits (final polish of an optimum).
inline Eigen::VectorXd fd_gradient4(const Objective& f, const Eigen::VectorXd& x,
                                    double rel_step = 1e-2) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd g(n);
    Eigen::VectorXd xp = x;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double h = rel_step * std::max(1.0, std::abs(x(k)));
        const double orig = x(k);
        xp(k) = orig - 2.0 * h;
        const double fm2 = f(xp);
        xp(k) = orig - h;
        const double fm1 = f(xp);
        xp(k) = orig + h;
        const double fp1 = f(xp);
        xp(k) = orig + 2.0 * h;
        const double fp2 = f(xp);
        xp(k) = orig;
        g(k) = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    }
    return g;
}

// Central-difference Hessian with per-coordinate step max(1e-4, 1e-4 |x_k|).
inline Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd h(n);
    for (Eigen::Index k = 0; k < n; ++k) h(k) = std::max(1e-4, 1e-4 * std::abs(x(k)));
    Eigen::MatrixXd H(n, n);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            xp = x;
            xp(i) += h(i);
            xp(j) += h(j);
            const double fpp = f(xp);
            xp = x;
            xp(i) += h(i);
            xp(j) -= h(j);
            const double fpm = f(xp);
            xp = x;
            xp(i) -= h(i);
            xp(j) += h(j);
            const double fmp = f(xp);
            xp = x;
            xp(i) -= h(i);
            xp(j) -= h(j);
            const double fmm = f(xp);
            H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
        }
    }
    return H;
}

struct MinimizeOptions {
    int max_iter = 500;
    double rel_f_tol = 1e-10;   // relative decrease per iteration
    double grad_tol = 1e-5;     // gradient norm
    // relative finite-difference step; sized so the permutation-sensitive
    // rounding part of the gradient noise stays below the truncation part
    double grad_step = 5e-5;
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    Eigen::VectorXd gradient;
    double grad_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    bool used_fallback = false;
    std::string message;
};

// Derivative-free Nelder-Mead simplex; fallback path of the quasi-Newton
// driver and usable on its own.
inline MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                                  const MinimizeOptions& opts = {}, double initial_step = 0.25) {
    const int n = static_cast<int>(x0.size());
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    std::vector<Eigen::VectorXd> pts;
    std::vector<double> fv;
    pts.push_back(x0);
    fv.push_back(f(x0));
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd p = x0;
        p(k) += initial_step * std::max(1.0, std::abs(x0(k)));
        pts.push_back(p);
        fv.push_back(f(p));
    }
    auto order = [&]() {
        std::vector<int> idx(pts.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        std::vector<Eigen::VectorXd> p2;
        std::vector<double> f2;
        for (int i : idx) {
            p2.push_back(pts[i]);
            f2.push_back(fv[i]);
        }
        pts.swap(p2);
        fv.swap(f2);
    };

    MinimizeResult res;
    int it = 0;
    const int cap = std::max(200, 40 * opts.max_iter);
    for (; it < cap; ++it) {
        order();
        if (std::abs(fv.back() - fv.front()) <=
            1e-12 * std::max(1.0, std::abs(fv.front())) + 1e-14)
            break;
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[static_cast<std::size_t>(i)];
        centroid /= n;

        const Eigen::VectorXd xr = centroid + alpha * (centroid - pts.back());
        const double fr = f(xr);
        if (fr < fv.front()) {
            const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
            const double fe = f(xe);
            if (fe < fr) {
                pts.back() = xe;
                fv.back() = fe;
            } else {
                pts.back() = xr;
                fv.back() = fr;
            }
        } else if (fr < fv[fv.size() - 2]) {
            pts.back() = xr;
            fv.back() = fr;
        } else {
            const Eigen::VectorXd xc = centroid + rho * (pts.back() - centroid);
            const double fc = f(xc);
            if (fc < fv.back()) {
                pts.back() = xc;
                fv.back() = fc;
            } else {
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    pts[i] = pts[0] + sigma * (pts[i] - pts[0]);
                    fv[i] = f(pts[i]);
                }
            }
        }
    }
    order();
    res.x = pts.front();
    res.f = fv.front();
    res.iterations = it;
    res.gradient = fd_gradient(f, res.x, opts.grad_step);
    res.grad_norm = res.gradient.norm();
    res.converged = res.grad_norm < opts.grad_tol;
    res.message = "nelder-mead";
    return res;
}

// BFGS with finite-difference gradients and a backtracking Armijo line
// search. A failed line search hands the current point to Nelder-Mead once,
// then resumes. Convergence needs both a tiny relative decrease and a small
// gradient norm.
inline MinimizeResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                                    const MinimizeOptions& opts = {}) {
    const Eigen::Index n = x0.size();
    MinimizeResult res;
    Eigen::VectorXd x = x0;
    double fx = f(x);
    if (!std::isfinite(fx)) {
        res.x = x;
        res.f = fx;
        res.message = "non-finite objective at the starting point";
        return res;
    }
    Eigen::VectorXd g = fd_gradient(f, x, opts.grad_step);
    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    bool fallback_used = false;
    bool fully_polished = false;
    int it = 0;

    for (; it < opts.max_iter; ++it) {
        if (fully_polished) break;
        Eigen::VectorXd d = -(Hinv * g);
        double slope = g.dot(d);
        if (!(slope < 0.0)) {  // reset a corrupted approximation
            Hinv.setIdentity();
            d = -g;
            slope = g.dot(d);
        }

        double step = 1.0;
        double fn = std::numeric_limits<double>::infinity();
        Eigen::VectorXd xn;
        bool ok = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x + step * d;
            fn = f(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }

        if (!ok) {
            if (g.norm() < opts.grad_tol) break;  // already at a critical point
            if (!fallback_used) {
                fallback_used = true;
                MinimizeOptions nm_opts = opts;
                const MinimizeResult nm = nelder_mead(f, x, nm_opts, 0.1);
                if (nm.f < fx - 1e-12) {
                    x = nm.x;
                    fx = nm.f;
                    g = fd_gradient(f, x, opts.grad_step);
                    Hinv.setIdentity();
                    scaled = false;
                    continue;
                }
            }
            break;  // no progress possible at this resolution
        }

        const Eigen::VectorXd gn = fd_gradient(f, xn, opts.grad_step);
        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd yv = gn - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            if (!scaled) {
                Hinv *= sy / yv.squaredNorm();
                scaled = true;
            }
            const Eigen::VectorXd Hy = Hinv * yv;
            const double yHy = yv.dot(Hy);
            Hinv += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
                    (Hy * s.transpose() + s * Hy.transpose()) / sy;
        }

        const double drop = fx - fn;
        x = xn;
        fx = fn;
        g = gn;
        // once the convergence criteria hold, polish until progress stops
        if (drop <= opts.rel_f_tol * std::max(1.0, std::abs(fx)) &&
            g.norm() < opts.grad_tol)
            fully_polished = drop <= 1e-13 * std::max(1.0, std::abs(fx));
    }

    res.x = x;
    res.f = fx;
    res.gradient = g;
    res.grad_norm = g.norm();
    res.iterations = it;
    res.used_fallback = fallback_used;
    res.converged = res.grad_norm < opts.grad_tol;
    res.message = res.converged ? "converged" : "stopped before reaching the gradient tolerance";
    return res;
}

}  // namespace cglmm

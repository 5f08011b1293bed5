#pragma once

// Renewal kernel G = sum_n P^n on X x R, the limit operator Pi_0, the
// omega/omega_0 moduli, the Fourier representation
//   G f = Pi_0 f / sigma + (1/2pi) int e^{i xi t} U(-i xi) fhat(., xi) d xi,
// boundary decomposition against psi, phi_k regularization, the tauberian
// pointwise bound, and rate-of-convergence fits.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "renlab/transfer_operator.hpp"

namespace renlab {

// ---------------------------------------------------------------------------
// moduli on (X x R)^2

// weighted modulus e^{-(|t|+|t'|)/2} sqrt(d(x,x')^2 + (e^{(t-t')/2}-e^{(t'-t)/2})^2),
// 1 across distinct A-fibers
inline double omega(const Vector& x, int a, double t, const Vector& x2, int a2,
                    double t2) {
    if (a != a2) return 1.0;
    double dch = (x - x2).norm();
    double e = std::exp((t - t2) / 2) - std::exp((t2 - t) / 2);
    return std::exp(-(std::abs(t) + std::abs(t2)) / 2) * std::sqrt(dch * dch + e * e);
}

inline double omega0(const Vector& x, int a, double t, const Vector& x2, int a2,
                     double t2) {
    if (a != a2) return 1.0;
    double dch = (x - x2).norm();
    double dt = t - t2;
    return std::sqrt(dt * dt + dch * dch) / ((1 + std::abs(t)) * (1 + std::abs(t2)));
}

// exact pullback of ||e^t x - e^{t'} x'|| / ((1+e^t)(1+e^{t'})) under
// (x,t) -> e^t x; equals the sech-product form identically
inline double omega_pullback(const Vector& x, int a, double t, const Vector& x2, int a2,
                             double t2) {
    if (a != a2) return 1.0;
    return (std::exp(t) * x - std::exp(t2) * x2).norm() /
           ((1 + std::exp(t)) * (1 + std::exp(t2)));
}

inline double omega_pullback_product_form(const Vector& x, double t, const Vector& x2,
                                          double t2) {
    double dch = (x - x2).norm();
    double e = std::exp((t - t2) / 2) - std::exp((t2 - t) / 2);
    double f1 = std::exp(t / 2) / (1 + std::exp(t));
    double f2 = std::exp(t2 / 2) / (1 + std::exp(t2));
    return f1 * f2 * std::sqrt(dch * dch + e * e);
}

// ---------------------------------------------------------------------------
// function classes

using StateEval = std::function<double(const Vector&, int, double)>;

// member of C^gamma_omega(X x R): evaluator with omega-Holder data and
// boundary values p^-, p^+ per A-fiber
struct OmegaFunction {
    StateEval eval;
    double gamma = 0.25;
    double omega_norm = 1.0; // ||f||_{gamma,omega} bound
    std::vector<double> p_minus{0.0};
    std::vector<double> p_plus{0.0};
};

// member of E^{gamma,k}: t-derivatives up to order k, e^{gamma|t|} decay
struct RegularFunction {
    StateEval eval;
    std::vector<StateEval> derivs; // m-th entry = (m+1)-th t-derivative
    int k = 0;
    double gamma = 0.25;
    double norm_gamma_k = 1.0;
    // optional analytic Fourier transform in t (index by state)
    std::function<Complex(const Vector&, int, double)> fhat;
};

// psi(t) = (1/sqrt(2pi)) int_t^inf e^{-u^2/2} du = erfc(t/sqrt2)/2
inline double psi_gauss(double t) { return 0.5 * std::erfc(t / std::sqrt(2.0)); }

// phi_k(u) = u^k e^{-u} 1_{u>=0}
inline double phi_k(int k, double u) {
    return u >= 0 ? std::pow(u, k) * std::exp(-u) : 0.0;
}

// ---------------------------------------------------------------------------
// shared per-measure context

struct RenewalContext {
    GeneratorMeasure rho;
    std::shared_ptr<const StateGrid> grid;
    SpectralData sd;
    LyapunovEstimate lyap;
    double drift_c = 1.0;  // sup_x E e^{-s sigma_n} <= drift_c e^{-drift_rate s n}
    double drift_rate = 0; // fitted t_hat of the drift lemma
    double drift_s = 0.15; // the s the truncation bound uses
};

inline RenewalContext make_renewal_context(const GeneratorMeasure& rho,
                                           std::shared_ptr<const StateGrid> grid,
                                           std::uint64_t seed, int workers = 1,
                                           int lyap_steps = 400, int lyap_walks = 400) {
    RenewalContext ctx{rho, grid, spectral_data(build_operator(rho, Complex(0, 0), grid)),
                       lyapunov_estimate(rho, lyap_steps, lyap_walks, seed, workers)};
    double s = std::min(0.15, 0.9 * transfer_config().eta);
    auto drift = drift_check(rho, grid, {s}, {4, 8, 16, 24, 32});
    ctx.drift_s = s;
    ctx.drift_rate = drift.t_hat;
    double c = 1.0;
    for (auto& row : drift.table)
        c = std::max(c, row.sup * std::exp(drift.t_hat * s * row.n));
    ctx.drift_c = c;
    return ctx;
}

// ---------------------------------------------------------------------------
// Green kernel, Monte Carlo

struct RenewalEstimate {
    double value = 0;
    double mc_std_error = 0;
    double truncation_bound = 0;
    int n_terms = 0;
};

inline RenewalEstimate green_mc(const RenewalContext& ctx, const OmegaFunction& f,
                                const Vector& x0, int a0, double t0, std::uint64_t seed,
                                double tolerance, int n_walks = 4000, int workers = 1) {
    if (!(ctx.lyap.lambda_rho > 3 * ctx.lyap.std_error))
        throw NonTransientError("lambda_rho estimate not positive at 3 sigma");
    for (double pp : f.p_plus)
        if (std::abs(pp) > 1e-12)
            throw PreconditionError("green_mc needs p^+(f) = 0");
    // truncation from the drift decay: |f(x,u)| <= Fd e^{-s u} for u >= 0
    // and |f| <= Fd overall, so |P^n f(x0,t0)| <= Fd e^{-s t0} C e^{-rate s n}.
    const double s = ctx.drift_s;
    const double fd = 2.0 * f.omega_norm;
    if (!(ctx.drift_rate > 0)) throw NonTransientError("no measured drift decay");
    auto tail_after = [&](int n) {
        double q = std::exp(-ctx.drift_rate * s);
        return 2.0 * fd * std::exp(-s * t0) * ctx.drift_c * std::pow(q, n + 1) /
               (1 - q);
    };
    int n_terms = 1;
    while (tail_after(n_terms) > tolerance / 2 && n_terms < 100000) ++n_terms;
    if (tail_after(n_terms) > tolerance / 2)
        throw ToleranceError("requested tolerance unreachable by truncation");

    struct Acc {
        double sum = 0, sumsq = 0;
        long cnt = 0;
    };
    Acc acc;
    const int n_cap = n_terms;
    parallel_chunks<Acc>(
        n_walks, workers,
        [&](std::size_t lo, std::size_t hi, Acc& a) {
            const int d = ctx.rho.dim();
            for (std::size_t i = lo; i < hi; ++i) {
                Rng rng(seed, i);
                Vector v = x0; // sphere point, sign kept (cone exactness)
                int aa = a0;
                double t = t0;
                double total = f.eval(v, aa, t);
                for (int n = 1; n <= n_cap; ++n) {
                    std::size_t j = ctx.rho.pick(rng);
                    Vector gv = ctx.rho.atoms()[j].g.mat() * v;
                    double nv = gv.norm();
                    t += std::log(nv);
                    v = gv / nv;
                    aa = ctx.rho.apply_a(j, aa);
                    total += f.eval(v, aa, t);
                }
                a.sum += total;
                a.sumsq += total * total;
                a.cnt += 1;
            }
        },
        [](Acc& t, const Acc& p) {
            t.sum += p.sum;
            t.sumsq += p.sumsq;
            t.cnt += p.cnt;
        },
        acc);
    RenewalEstimate out;
    out.n_terms = n_terms;
    out.value = acc.sum / acc.cnt;
    double var = std::max(0.0, acc.sumsq / acc.cnt - out.value * out.value);
    out.mc_std_error = std::sqrt(var / acc.cnt);
    out.truncation_bound = tail_after(n_terms);
    return out;
}

// ---------------------------------------------------------------------------
// Pi_0

// Pi_0 f(x,a,t) = int_t^inf N_0 f(.,u)(x,a) du with
// N_0 f(.,u) = sum_i p_i <nu_i, f(.,.,u)>
inline double pi0_apply(const SpectralData& sd, const StateEval& f, const Vector& x,
                        int a, double t, double gamma, double decay_scale,
                        double tolerance) {
    if (!(tolerance > 0)) throw QuadratureError("tolerance must be positive");
    const auto& grid = *sd.grid;
    // p_i at (x, a) by grid interpolation
    auto wts = grid.interpolate(x);
    std::vector<double> pi_x(sd.r, 0.0);
    for (int i = 0; i < sd.r; ++i)
        for (auto& [vi, ww] : wts) pi_x[i] += ww * sd.p[i].values(grid.index(vi, a)).real();

    auto inner = [&](double u) {
        double val = 0;
        for (int i = 0; i < sd.r; ++i) {
            double mass = 0;
            for (int idx = 0; idx < grid.size(); ++idx)
                if (sd.nu[i](idx) > 0)
                    mass += sd.nu[i](idx) *
                            f(grid.sphere_point(grid.vertex_of(idx)), grid.fiber_of(idx), u);
            val += pi_x[i] * mass;
        }
        return val;
    };
    // tail: |f| <= decay_scale e^{-gamma u} for u >= T
    double T = std::max(t, std::log(std::max(1.0, 2 * decay_scale / (gamma * tolerance))) /
                               gamma);
    double tail = decay_scale * std::exp(-gamma * T) / gamma;
    if (tail > tolerance)
        throw QuadratureError("Pi_0 tail bound exceeds tolerance");
    // composite Simpson on [t, T]
    int n = std::max(16, static_cast<int>(std::ceil((T - t) / 0.02)));
    if (n % 2) ++n;
    double h = (T - t) / n;
    double acc = inner(t) + inner(T);
    for (int j = 1; j < n; ++j) acc += inner(t + j * h) * (j % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// ---------------------------------------------------------------------------
// Fourier representation of the Green kernel

struct FourierGreenPoint {
    Vector x;
    int a;
    double t;
};

struct FourierGreenResult {
    std::vector<double> values;    // Pi_0/sigma + oscillatory integral
    std::vector<double> pi0_terms;
    double cutoff_tail = 0;        // bound on the |xi| > cutoff remainder
    double quad_error = 0;         // midpoint second-difference estimate
    double xi_cutoff = 0;
    double step = 0;
    std::vector<std::pair<double, double>> trace; // (xi, ||U(-i xi) fhat||_inf)
};

inline FourierGreenResult fourier_green(const RenewalContext& ctx,
                                        const RegularFunction& f,
                                        const std::vector<FourierGreenPoint>& pts,
                                        double xi_cutoff, double step,
                                        double tolerance) {
    if (f.k < 3)
        throw PreconditionError("fourier_green needs f in E^{gamma,K} with K >= L+3");
    const auto& grid = *ctx.grid;
    const int n = grid.size();
    const double sigma = ctx.sd.sigma_discrete;

    double max_t = 1.0;
    for (auto& p : pts) max_t = std::max(max_t, std::abs(p.t));
    step = std::min(step, StateGrid::pi() / (8 * max_t));
    int half = static_cast<int>(std::ceil(xi_cutoff / step));

    // fhat on the grid for every node (midpoint grid avoids xi = 0)
    std::vector<double> xis;
    for (int k = -half; k < half; ++k) xis.push_back((k + 0.5) * step);

    Eigen::MatrixXd fu; // precomputed f over a u-grid (numeric transform path)
    std::vector<double> ugrid;
    if (!f.fhat) {
        double U = std::max(30.0, 30.0 / f.gamma);
        double du = 0.01;
        int nu = static_cast<int>(2 * U / du) + 1;
        ugrid.resize(nu);
        fu.resize(n, nu);
        for (int j = 0; j < nu; ++j) ugrid[j] = -U + j * du;
        for (int idx = 0; idx < n; ++idx) {
            const Vector& xv = grid.sphere_point(grid.vertex_of(idx));
            int av = grid.fiber_of(idx);
            for (int j = 0; j < nu; ++j) fu(idx, j) = f.eval(xv, av, ugrid[j]);
        }
    }
    auto fhat_at = [&](double xi) {
        VectorC out(n);
        if (f.fhat) {
            for (int idx = 0; idx < n; ++idx)
                out(idx) = f.fhat(grid.sphere_point(grid.vertex_of(idx)),
                                  grid.fiber_of(idx), xi);
            return out;
        }
        // Simpson weights on the uniform u-grid
        const int nu = static_cast<int>(ugrid.size());
        const double du = ugrid[1] - ugrid[0];
        VectorC phase(nu);
        for (int j = 0; j < nu; ++j) {
            double w = (j == 0 || j == nu - 1) ? 1.0 : (j % 2 ? 4.0 : 2.0);
            phase(j) = w * std::exp(Complex(0, -xi * ugrid[j]));
        }
        out = (fu * phase) * (du / 3.0);
        return out;
    };

    FourierGreenResult res;
    res.xi_cutoff = half * step;
    res.step = step;
    res.values.assign(pts.size(), 0.0);
    res.pi0_terms.assign(pts.size(), 0.0);

    std::vector<std::vector<Complex>> integrand(pts.size());
    double m_tail = 0, q_tail = 0; // for the cutoff decay fit
    std::vector<std::pair<double, double>> tail_pts;
    for (double xi : xis) {
        Complex z(0, -xi);
        auto op = build_operator(ctx.rho, z, ctx.grid);
        MatrixC amat = MatrixC::Identity(n, n) - op.mat;
        Eigen::PartialPivLU<MatrixC> lu(amat);
        VectorC fh = fhat_at(xi);
        VectorC w = lu.solve(fh);
        // subtract the pole: N0 fh / (sigma z)
        GridFunction fhf{fh, f.gamma};
        VectorC n0 = n0_apply(ctx.sd, fhf).values;
        w -= n0 / (sigma * z);
        for (std::size_t pi = 0; pi < pts.size(); ++pi) {
            Complex val = 0;
            for (auto& [vi, ww] : grid.interpolate(pts[pi].x))
                val += ww * w(grid.index(vi, pts[pi].a));
            integrand[pi].push_back(std::exp(Complex(0, xi * pts[pi].t)) * val);
        }
        res.trace.emplace_back(xi, w.cwiseAbs().maxCoeff());
        if (std::abs(xi) >= 0.5 * res.xi_cutoff)
            tail_pts.emplace_back(std::log1p(std::abs(xi)),
                                  std::log(std::max(1e-300, w.cwiseAbs().maxCoeff())));
    }
    // oscillatory integral by the midpoint rule + per-point Pi_0 term
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
        Complex acc = 0;
        for (auto& v : integrand[pi]) acc += v;
        double osc = (acc * step).real() / (2 * StateGrid::pi());
        double second = 0;
        for (std::size_t j = 1; j + 1 < integrand[pi].size(); ++j)
            second += std::abs(integrand[pi][j + 1] - 2.0 * integrand[pi][j] +
                               integrand[pi][j - 1]);
        res.quad_error = std::max(res.quad_error, second * step / 24 / (2 * StateGrid::pi()));
        res.pi0_terms[pi] =
            pi0_apply(ctx.sd, f.eval, pts[pi].x, pts[pi].a, pts[pi].t, f.gamma,
                      2 * f.norm_gamma_k, tolerance) /
            sigma;
        res.values[pi] = res.pi0_terms[pi] + osc;
    }
    // cutoff tail: fit ||U(-i xi) fhat|| ~ A (1+xi)^{-q} on the outer half
    if (tail_pts.size() >= 4) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (auto& [lx, ly] : tail_pts) {
            sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        }
        double m = static_cast<double>(tail_pts.size());
        double q = -(m * sxy - sx * sy) / (m * sxx - sx * sx);
        double la = (sy + q * sx) / m;
        if (q > 1.01) {
            res.cutoff_tail = std::exp(la) *
                              std::pow(1 + res.xi_cutoff, 1 - q) / (q - 1) /
                              StateGrid::pi();
        } else {
            res.cutoff_tail = std::numeric_limits<double>::infinity();
        }
    }
    if (res.cutoff_tail > tolerance)
        throw CutoffError("cutoff tail bound " + std::to_string(res.cutoff_tail) +
                          " exceeds tolerance");
    return res;
}

// ---------------------------------------------------------------------------
// boundary decomposition and regularization

struct BoundaryDecomposition {
    StateEval phi; // f - p^- psi - p^+ (1 - psi), in E^{gamma,0}
    std::vector<double> p_minus, p_plus;
    double phi_norm_gamma0; // measured sup e^{gamma|t|} |phi| + seminorm sample
};

inline BoundaryDecomposition boundary_decompose(const OmegaFunction& f,
                                                const StateGrid& grid) {
    BoundaryDecomposition out;
    const double T = 45.0 / f.gamma;
    int a_size = grid.a_size();
    out.p_minus.resize(a_size);
    out.p_plus.resize(a_size);
    for (int a = 0; a < a_size; ++a) {
        out.p_minus[a] = f.eval(grid.sphere_point(0), a, -T);
        out.p_plus[a] = f.eval(grid.sphere_point(0), a, T);
    }
    auto pm = out.p_minus, pp = out.p_plus;
    auto base = f.eval;
    out.phi = [base, pm, pp](const Vector& x, int a, double t) {
        double ps = psi_gauss(t);
        return base(x, a, t) - pm[a] * ps - pp[a] * (1 - ps);
    };
    // measured E^{gamma,0} norm on a sample grid
    double norm = 0;
    for (int a = 0; a < a_size; ++a)
        for (int vi = 0; vi < grid.n_sphere(); vi += std::max(1, grid.n_sphere() / 16))
            for (double t = -30; t <= 30; t += 0.5)
                norm = std::max(norm, std::exp(f.gamma * std::abs(t)) *
                                          std::abs(out.phi(grid.sphere_point(vi), a, t)));
    out.phi_norm_gamma0 = norm;
    return out;
}

// phi_{k+1} * f along t, with exact derivative formulas
//   (phi_{k+1} * f)^{(m)} = sum_l binom(m,l) (-1)^{m-l} (k+1)!/(k+1-l)! *
//                           int u^{k+1-l} e^{-u} f(t-u) du
inline RegularFunction convolve_phi_k(const StateEval& f, int k, double gamma,
                                      double u_max = 60.0, double du = 0.02) {
    RegularFunction out;
    out.k = k;
    out.gamma = gamma;
    auto kernel_integral = [u_max, du, f](int power, const Vector& x, int a, double t) {
        // Simpson for int_0^{u_max} u^power e^{-u} f(x,a,t-u) du
        int n = static_cast<int>(u_max / du);
        if (n % 2) ++n;
        double h = u_max / n;
        auto g = [&](double u) { return std::pow(u, power) * std::exp(-u) * f(x, a, t - u); };
        double acc = g(0) + g(u_max);
        for (int j = 1; j < n; ++j) acc += g(j * h) * (j % 2 ? 4.0 : 2.0);
        return acc * h / 3.0;
    };
    auto binom = [](int n, int r) {
        double b = 1;
        for (int i = 0; i < r; ++i) b = b * (n - i) / (i + 1);
        return b;
    };
    auto fact_ratio = [](int k1, int l) { // (k+1)! / (k+1-l)!
        double r = 1;
        for (int i = 0; i < l; ++i) r *= (k1 - i);
        return r;
    };
    out.eval = [kernel_integral, k](const Vector& x, int a, double t) {
        return kernel_integral(k + 1, x, a, t);
    };
    for (int m = 1; m <= k; ++m) {
        out.derivs.push_back([kernel_integral, binom, fact_ratio, k, m](
                                 const Vector& x, int a, double t) {
            double acc = 0;
            for (int l = 0; l <= m; ++l) {
                double c = binom(m, l) * ((m - l) % 2 ? -1.0 : 1.0) *
                           fact_ratio(k + 1, l);
                acc += c * kernel_integral(k + 1 - l, x, a, t);
            }
            return acc;
        });
    }
    return out;
}

// analytic majorant C_k(gamma) for ||phi_{k+1} * f||_{gamma,k} <= C_k ||f||_{gamma,0}
inline double regularizing_constant(int k, double gamma) {
    if (gamma >= 1.0) throw PreconditionError("needs gamma < 1");
    auto gamma_int = [&](int power) { // int_0^inf e^{gamma u} u^power e^{-u} du
        double g = 1;
        for (int i = 1; i <= power; ++i) g *= i;
        return g / std::pow(1 - gamma, power + 1);
    };
    auto binom = [](int n, int r) {
        double b = 1;
        for (int i = 0; i < r; ++i) b = b * (n - i) / (i + 1);
        return b;
    };
    double best = 0;
    for (int m = 0; m <= k; ++m) {
        double acc = 0;
        for (int l = 0; l <= m; ++l) {
            double fr = 1;
            for (int i = 0; i < l; ++i) fr *= (k + 1 - i);
            acc += binom(m, l) * fr * gamma_int(k + 1 - l);
        }
        best = std::max(best, acc);
    }
    return best;
}

// ---------------------------------------------------------------------------
// tauberian pointwise bound (Frennemo)

struct TauberianBound {
    std::vector<double> bounds; // raw bound per requested t (before the C factor)
    double c_calibrated = 1.0;
};

// raw(t) = inf_V [ omega_f(1/V) + ||f||_inf / V + (1+V)^k sup_{t'} e^{-|t'|}
//                  |phi_k * f(t - t')| ]
inline double tauberian_raw(const std::function<double(double)>& f,
                            const std::function<double(double)>& omega_f, int k,
                            const std::vector<double>& v_grid, double t,
                            double f_sup, double conv_tmax = 40.0,
                            double conv_step = 0.05) {
    auto conv = [&](double s) {
        // phi_k * f at s, Simpson over [0, 60]
        int n = static_cast<int>(60.0 / 0.02);
        if (n % 2) ++n;
        double h = 60.0 / n;
        auto g = [&](double u) { return phi_k(k, u) * f(s - u); };
        double acc = g(0) + g(60.0);
        for (int j = 1; j < n; ++j) acc += g(j * h) * (j % 2 ? 4.0 : 2.0);
        return acc * h / 3.0;
    };
    double sup_term = 0;
    for (double tp = -conv_tmax; tp <= conv_tmax; tp += conv_step)
        sup_term = std::max(sup_term, std::exp(-std::abs(tp)) * std::abs(conv(t - tp)));
    double best = std::numeric_limits<double>::infinity();
    for (double v : v_grid) {
        double val = omega_f(1.0 / v) + f_sup / v + std::pow(1 + v, k) * sup_term;
        best = std::min(best, val);
    }
    return best;
}

// ---------------------------------------------------------------------------
// rate of convergence fit

struct RateFit {
    double alpha_hat = 0;
    double c_hat = 0;
    double r_squared = 0;
    std::vector<double> radii;
    std::vector<double> residuals;
    std::vector<double> mc_errors;
    std::vector<int> n_terms;
};

inline RateFit rate_fit(const RenewalContext& ctx, const OmegaFunction& f,
                        const Vector& x_direction, const std::vector<double>& radii,
                        std::uint64_t seed, double mc_tolerance, int n_walks = 4000,
                        int workers = 1) {
    if (!(ctx.lyap.lambda_rho > 3 * ctx.lyap.std_error))
        throw NonTransientError("lambda_rho estimate not positive at 3 sigma");
    RateFit out;
    Vector xhat = x_direction.normalized();
    for (double s : radii) {
        double t = std::log(s);
        // common random numbers across radii: the same walk realizations
        // evaluated at shifted t, so the residual curve varies smoothly
        auto g = green_mc(ctx, f, xhat, 0, t, seed, mc_tolerance, n_walks, workers);
        double pi0 = pi0_apply(ctx.sd, f.eval, xhat, 0, t, f.gamma, 2 * f.omega_norm,
                               mc_tolerance) /
                     ctx.lyap.lambda_rho;
        out.radii.push_back(s);
        out.residuals.push_back(std::abs(g.value - pi0));
        out.mc_errors.push_back(g.mc_std_error);
        out.n_terms.push_back(g.n_terms);
    }
    // noise gate: the residual scale must dominate the MC error
    std::vector<double> rs = out.residuals, es = out.mc_errors;
    std::sort(rs.begin(), rs.end());
    std::sort(es.begin(), es.end());
    if (es[es.size() / 2] > 0.5 * rs[rs.size() / 2])
        throw ToleranceError("MC noise exceeds the residual scale");
    // ln R = ln C - alpha ln(1 + |ln s|)
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int m = 0;
    for (std::size_t i = 0; i < out.radii.size(); ++i) {
        if (out.residuals[i] <= 0) continue;
        double lx = std::log(1 + std::abs(std::log(out.radii[i])));
        double ly = std::log(out.residuals[i]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; syy += ly * ly;
        ++m;
    }
    if (m >= 3) {
        double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        out.alpha_hat = -slope;
        out.c_hat = std::exp((sy - slope * sx) / m);
        double ybar = sy / m;
        double ss_tot = syy - m * ybar * ybar;
        double ss_res = 0;
        for (std::size_t i = 0; i < out.radii.size(); ++i) {
            if (out.residuals[i] <= 0) continue;
            double lx = std::log(1 + std::abs(std::log(out.radii[i])));
            double pred = std::log(out.c_hat) + slope * lx;
            double d = std::log(out.residuals[i]) - pred;
            ss_res += d * d;
        }
        out.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// boundary renewal: f(x,t) = p(pi_A(x)) psi(t)

struct BoundaryRenewal {
    double value;           // (G - Pi_0/sigma) f (x, t)
    double poisson_limit;   // sum_n P_A^n p (a), the t -> -inf limit
};

inline BoundaryRenewal boundary_renewal(const RenewalContext& ctx,
                                        const std::vector<double>& p, const Vector& x,
                                        int a, double t) {
    const auto& grid = *ctx.grid;
    const int a_size = grid.a_size();
    if (static_cast<int>(p.size()) != a_size)
        throw PreconditionError("p must have one value per element of A");
    double total = 0;
    for (double v : p) total += v;
    if (std::abs(total) > 1e-12) throw PreconditionError("sum_a p(a) must vanish");
    if (a_size < 2) throw PreconditionError("A must be nontrivial");

    const double sigma = ctx.sd.sigma_discrete;
    GridFunction gp = grid_constant(grid, 0.0, transfer_config().gamma);
    for (int idx = 0; idx < grid.size(); ++idx) gp.values(idx) = p[grid.fiber_of(idx)];

    // N_1 p = U(0) p
    GridFunction n1p = u0_apply(ctx.rho, ctx.grid, ctx.sd, sigma, gp);
    auto at_x = [&](const VectorC& vals) {
        Complex out = 0;
        for (auto& [vi, ww] : grid.interpolate(x)) out += ww * vals(grid.index(vi, a));
        return out.real();
    };

    // value = psi(t) N1 p(x) - (1/2pi) int e^{i xi t} V(-i xi) p(x) e^{-xi^2/2} d xi
    // with V(z) = (U(z) - U(0)) / z
    double step = 0.05;
    double cutoff = 8.5;
    int half = static_cast<int>(cutoff / step);
    Complex integral = 0;
    for (int k = -half; k < half; ++k) {
        double xi = (k + 0.5) * step;
        Complex z(0, -xi);
        auto uz = u_apply(ctx.rho, ctx.grid, z, ctx.sd, sigma, gp);
        Complex vz = (Complex(at_x(uz.values)) - Complex(at_x(n1p.values))) / z;
        integral += std::exp(Complex(0, xi * t)) * vz * std::exp(-xi * xi / 2) * step;
    }
    BoundaryRenewal out{};
    out.value = psi_gauss(t) * at_x(n1p.values) - (integral / (2 * StateGrid::pi())).real();

    // Poisson solution on A: (I - P_A)^{-1} p on the zero-sum subspace
    Matrix pa = ctx.rho.a_transition();
    Matrix sys = Matrix::Identity(a_size, a_size) - pa;
    // pin the solution to zero mean: replace the last row by the sum constraint
    for (int j = 0; j < a_size; ++j) sys(a_size - 1, j) = 1.0;
    Vector rhs(a_size);
    for (int i = 0; i < a_size - 1; ++i) rhs(i) = p[i];
    rhs(a_size - 1) = 0.0;
    Vector sol = sys.fullPivLu().solve(rhs);
    out.poisson_limit = sol(a);
    return out;
}

} // namespace renlab

#pragma once

// Certified quantitative-proximality operations. Each operation checks the
// explicit preconditions of the corresponding inequality, computes the
// certified bound from Cartan data, recomputes the other side from an
// independent eigen-oracle (power iteration cross-checked against the
// characteristic polynomial for d <= 3), and fails loudly if the bound is
// violated beyond fp slack.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "renlab/matrix_core.hpp"
#include "renlab/rng.hpp"

namespace renlab {

struct ProximalityConfig {
    double c1 = 1.0 / 64.0;  // admissible epsilon ceiling for the c-lemmas
    double c2 = 1024.0;      // defect-vs-transversality constant
    double c3 = 1024.0;      // two-sided cross-ratio constant
    double slack = 1e-7;     // relative slack for verified inequalities
    double power_tol = 1e-12;
    int power_maxit = 2000;
};

inline const ProximalityConfig& prox_config() {
    static ProximalityConfig cfg;
    return cfg;
}

// Top eigen-data by power iteration. Independent of the SVD/Cartan path.
struct TopEigen {
    double lambda1;   // ln |top eigenvalue|
    int sign1;        // sign of the top eigenvalue
    Vector v;         // unit eigenvector
};

namespace detail {

inline std::optional<TopEigen> power_top_eigen(const Matrix& m, const Vector& start,
                                               double tol, int maxit) {
    Vector v = start.normalized();
    double lambda = 0;
    for (int it = 0; it < maxit; ++it) {
        Vector w = m * v;
        double nw = w.norm();
        if (!(nw > 0) || !std::isfinite(nw)) return std::nullopt;
        w /= nw;
        // keep orientation to read off the eigenvalue sign
        if (w.dot(v) < 0) w = -w, nw = -nw;
        lambda = nw;
        double resid = (m * w - lambda * w).norm();
        v = w;
        if (resid <= tol * std::max(1.0, std::abs(lambda))) {
            TopEigen out;
            out.lambda1 = std::log(std::abs(lambda));
            out.sign1 = lambda >= 0 ? 1 : -1;
            out.v = v;
            return out;
        }
    }
    return std::nullopt;
}

// remaining characteristic-polynomial roots once lambda is deflated; d <= 3
inline std::vector<std::complex<double>> deflated_roots(const Matrix& m, double lambda) {
    const int d = static_cast<int>(m.rows());
    std::vector<std::complex<double>> roots;
    if (d == 2) {
        // lambda * mu = det = 1
        roots.emplace_back(m.determinant() / lambda, 0.0);
    } else if (d == 3) {
        // p(x) = x^3 - tr x^2 + c1 x - det; divide by (x - lambda)
        double tr = m.trace();
        double c1 = 0.5 * (tr * tr - (m * m).trace());
        double a = lambda - tr;
        double b = lambda * lambda - tr * lambda + c1;
        std::complex<double> disc = std::complex<double>(a * a - 4.0 * b, 0.0);
        std::complex<double> s = std::sqrt(disc);
        roots.push_back((-a + s) / 2.0);
        roots.push_back((-a - s) / 2.0);
    }
    return roots;
}

inline double char_poly(const Matrix& m, double x) {
    const int d = static_cast<int>(m.rows());
    if (d == 2) return x * x - m.trace() * x + m.determinant();
    double tr = m.trace();
    double c1 = 0.5 * (tr * tr - (m * m).trace());
    return x * x * x - tr * x * x + c1 * x - m.determinant();
}

} // namespace detail

// Eigen-oracle: top eigen-data of g, with a simple-real-dominance check.
inline TopEigen top_eigen_oracle(const GroupElement& g) {
    const auto& cfg = prox_config();
    auto cart = cartan_decompose(g);
    auto top = detail::power_top_eigen(g.mat(), cart.x_M, cfg.power_tol, cfg.power_maxit);
    if (!top) throw EigenError("power iteration did not converge");
    const double mod = std::exp(top->lambda1);
    if (g.dim() <= 3) {
        double sign_lambda = top->sign1 * mod;
        double p = detail::char_poly(g.mat(), sign_lambda);
        // scale of p near the top root ~ prod |lambda - mu_i| >= gap * mod^{d-1}
        if (std::abs(p) > 1e-6 * std::max(1.0, std::pow(mod, g.dim())))
            throw EigenError("characteristic polynomial check failed");
        for (const auto& mu : detail::deflated_roots(g.mat(), sign_lambda))
            if (std::abs(mu) >= mod * (1.0 - 1e-10))
                throw EigenError("top eigenvalue is not strictly dominant");
    }
    return *top;
}

struct ProximalCertificate {
    double lambda1;            // ln of the spectral radius
    int sign1;                 // epsilon_1(g)
    ProjectivePoint v_plus;    // attracting line V_g^+
    DualProjectivePoint v_less;// invariant hyperplane, as a point of P(V*)
    double epsilon;
    double bound_vplus_xM;     // kappa_12 / eps
    double bound_vless_ym;     // kappa_12 / eps
    double bound_restricted_norm; // 2 kappa_2 / eps
    // measured counterparts of each certified bound
    double meas_vplus_xM;
    double meas_vless_ym;
    double meas_restricted_norm;
    CartanDecomposition cartan;
};

namespace detail {

// ||g restricted to the invariant hyperplane ker(phi)||
inline double restricted_norm(const Matrix& m, const Vector& phi) {
    const int d = static_cast<int>(m.rows());
    // orthonormal basis of ker(phi): Householder completion
    Eigen::HouseholderQR<Matrix> qr(phi);
    Matrix q = qr.householderQ();
    Matrix basis = q.rightCols(d - 1);
    return Eigen::JacobiSVD<Matrix>(m * basis).singularValues()(0);
}

inline void require(bool ok, const std::string& what) {
    if (!ok) throw PreconditionError(what);
}

inline void verify(bool ok, const std::string& what) {
    if (!ok) throw ToleranceError("verified bound failed: " + what);
}

} // namespace detail

// Quantitative proximality: kappa_12(g) <= eps^3 and delta(X_g^M, Y_g^m) >= 2 eps
// imply g proximal, with certified control on the eigen-data.
inline ProximalCertificate certify_proximal(const GroupElement& g, double eps) {
    const auto& cfg = prox_config();
    detail::require(eps > 0 && eps <= 0.25, "epsilon not in (0, 1/4]");
    auto cart = cartan_decompose(g);
    if (cart.degenerate) throw PreconditionError("degenerate Cartan data (kappa_1 = kappa_2)");
    detail::require(cart.kappa_gap <= eps * eps * eps,
                    "kappa_{1,2} = " + std::to_string(cart.kappa_gap) + " > eps^3");
    const double delta_axes = dual_pairing(cart.x_M_point(), cart.y_m_point());
    detail::require(delta_axes >= 2 * eps,
                    "delta(X_g^M, Y_g^m) = " + std::to_string(delta_axes) + " < 2 eps");

    TopEigen top = top_eigen_oracle(g);
    TopEigen top_dual = [&] {
        auto t = detail::power_top_eigen(g.mat().transpose(), cart.y_m, cfg.power_tol,
                                         cfg.power_maxit);
        if (!t) throw EigenError("dual power iteration did not converge");
        return *t;
    }();

    ProximalCertificate cert{
        top.lambda1,
        top.sign1,
        ProjectivePoint(top.v),
        DualProjectivePoint(top_dual.v),
        eps,
        cart.kappa_gap / eps,
        cart.kappa_gap / eps,
        2.0 * cart.kappa(1) / eps,
        0, 0, 0,
        cart};

    const double sl = 1.0 + cfg.slack;
    cert.meas_vplus_xM = proj_distance(cert.v_plus, cart.x_M_point());
    cert.meas_vless_ym = wedge_norm_unit(cert.v_less.rep(), cart.y_m);
    cert.meas_restricted_norm = detail::restricted_norm(g.mat(), cert.v_less.rep());
    detail::verify(cert.meas_vplus_xM <= cert.bound_vplus_xM * sl + 1e-15,
                   "d(V_g^+, X_g^M) <= kappa_12/eps");
    detail::verify(cert.meas_vless_ym <= cert.bound_vless_ym * sl + 1e-15,
                   "d(V_g^<, Y_g^m) <= kappa_12/eps");
    // sigma_max(g B) cannot resolve the restricted norm below kappa_1 * eps_mach
    detail::verify(cert.meas_restricted_norm <=
                       cert.bound_restricted_norm * sl + 16.0 * 2.3e-16 * cart.kappa(0),
                   "||g|_{V_g^<}|| <= 2 kappa_2/eps");
    // e^{lambda_1} = ||g v_+|| >= kappa_1 delta(V_+, Y_g^m) exactly
    // (controles_r_prox at X = V_g^+); the axis form needs the sqrt(2) kappa_12/eps
    // correction for d(V_+, X^M) since the uncorrected display fails for
    // rot(theta) diag(s, 1/s) by tan^2(theta) kappa_12.
    detail::verify(cert.lambda1 >= std::log(cart.kappa(0)) +
                                       std::log(dual_pairing(cert.v_plus,
                                                             cart.y_m_point())) -
                                       cfg.slack,
                   "e^{lambda_1} >= kappa_1 delta(V_+, Y^m)");
    const double delta_corr = delta_axes - std::sqrt(2.0) * cart.kappa_gap / eps;
    detail::verify(delta_corr > 0 && cert.lambda1 >= std::log(cart.kappa(0)) +
                                                         std::log(delta_corr) - cfg.slack,
                   "e^{lambda_1} >= kappa_1 (delta(X^M, Y^m) - sqrt2 kappa_12/eps)");
    return cert;
}

inline std::optional<ProximalCertificate> try_certify(const GroupElement& g, double eps) {
    try {
        return certify_proximal(g, eps);
    } catch (const Error&) {
        return std::nullopt;
    }
}

// Largest admissible eps on the dyadic grid {2^-2, ..., 2^-20}; nullopt when
// no scale certifies the sample.
inline std::optional<ProximalCertificate> auto_certify(const GroupElement& g) {
    for (int k = 2; k <= 20; ++k) {
        if (auto c = try_certify(g, std::pow(2.0, -k))) return c;
    }
    return std::nullopt;
}

struct ProductBounds {
    double kappa1_lower;        // eps^{p-1} prod kappa_1(g_i)   (stated bound)
    double kappa1_lower_sharp;  // (p/2) eps^{p-1} prod kappa_1  (proof bound)
    double kappa_gap_upper;     // prod kappa_12(g_i) / eps^{2(p-1)}
    double d_xM_upper;          // kappa_12(g_p) / eps
    double d_ym_upper;          // kappa_12(g_1) / eps
    // measured values for the product g_p ... g_1
    double kappa1;
    double kappa_gap;
    double d_xM;
    double d_ym;
};

// Cartan data of a product of axis-transversal strongly contracting factors.
inline ProductBounds product_bounds(const std::vector<GroupElement>& gs, double eps) {
    const auto& cfg = prox_config();
    const int p = static_cast<int>(gs.size());
    detail::require(eps > 0 && eps <= 0.25, "epsilon not in (0, 1/4]");
    detail::require(p >= 2, "need p >= 2 factors");
    std::vector<CartanDecomposition> carts;
    carts.reserve(p);
    for (const auto& g : gs) carts.push_back(cartan_decompose(g));
    for (int i = 0; i < p; ++i)
        detail::require(carts[i].kappa_gap <= eps * eps * eps,
                        "kappa_{1,2}(g_" + std::to_string(i + 1) + ") > eps^3");
    for (int i = 0; i + 1 < p; ++i) {
        detail::require(dual_pairing(carts[i + 1].x_M_point(), carts[i].y_m_point()) >= 2 * eps,
                        "delta(X_{g_" + std::to_string(i + 2) + "}^M, Y_{g_" +
                            std::to_string(i + 1) + "}^m) < 2 eps");
        detail::require(dual_pairing(carts[i].x_M_point(), carts[i + 1].y_m_point()) >= 2 * eps,
                        "delta(X_{g_" + std::to_string(i + 1) + "}^M, Y_{g_" +
                            std::to_string(i + 2) + "}^m) < 2 eps");
    }

    GroupElement prod = gs[p - 1];
    for (int i = p - 2; i >= 0; --i) prod = prod * gs[i];
    auto cprod = cartan_decompose(prod);

    ProductBounds out{};
    double log_lower = (p - 1) * std::log(eps);
    out.kappa_gap_upper = std::pow(eps, -2.0 * (p - 1));
    for (int i = 0; i < p; ++i) {
        log_lower += std::log(carts[i].kappa(0));
        out.kappa_gap_upper *= carts[i].kappa_gap;
    }
    out.kappa1_lower = std::exp(log_lower);
    out.kappa1_lower_sharp = 0.5 * p * out.kappa1_lower;
    out.d_xM_upper = carts[p - 1].kappa_gap / eps;
    out.d_ym_upper = carts[0].kappa_gap / eps;
    out.kappa1 = cprod.kappa(0);
    out.kappa_gap = cprod.kappa_gap;
    out.d_xM = wedge_norm_unit(cprod.x_M, carts[p - 1].x_M);
    out.d_ym = wedge_norm_unit(cprod.y_m, carts[0].y_m);

    const double sl = cfg.slack;
    detail::verify(std::log(out.kappa1) >= log_lower - sl, "kappa_1 lower bound");
    detail::verify(out.kappa_gap <= out.kappa_gap_upper * (1 + sl) + 1e-300,
                   "kappa_{1,2} upper bound");
    detail::verify(out.d_xM <= out.d_xM_upper * (1 + sl) + 1e-15, "d(X^M) bound");
    detail::verify(out.d_ym <= out.d_ym_upper * (1 + sl) + 1e-15, "d(Y^m) bound");
    return out;
}

struct ContractionBound {
    double sigma_defect;       // |sigma(g,X) - lambda_1 - ln(delta(X,V<)/delta(V+,V<))|
    double sigma_defect_bound; // 2 kappa_12 / eps^3
    double pair_contraction;   // d(gX, gY)
    double pair_bound;         // kappa_12 / (4 eps^4)
};

inline ContractionBound contraction_bound(const GroupElement& g, double eps,
                                          const ProjectivePoint& X,
                                          const ProjectivePoint& Y) {
    const auto& cfg = prox_config();
    detail::require(eps > 0 && eps <= 0.25, "epsilon not in (0, 1/4]");
    auto cart = cartan_decompose(g);
    detail::require(cart.kappa_gap <= std::pow(eps, 4), "kappa_{1,2} > eps^4");
    detail::require(dual_pairing(cart.x_M_point(), cart.y_m_point()) >= 2 * eps,
                    "delta(X_g^M, Y_g^m) < 2 eps");
    auto cert = certify_proximal(g, eps);
    const double dX = dual_pairing(X, cert.v_less);
    const double dY = dual_pairing(Y, cert.v_less);
    detail::require(dX >= 2 * eps, "delta(X, V_g^<) < 2 eps");
    detail::require(dY >= 2 * eps, "delta(Y, V_g^<) < 2 eps");

    const double dplus = dual_pairing(cert.v_plus, cert.v_less);
    ContractionBound out{};
    out.sigma_defect = std::abs(sigma(g, X) - cert.lambda1 - std::log(dX / dplus));
    out.sigma_defect_bound = 2.0 * cart.kappa_gap / std::pow(eps, 3);
    out.pair_contraction = proj_distance(act(g, X), act(g, Y));
    out.pair_bound = cart.kappa_gap / (4.0 * std::pow(eps, 4));
    detail::verify(out.sigma_defect <= out.sigma_defect_bound * (1 + cfg.slack) + 1e-12,
                   "sigma defect bound");
    detail::verify(out.pair_contraction <= out.pair_bound * (1 + cfg.slack) + 1e-15,
                   "pair contraction bound");
    return out;
}

struct SpectralRadiusDefect {
    double defect;              // lambda_1(g) + lambda_1(h) - lambda_1(gh)
    double transversality_term; // ln of the delta cross-ratio
    double bound;               // c2 (kappa_12(g) + kappa_12(h)) / eps^3
};

inline SpectralRadiusDefect spectral_radius_defect(const GroupElement& g,
                                                   const GroupElement& h, double eps) {
    const auto& cfg = prox_config();
    detail::require(eps > 0 && eps <= cfg.c1, "epsilon not in (0, c1]");
    auto cg = cartan_decompose(g);
    auto ch = cartan_decompose(h);
    const double e4 = std::pow(eps, 4);
    detail::require(cg.kappa_gap <= e4, "kappa_{1,2}(g) > eps^4");
    detail::require(ch.kappa_gap <= e4, "kappa_{1,2}(h) > eps^4");
    detail::require(dual_pairing(cg.x_M_point(), cg.y_m_point()) >= 2 * eps,
                    "delta(X_g^M, Y_g^m) < 2 eps");
    detail::require(dual_pairing(ch.x_M_point(), ch.y_m_point()) >= 2 * eps,
                    "delta(X_h^M, Y_h^m) < 2 eps");
    detail::require(dual_pairing(cg.x_M_point(), ch.y_m_point()) >= 2 * eps,
                    "delta(X_g^M, Y_h^m) < 2 eps");
    detail::require(dual_pairing(ch.x_M_point(), cg.y_m_point()) >= 2 * eps,
                    "delta(X_h^M, Y_g^m) < 2 eps");

    auto certg = certify_proximal(g, eps);
    auto certh = certify_proximal(h, eps);
    GroupElement gh = g * h;
    auto certgh = [&] {
        try {
            return certify_proximal(gh, 0.75 * eps);
        } catch (const Error& e) {
            throw EigenError("gh is not certified proximal: " + std::string(e.what()));
        }
    }();

    SpectralRadiusDefect out{};
    out.defect = certg.lambda1 + certh.lambda1 - certgh.lambda1;
    out.transversality_term =
        std::log(dual_pairing(certh.v_plus, certh.v_less) *
                 dual_pairing(certg.v_plus, certg.v_less) /
                 (dual_pairing(certg.v_plus, certh.v_less) *
                  dual_pairing(certh.v_plus, certg.v_less)));
    out.bound = cfg.c2 * (cg.kappa_gap + ch.kappa_gap) / std::pow(eps, 3);
    detail::verify(std::abs(out.defect - out.transversality_term) <=
                       out.bound * (1 + cfg.slack) + 1e-12,
                   "spectral radius defect bound");
    return out;
}

struct PowerNeighborhoodBounds {
    double delta_axes;   // delta(X_f^M, Y_f^m), certified >= eps
    double d_xM;         // d(X_f^M, X_g^M), <= 2 kappa_12(g)/eps
    double d_ym;         // d(Y_f^m, Y_g^m), <= 2 kappa_12(g)/eps
    double kappa1_f;     // >= (1/2) eps^{p-1} kappa_1(g)^p
    double kappa_gap_f;  // <= 16 kappa_12(g)^p / eps^{2(p-1)}
    double d_vplus;      // d(V_f^+, V_g^+), <= c2 kappa_12(g)^p / eps^{2p-1}
    double d_vless;      // d(V_f^<, V_g^<), same bound
};

inline PowerNeighborhoodBounds power_neighborhood_bounds(const GroupElement& g, int p,
                                                         double eps, const GroupElement& f) {
    const auto& cfg = prox_config();
    detail::require(eps > 0 && eps <= cfg.c1, "epsilon not in (0, c1]");
    detail::require(p >= 1, "p >= 1");
    auto cg = cartan_decompose(g);
    detail::require(cg.kappa_gap <= std::pow(eps, 3), "kappa_{1,2}(g) > eps^3");
    detail::require(dual_pairing(cg.x_M_point(), cg.y_m_point()) >= 2 * eps,
                    "delta(X_g^M, Y_g^m) < 2 eps");
    GroupElement gp = g.pow(p);
    const double dist = Eigen::JacobiSVD<Matrix>(gp.mat() - f.mat()).singularValues()(0);
    const double radius = eps * eps * std::pow(cg.kappa_gap / (eps * eps), p);
    detail::require(dist <= radius, "||g^p - f|| = " + std::to_string(dist) +
                                        " exceeds eps^2 (kappa_12/eps^2)^p");

    auto cf = cartan_decompose(f);
    auto certg = certify_proximal(g, eps);
    auto certf = [&] {
        auto c = auto_certify(f);
        if (!c) throw EigenError("f near g^p could not be certified proximal");
        return *c;
    }();

    PowerNeighborhoodBounds out{};
    out.delta_axes = dual_pairing(cf.x_M_point(), cf.y_m_point());
    out.d_xM = wedge_norm_unit(cf.x_M, cg.x_M);
    out.d_ym = wedge_norm_unit(cf.y_m, cg.y_m);
    out.kappa1_f = cf.kappa(0);
    out.kappa_gap_f = cf.kappa_gap;
    out.d_vplus = proj_distance(certf.v_plus, certg.v_plus);
    out.d_vless = wedge_norm_unit(certf.v_less.rep(), certg.v_less.rep());

    const double sl = cfg.slack;
    detail::verify(out.delta_axes >= eps * (1 - sl), "delta(X_f^M, Y_f^m) >= eps");
    detail::verify(out.d_xM <= 2 * cg.kappa_gap / eps * (1 + sl) + 1e-15, "d(X_f^M, X_g^M)");
    detail::verify(out.d_ym <= 2 * cg.kappa_gap / eps * (1 + sl) + 1e-15, "d(Y_f^m, Y_g^m)");
    detail::verify(std::log(out.kappa1_f) >=
                       std::log(0.5) + (p - 1) * std::log(eps) + p * std::log(cg.kappa(0)) - sl,
                   "kappa_1(f) lower bound");
    detail::verify(out.kappa_gap_f <=
                       16.0 * std::pow(cg.kappa_gap, p) * std::pow(eps, -2.0 * (p - 1)) *
                               (1 + sl) + 1e-300,
                   "kappa_{1,2}(f) upper bound");
    const double vbound = cfg.c2 * std::pow(cg.kappa_gap, p) / std::pow(eps, 2.0 * p - 1);
    detail::verify(out.d_vplus <= vbound * (1 + sl) + 1e-15, "d(V_f^+, V_g^+)");
    detail::verify(out.d_vless <= vbound * (1 + sl) + 1e-15, "d(V_f^<, V_g^<)");
    return out;
}

struct FghDefect {
    double defect;          // lambda_1(fgh) - lambda_1(f) - lambda_1(gh)
    double log_cross_ratio; // ln of the delta cross-ratio of the lemma
    double upper;           // c2 (kappa_12(g)^p / eps^{2p} + kappa_12(h)/eps)
    double lower;           // eps^3 / (c3 kappa_1(g)^d), 0 when part 2 skipped
    double upper2;          // c3 kappa_12(g)/eps^5, 0 when part 2 skipped
    int p;                  // power used for the f ~ g^p admissibility check
    bool second_part_checked;
};

// Spectral-radius additivity defect for f g h with f in a small neighborhood
// of g^p. p = 0 selects the largest admissible power <= 32.
inline FghDefect fgh_defect(const GroupElement& f, const GroupElement& g,
                            const GroupElement& h, double eps, int p = 0) {
    const auto& cfg = prox_config();
    detail::require(eps > 0 && eps <= cfg.c1, "epsilon not in (0, c1]");
    auto cg = cartan_decompose(g);
    auto ch = cartan_decompose(h);
    detail::require(cg.kappa_gap <= std::pow(eps, 5), "kappa_{1,2}(g) > eps^5");
    detail::require(ch.kappa_gap <= std::pow(eps, 3), "kappa_{1,2}(h) > eps^3");
    detail::require(dual_pairing(cg.x_M_point(), cg.y_m_point()) >= 2 * eps,
                    "delta(X_g^M, Y_g^m) < 2 eps");
    detail::require(dual_pairing(ch.x_M_point(), ch.y_m_point()) >= 2 * eps,
                    "delta(X_h^M, Y_h^m) < 2 eps");
    detail::require(dual_pairing(ch.x_M_point(), cg.y_m_point()) >= 2 * eps,
                    "delta(X_h^M, Y_g^m) < 2 eps");
    detail::require(dual_pairing(cg.x_M_point(), ch.y_m_point()) >= 2 * eps,
                    "delta(X_g^M, Y_h^m) < 2 eps");

    auto admissible = [&](int q) {
        // keep kappa_1(g)^q representable
        if (q * std::log(cg.kappa(0)) > 230.0) return false;
        double dist = Eigen::JacobiSVD<Matrix>(g.pow(q).mat() - f.mat()).singularValues()(0);
        return dist <= eps * eps * std::pow(cg.kappa_gap / eps, q);
    };
    if (p == 0) {
        for (int q = 32; q >= 1; --q)
            if (admissible(q)) { p = q; break; }
        detail::require(p >= 1, "no power p makes ||g^p - f|| admissible");
    } else {
        detail::require(admissible(p), "||g^p - f|| exceeds eps^2 (kappa_12/eps)^p");
    }

    auto certg = certify_proximal(g, eps);
    auto certh = certify_proximal(h, eps);
    TopEigen top_f = top_eigen_oracle(f);
    TopEigen top_gh = top_eigen_oracle(g * h);
    TopEigen top_fgh = top_eigen_oracle(f * (g * h));

    // delta cross-ratio of the statement
    Vector g_vh = g.mat() * certh.v_plus.rep();
    ProjectivePoint gVh(g_vh);
    const double cross =
        dual_pairing(certg.v_plus, certg.v_less) * dual_pairing(gVh, certh.v_less) /
        (dual_pairing(certg.v_plus, certh.v_less) * dual_pairing(gVh, certg.v_less));

    FghDefect out{};
    out.p = p;
    out.defect = top_fgh.lambda1 - top_f.lambda1 - top_gh.lambda1;
    out.log_cross_ratio = std::log(cross);
    out.upper = cfg.c2 * (std::pow(cg.kappa_gap, p) / std::pow(eps, 2.0 * p) +
                          ch.kappa_gap / eps);
    detail::verify(std::abs(out.defect - out.log_cross_ratio) <=
                       out.upper * (1 + cfg.slack) + 1e-12,
                   "fgh defect bound");

    // second part: two-sided control of the cross-ratio
    const Vector& vplus = certg.v_plus.rep();
    const Vector& phi = certg.v_less.rep();
    Vector xh = ch.x_M;
    double phi_vplus = phi.dot(vplus);
    Vector pi_g_xh = xh - (phi.dot(xh) / phi_vplus) * vplus; // projection onto ker(phi) along V+
    bool part2 = pi_g_xh.norm() > 1e-12;                     // X_h^M != V_g^+
    if (part2) {
        ProjectivePoint g_pi_xh(g.mat() * pi_g_xh);
        part2 = dual_pairing(g_pi_xh, ch.y_m_point()) >= 2 * eps &&
                wedge_norm_unit(cg.x_M, ch.x_M) >= 2 * eps &&
                ch.kappa_gap * cg.kappa(0) <= 0.5 * std::pow(eps, 3);
    }
    out.second_part_checked = part2;
    if (part2) {
        out.lower = std::pow(eps, 3) / (cfg.c3 * std::pow(cg.kappa(0), g.dim()));
        out.upper2 = cfg.c3 * cg.kappa_gap / std::pow(eps, 5);
        detail::verify(std::abs(out.log_cross_ratio) >= out.lower * (1 - cfg.slack),
                       "cross-ratio lower bound");
        detail::verify(std::abs(out.log_cross_ratio) <= out.upper2 * (1 + cfg.slack),
                       "cross-ratio upper bound");
    }
    return out;
}

// pi_g: projection onto ker(phi_g^<) parallel to V_g^+, from certificate data.
inline Matrix projection_pi_g(const ProximalCertificate& cert) {
    const Vector& v = cert.v_plus.rep();
    const Vector& phi = cert.v_less.rep();
    return Matrix::Identity(v.size(), v.size()) - (v * phi.transpose()) / phi.dot(v);
}

struct CalibratedConstants {
    double c2_hat; // smallest constant for the spectral-radius defect bound
    double c3_hat; // smallest constant for the fgh cross-ratio two-sided bound
    int trials;
};

// Measures the smallest constants making the randomized defect inequalities
// hold; the configured c2/c3 are existential in the source material, this
// makes them empirical.
inline CalibratedConstants calibrate_constants(int d, int trials, std::uint64_t seed) {
    Rng rng(seed);
    const double eps = prox_config().c1;
    auto conj_diag = [&](double smin, double smax) {
        double s = std::exp(rng.uniform(std::log(smin), std::log(smax)));
        Matrix a = Matrix::Identity(d, d);
        a(0, 0) = s;
        a(d - 1, d - 1) = 1.0 / s;
        auto rot = [&]() {
            Matrix g(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
            Eigen::HouseholderQR<Matrix> qr(g);
            Matrix q = qr.householderQ();
            if (q.determinant() < 0) q.col(0) *= -1;
            return q;
        };
        return GroupElement(rot() * a * rot());
    };
    auto admissible = [&](double gap_max) {
        double smin = (d == 2) ? std::sqrt(1.0 / gap_max) : 1.0 / gap_max;
        while (true) {
            auto g = conj_diag(smin * 1.01, smin * 40);
            auto c = cartan_decompose(g);
            if (c.kappa_gap <= gap_max &&
                dual_pairing(c.x_M_point(), c.y_m_point()) >= 2.4 * eps)
                return g;
        }
    };
    CalibratedConstants out{0, 0, trials};
    int done2 = 0, done3 = 0;
    while (done2 < trials) {
        auto g = admissible(std::pow(eps, 4));
        auto h = admissible(std::pow(eps, 4));
        auto cg = cartan_decompose(g), ch = cartan_decompose(h);
        if (dual_pairing(cg.x_M_point(), ch.y_m_point()) < 2 * eps) continue;
        if (dual_pairing(ch.x_M_point(), cg.y_m_point()) < 2 * eps) continue;
        auto res = spectral_radius_defect(g, h, eps);
        double denom = (cg.kappa_gap + ch.kappa_gap) / std::pow(eps, 3);
        out.c2_hat = std::max(out.c2_hat,
                              std::abs(res.defect - res.transversality_term) / denom);
        ++done2;
    }
    while (done3 < trials) {
        auto g = admissible(std::pow(eps, 5));
        auto cg0 = cartan_decompose(g);
        // part-2 needs kappa_12(h) kappa_1(g) <= eps^3 / 2
        auto h = admissible(0.4 * std::pow(eps, 3) / cg0.kappa(0));
        auto cg = cg0;
        auto ch = cartan_decompose(h);
        if (dual_pairing(ch.x_M_point(), cg.y_m_point()) < 2 * eps) continue;
        if (dual_pairing(cg.x_M_point(), ch.y_m_point()) < 2 * eps) continue;
        auto res = fgh_defect(g.pow(1), g, h, eps, 1);
        if (!res.second_part_checked) continue;
        double lx = std::abs(res.log_cross_ratio);
        out.c3_hat = std::max(out.c3_hat, lx * std::pow(eps, 5) / cg.kappa_gap);
        out.c3_hat = std::max(out.c3_hat, std::pow(eps, 3) /
                                              (lx * std::pow(cg.kappa(0), d)));
        ++done3;
    }
    return out;
}

} // namespace renlab

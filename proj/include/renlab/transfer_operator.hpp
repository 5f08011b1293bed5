#pragma once

// Discretization of the perturbed transfer operator
//   P(z) f(x,a) = sum_atoms w_g e^{-z sigma(g,x)} f(gx/||gx||, ga)
// on a sphere-grid x A state space, with Holder-norm machinery, spectral
// data, resolvent solves and scans, the U(z) = (I-P(z))^{-1} - N_0/(sigma z)
// decomposition, the even/odd split under the antipodal map, and the
// Dolgopyat contraction probe.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "renlab/matrix_core.hpp"
#include "renlab/walk_engine.hpp"

namespace renlab {

using Complex = std::complex<double>;
using MatrixC = Eigen::MatrixXcd;
using VectorC = Eigen::VectorXcd;

// Sphere grid x A with a fixed-point-free antipodal involution on indices.
class StateGrid {
public:
    // d = 2: uniform angle grid. "aligned" puts theta_j = j 2pi/n (contains
    // +-e1; n must be even and not divisible by 4 so +-e2 stay off-grid),
    // otherwise theta_j = (j + 1/2) 2pi/n.
    static StateGrid circle(int n, int a_size = 1, bool aligned = false) {
        if (n < 8 || n % 2 != 0) throw GridError("circle grid needs even n >= 8");
        if (aligned && n % 4 == 0)
            throw GridError("aligned circle grid needs n = 2 mod 4");
        StateGrid g;
        g.d_ = 2;
        g.a_size_ = a_size;
        g.aligned_ = aligned;
        const double step = 2.0 * pi() / n;
        for (int j = 0; j < n; ++j) {
            double ang = (aligned ? j : j + 0.5) * step;
            Vector v(2);
            v << std::cos(ang), std::sin(ang);
            g.verts_.push_back(v);
        }
        for (int j = 0; j < n; ++j) g.antipode_.push_back((j + n / 2) % n);
        g.cell_radius_ = step / 2;
        return g;
    }

    // d = 3: icosphere with `subdiv` midpoint subdivisions (vertex count
    // 12, 42, 162, 642, ...). Vertices come in exact antipodal pairs.
    static StateGrid icosphere(int subdiv, int a_size = 1) {
        StateGrid g;
        g.d_ = 3;
        g.a_size_ = a_size;
        const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
        std::vector<Vector> vs;
        auto add = [&](double a, double b, double c) {
            Vector v(3);
            v << a, b, c;
            vs.push_back(v.normalized());
        };
        add(-1, phi, 0); add(1, phi, 0); add(-1, -phi, 0); add(1, -phi, 0);
        add(0, -1, phi); add(0, 1, phi); add(0, -1, -phi); add(0, 1, -phi);
        add(phi, 0, -1); add(phi, 0, 1); add(-phi, 0, -1); add(-phi, 0, 1);
        std::vector<std::array<int, 3>> faces = {
            {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
            {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
            {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
            {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
        for (int it = 0; it < subdiv; ++it) {
            std::map<std::pair<int, int>, int> midpoint;
            auto mid = [&](int a, int b) {
                auto key = std::minmax(a, b);
                auto found = midpoint.find(key);
                if (found != midpoint.end()) return found->second;
                Vector m = (vs[a] + vs[b]).normalized();
                vs.push_back(m);
                int idx = static_cast<int>(vs.size()) - 1;
                midpoint[key] = idx;
                return idx;
            };
            std::vector<std::array<int, 3>> next;
            for (auto& f : faces) {
                int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
                next.push_back({f[0], ab, ca});
                next.push_back({f[1], bc, ab});
                next.push_back({f[2], ca, bc});
                next.push_back({ab, bc, ca});
            }
            faces = std::move(next);
        }
        g.verts_ = std::move(vs);
        g.faces_ = std::move(faces);
        // antipode indices (subdivision preserves the symmetry exactly)
        g.antipode_.assign(g.verts_.size(), -1);
        for (std::size_t i = 0; i < g.verts_.size(); ++i) {
            if (g.antipode_[i] >= 0) continue;
            double best = 1e9;
            int jbest = -1;
            for (std::size_t j = 0; j < g.verts_.size(); ++j) {
                double dd = (g.verts_[i] + g.verts_[j]).norm();
                if (dd < best) {
                    best = dd;
                    jbest = static_cast<int>(j);
                }
            }
            if (best > 1e-9) throw GridError("icosphere lost antipodal symmetry");
            g.antipode_[i] = jbest;
            g.antipode_[jbest] = static_cast<int>(i);
        }
        double rmax = 0;
        for (auto& f : g.faces_) {
            Vector c = (g.verts_[f[0]] + g.verts_[f[1]] + g.verts_[f[2]]).normalized();
            for (int k = 0; k < 3; ++k) rmax = std::max(rmax, (c - g.verts_[f[k]]).norm());
        }
        g.cell_radius_ = rmax;
        // vertex -> incident faces
        g.vert_faces_.assign(g.verts_.size(), {});
        for (std::size_t fi = 0; fi < g.faces_.size(); ++fi)
            for (int k = 0; k < 3; ++k) g.vert_faces_[g.faces_[fi][k]].push_back(fi);
        return g;
    }

    int dim() const { return d_; }
    int a_size() const { return a_size_; }
    bool aligned() const { return aligned_; }
    int n_sphere() const { return static_cast<int>(verts_.size()); }
    int size() const { return n_sphere() * a_size_; }
    double cell_radius() const { return cell_radius_; }

    const Vector& sphere_point(int vi) const { return verts_[vi]; }
    int vertex_of(int idx) const { return idx / a_size_; }
    int fiber_of(int idx) const { return idx % a_size_; }
    int index(int vi, int a) const { return vi * a_size_ + a; }
    int antipode_index(int idx) const {
        return index(antipode_[vertex_of(idx)], fiber_of(idx));
    }

    // chordal distance on the sphere; quotient = projective (min over signs)
    double distance(int vi, int vj, bool quotient = false) const {
        double dd = (verts_[vi] - verts_[vj]).norm();
        if (!quotient) return dd;
        return std::min(dd, (verts_[vi] + verts_[vj]).norm());
    }

    // piecewise-linear interpolation weights of a unit vector
    std::vector<std::pair<int, double>> interpolate(const Vector& x) const {
        if (d_ == 2) {
            const int n = n_sphere();
            const double step = 2.0 * pi() / n;
            double ang = std::atan2(x(1), x(0));
            if (ang < 0) ang += 2.0 * pi();
            double pos = ang / step - (aligned_ ? 0.0 : 0.5);
            double fl = std::floor(pos);
            int j0 = static_cast<int>(fl);
            double frac = pos - fl;
            int a = ((j0 % n) + n) % n, b = (a + 1) % n;
            if (frac <= 1e-14) return {{a, 1.0}};
            if (frac >= 1 - 1e-14) return {{b, 1.0}};
            return {{a, 1.0 - frac}, {b, frac}};
        }
        // d = 3: containing face via nearest vertex, then barycentric weights
        int nearest = 0;
        double bd = 1e18;
        for (int i = 0; i < n_sphere(); ++i) {
            double dd = (verts_[i] - x).squaredNorm();
            if (dd < bd) {
                bd = dd;
                nearest = i;
            }
        }
        auto bary = [&](const std::array<int, 3>& f, Eigen::Vector3d& w) {
            Eigen::Matrix3d m;
            for (int k = 0; k < 3; ++k) m.col(k) = verts_[f[k]];
            w = m.fullPivLu().solve(Eigen::Vector3d(x(0), x(1), x(2)));
            double s = w.sum();
            if (std::abs(s) < 1e-12) return false;
            w /= s;
            return w.minCoeff() >= -1e-9;
        };
        Eigen::Vector3d w;
        for (std::size_t fi : vert_faces_[nearest]) {
            if (bary(faces_[fi], w)) {
                std::vector<std::pair<int, double>> out;
                for (int k = 0; k < 3; ++k)
                    if (w(k) > 1e-14) out.emplace_back(faces_[fi][k], w(k));
                double tot = 0;
                for (auto& [i, ww] : out) tot += ww;
                for (auto& [i, ww] : out) ww /= tot;
                return out;
            }
        }
        // fallback: global face scan (x near an edge of a non-incident face)
        double best_min = -1e18;
        std::size_t best_face = 0;
        Eigen::Vector3d best_w;
        for (std::size_t fi = 0; fi < faces_.size(); ++fi) {
            Eigen::Matrix3d m;
            for (int k = 0; k < 3; ++k) m.col(k) = verts_[faces_[fi][k]];
            Eigen::Vector3d ww = m.fullPivLu().solve(Eigen::Vector3d(x(0), x(1), x(2)));
            double s = ww.sum();
            if (std::abs(s) < 1e-12) continue;
            ww /= s;
            if (ww.minCoeff() > best_min) {
                best_min = ww.minCoeff();
                best_face = fi;
                best_w = ww;
            }
        }
        if (best_min < -0.1) throw GridError("interpolation failed to locate a face");
        std::vector<std::pair<int, double>> out;
        double tot = 0;
        for (int k = 0; k < 3; ++k) {
            double ww = std::max(0.0, best_w(k));
            if (ww > 1e-14) {
                out.emplace_back(faces_[best_face][k], ww);
                tot += ww;
            }
        }
        for (auto& [i, ww] : out) ww /= tot;
        return out;
    }

    static double pi() { return 3.14159265358979323846; }

private:
    int d_ = 2;
    int a_size_ = 1;
    bool aligned_ = false;
    std::vector<Vector> verts_;
    std::vector<int> antipode_;
    std::vector<std::array<int, 3>> faces_;
    std::vector<std::vector<std::size_t>> vert_faces_;
    double cell_radius_ = 0;
};

struct GridFunction {
    VectorC values;
    double gamma = 0.25;
};

inline GridFunction grid_constant(const StateGrid& grid, Complex c, double gamma = 0.25) {
    GridFunction f;
    f.gamma = gamma;
    f.values = VectorC::Constant(grid.size(), c);
    return f;
}

inline double sup_norm(const GridFunction& f) {
    double m = 0;
    for (int i = 0; i < f.values.size(); ++i) m = std::max(m, std::abs(f.values(i)));
    return m;
}

// m_gamma(f) over same-fiber grid pairs; quotient uses the projective metric
inline double holder_seminorm(const GridFunction& f, const StateGrid& grid,
                              bool quotient = false) {
    if (grid.n_sphere() < 2) throw GridError("need >= 2 points per fiber");
    double m = 0;
    const int nv = grid.n_sphere();
    for (int a = 0; a < grid.a_size(); ++a)
        for (int i = 0; i < nv; ++i)
            for (int j = i + 1; j < nv; ++j) {
                double dd = grid.distance(i, j, quotient);
                if (dd <= 1e-14) continue;
                double num = std::abs(f.values(grid.index(i, a)) -
                                      f.values(grid.index(j, a)));
                m = std::max(m, num / std::pow(dd, f.gamma));
            }
    return m;
}

inline double holder_norm(const GridFunction& f, const StateGrid& grid,
                          bool quotient = false) {
    return sup_norm(f) + holder_seminorm(f, grid, quotient);
}

// ||f||_(t) = max(||f||_inf, m_gamma(f) / (2 C_2 |t|))
inline double t_norm(const GridFunction& f, const StateGrid& grid, double t, double c2) {
    if (std::abs(t) < 2) throw PreconditionError("(t)-norm needs |t| >= 2");
    if (c2 < 1) throw PreconditionError("(t)-norm needs C_2 >= 1");
    return std::max(sup_norm(f), holder_seminorm(f, grid) / (2 * c2 * std::abs(t)));
}

struct DiscretizedOperator {
    MatrixC mat;
    Complex z;
    std::shared_ptr<const StateGrid> grid;
    std::shared_ptr<const GeneratorMeasure> rho;
};

struct TransferConfig {
    double eta = 0.2;       // strip |Re z| < eta for P(z)
    double gamma = 0.25;    // default Holder exponent
    double cluster_tol = 1e-6;
};

inline const TransferConfig& transfer_config() {
    static TransferConfig cfg;
    return cfg;
}

inline DiscretizedOperator build_operator(const GeneratorMeasure& rho, Complex z,
                                          std::shared_ptr<const StateGrid> grid) {
    if (std::abs(z.real()) >= transfer_config().eta + 1e-12)
        throw OutOfDomainError("|Re z| must stay below eta");
    const int n = grid->size();
    DiscretizedOperator op;
    op.mat = MatrixC::Zero(n, n);
    op.z = z;
    op.grid = grid;
    op.rho = std::make_shared<const GeneratorMeasure>(rho);
    for (int vi = 0; vi < grid->n_sphere(); ++vi) {
        const Vector& x = grid->sphere_point(vi);
        for (std::size_t j = 0; j < rho.atoms().size(); ++j) {
            const auto& at = rho.atoms()[j];
            Vector gx = at.g.mat() * x;
            double s = std::log(gx.norm());
            Complex factor = at.weight * std::exp(-z * s);
            auto w = grid->interpolate(gx.normalized());
            for (int a = 0; a < grid->a_size(); ++a) {
                int row = grid->index(vi, a);
                int a2 = rho.apply_a(j, a);
                for (auto& [col_v, col_w] : w)
                    op.mat(row, grid->index(col_v, a2)) += factor * col_w;
            }
        }
    }
    return op;
}

// d/dz of the operator family at the same z
inline MatrixC build_operator_derivative(const GeneratorMeasure& rho, Complex z,
                                         const StateGrid& grid) {
    const int n = grid.size();
    MatrixC dp = MatrixC::Zero(n, n);
    for (int vi = 0; vi < grid.n_sphere(); ++vi) {
        const Vector& x = grid.sphere_point(vi);
        for (std::size_t j = 0; j < rho.atoms().size(); ++j) {
            const auto& at = rho.atoms()[j];
            Vector gx = at.g.mat() * x;
            double s = std::log(gx.norm());
            Complex factor = -s * at.weight * std::exp(-z * s);
            auto w = grid.interpolate(gx.normalized());
            for (int a = 0; a < grid.a_size(); ++a) {
                int row = grid.index(vi, a);
                int a2 = rho.apply_a(j, a);
                for (auto& [col_v, col_w] : w)
                    dp(row, grid.index(col_v, a2)) += factor * col_w;
            }
        }
    }
    return dp;
}

inline GridFunction apply(const DiscretizedOperator& op, const GridFunction& f) {
    GridFunction out;
    out.gamma = f.gamma;
    out.values = op.mat * f.values;
    return out;
}

struct SpectralData {
    Complex leading_eigenvalue;
    double gap = 0; // 1 - |second eigenvalue|
    int r = 0;      // number of minimal closed invariant sets (<= 2)
    std::vector<GridFunction> p;    // invariant functions, sum = 1 pointwise
    std::vector<Vector> nu;         // ergodic stationary measures (weights per index)
    Vector nu_bar;                  // H-symmetric average of the nu_i
    std::shared_ptr<const StateGrid> grid;
    double sigma_discrete = 0;      // -d(lambda)/dz at z = 0 of the leading branch
};

inline SpectralData spectral_data(const DiscretizedOperator& op) {
    if (std::abs(op.z) > 1e-14) throw PreconditionError("spectral_data needs z = 0");
    const auto& grid = *op.grid;
    const int n = grid.size();
    Matrix pm = op.mat.real();
    const double ctol = transfer_config().cluster_tol;

    Eigen::EigenSolver<Matrix> es(pm);
    if (es.info() != Eigen::Success) throw DecompositionError("eigensolver failed");
    std::vector<int> cluster;
    double second = 0;
    for (int i = 0; i < n; ++i) {
        Complex lam = es.eigenvalues()(i);
        if (std::abs(lam - 1.0) <= ctol)
            cluster.push_back(i);
        else
            second = std::max(second, std::abs(lam));
    }
    if (cluster.empty())
        throw DegenerateSpectrumError("no eigenvalue at 1 (not stochastic?)");
    if (static_cast<int>(cluster.size()) > 2)
        throw DegenerateSpectrumError("leading cluster has multiplicity " +
                                      std::to_string(cluster.size()) + " > |H| = 2");
    if (second > 1 - ctol)
        throw DegenerateSpectrumError("leading cluster not separated: |lambda_2| = " +
                                      std::to_string(second));

    SpectralData sd;
    sd.grid = op.grid;
    sd.r = static_cast<int>(cluster.size());
    sd.leading_eigenvalue = es.eigenvalues()(cluster[0]);
    sd.gap = 1.0 - second;

    // right invariant functions
    auto antipode_apply = [&](const Vector& v) {
        Vector out(n);
        for (int i = 0; i < n; ++i) out(i) = v(grid.antipode_index(i));
        return out;
    };
    if (sd.r == 1) {
        GridFunction p1 = grid_constant(grid, 1.0, transfer_config().gamma);
        sd.p.push_back(std::move(p1));
    } else {
        // basis {1, u} with u odd under the antipodal map
        Vector u = Vector::Zero(n);
        for (int idx : cluster) {
            Vector v = es.eigenvectors().col(idx).real();
            if (v.norm() < 1e-12) v = es.eigenvectors().col(idx).imag();
            Vector odd = 0.5 * (v - antipode_apply(v));
            if (odd.norm() > u.norm()) u = odd;
        }
        if (u.norm() < 1e-10)
            throw DegenerateSpectrumError("r = 2 but no odd invariant function");
        u /= u.cwiseAbs().maxCoeff();
        GridFunction p1 = grid_constant(grid, 0.0, transfer_config().gamma);
        GridFunction p2 = p1;
        for (int i = 0; i < n; ++i) {
            p1.values(i) = 0.5 * (1.0 + u(i));
            p2.values(i) = 0.5 * (1.0 - u(i));
        }
        sd.p.push_back(std::move(p1));
        sd.p.push_back(std::move(p2));
    }

    // left stationary measures
    Eigen::EigenSolver<Matrix> est(pm.transpose());
    std::vector<int> lcluster;
    for (int i = 0; i < n; ++i)
        if (std::abs(est.eigenvalues()(i) - 1.0) <= ctol) lcluster.push_back(i);
    if (static_cast<int>(lcluster.size()) != sd.r)
        throw DegenerateSpectrumError("left/right cluster size mismatch");
    Vector nu_even = Vector::Zero(n);
    Vector nu_odd = Vector::Zero(n);
    for (int idx : lcluster) {
        Vector v = est.eigenvectors().col(idx).real();
        if (v.norm() < 1e-12) v = est.eigenvectors().col(idx).imag();
        Vector even = 0.5 * (v + antipode_apply(v));
        Vector odd = 0.5 * (v - antipode_apply(v));
        if (even.norm() > nu_even.norm()) nu_even = even;
        if (odd.norm() > nu_odd.norm()) nu_odd = odd;
    }
    if (nu_even.sum() < 0) nu_even = -nu_even;
    nu_even = nu_even.cwiseMax(0.0);
    if (nu_even.sum() <= 0) throw DegenerateSpectrumError("stationary vector vanished");
    nu_even /= nu_even.sum();
    sd.nu_bar = nu_even;
    if (sd.r == 1) {
        sd.nu.push_back(nu_even);
    } else {
        for (int i = 0; i < sd.r; ++i) {
            Vector nui = Vector::Zero(n);
            for (int k = 0; k < n; ++k)
                if (sd.p[i].values(k).real() > 0.5) nui(k) = nu_even(k);
            if (nui.sum() <= 0)
                throw DegenerateSpectrumError("ergodic measure support empty");
            nui /= nui.sum();
            sd.nu.push_back(nui);
        }
    }

    // drift of the discrete family: reduced eigenvalue derivative at z = 0,
    // lambda'(0) = eig((W^T V)^{-1} W^T P'(0) V), sigma = -mean Re lambda'
    MatrixC dpc = build_operator_derivative(*op.rho, Complex(0, 0), grid);
    Matrix dp = dpc.real();
    Matrix V(n, sd.r), W(n, sd.r);
    for (int i = 0; i < sd.r; ++i) {
        for (int k = 0; k < n; ++k) V(k, i) = sd.p[i].values(k).real();
        W.col(i) = sd.nu[i];
    }
    Matrix red = (W.transpose() * V).inverse() * (W.transpose() * dp * V);
    Eigen::EigenSolver<Matrix> er(red);
    double s = 0;
    for (int i = 0; i < sd.r; ++i) s += er.eigenvalues()(i).real();
    sd.sigma_discrete = -s / sd.r;
    return sd;
}

// N_0 f = sum_i p_i <nu_i, f>
inline GridFunction n0_apply(const SpectralData& sd, const GridFunction& f) {
    GridFunction out;
    out.gamma = f.gamma;
    out.values = VectorC::Zero(f.values.size());
    for (int i = 0; i < sd.r; ++i) {
        Complex mass = 0;
        for (int k = 0; k < f.values.size(); ++k) mass += sd.nu[i](k) * f.values(k);
        for (int k = 0; k < f.values.size(); ++k)
            out.values(k) += sd.p[i].values(k) * mass;
    }
    return out;
}

struct ResolventSolve {
    GridFunction solution;
    double residual;
};

inline ResolventSolve resolvent_apply(const DiscretizedOperator& op, const GridFunction& f) {
    const int n = static_cast<int>(op.mat.rows());
    MatrixC a = MatrixC::Identity(n, n) - op.mat;
    Eigen::PartialPivLU<MatrixC> lu(a);
    VectorC g = lu.solve(f.values);
    double resid = (a * g - f.values).cwiseAbs().maxCoeff();
    double fscale = std::max(1e-300, sup_norm(f));
    if (!g.allFinite() || resid > 1e-8 * fscale) {
        double smin = Eigen::JacobiSVD<MatrixC>(a).singularValues().minCoeff();
        throw SingularError("resolvent solve failed, smallest singular value " +
                            std::to_string(smin));
    }
    ResolventSolve out{{g, f.gamma}, resid};
    return out;
}

struct ResolventScanPoint {
    double t;
    double norm_estimate; // operator norm estimate in the discretized Holder norm
    double residual;
    bool singular;
    double smallest_sv;
};

struct ResolventScan {
    std::vector<ResolventScanPoint> points;
    double c_hat = 0, l_hat = 0; // fit norm ~ C |t|^L over non-singular points
};

inline ResolventScan resolvent_scan(const GeneratorMeasure& rho,
                                    std::shared_ptr<const StateGrid> grid, double gamma,
                                    const std::vector<double>& t_values, int probes = 20,
                                    std::uint64_t seed = 1,
                                    double singular_threshold = 1e-6) {
    ResolventScan scan;
    const int n = grid->size();
    for (double t : t_values) {
        if (std::abs(t) < 2) throw PreconditionError("scan needs |t| >= 2");
        auto op = build_operator(rho, Complex(0, t), grid);
        MatrixC a = MatrixC::Identity(n, n) - op.mat;
        double smin = Eigen::JacobiSVD<MatrixC>(a).singularValues().minCoeff();
        ResolventScanPoint pt{t, 0, 0, false, smin};
        if (smin < singular_threshold) {
            pt.singular = true;
            scan.points.push_back(pt);
            continue;
        }
        Eigen::PartialPivLU<MatrixC> lu(a);
        Rng rng(seed ^ std::hash<double>{}(t), 0);
        GridFunction best;
        best.gamma = gamma;
        for (int k = 0; k < probes; ++k) {
            // smooth bump-mixture probes defined independently of the grid,
            // so refinement scans see the same Holder functions
            GridFunction f;
            f.gamma = gamma;
            f.values = VectorC::Zero(n);
            const int d = grid->dim();
            for (int b = 0; b < 6; ++b) {
                Vector y(d);
                for (int i = 0; i < d; ++i) y(i) = rng.normal();
                y.normalize();
                Complex c(rng.normal(), rng.normal());
                int af = grid->a_size() > 1
                             ? static_cast<int>(rng.next_u64() % grid->a_size())
                             : 0;
                for (int vi = 0; vi < grid->n_sphere(); ++vi) {
                    double dd = (grid->sphere_point(vi) - y).squaredNorm();
                    f.values(grid->index(vi, af)) += c * std::exp(-dd / 0.18);
                }
            }
            double nf = holder_norm(f, *grid);
            f.values /= nf;
            VectorC g = lu.solve(f.values);
            pt.residual = std::max(pt.residual,
                                   (a * g - f.values).cwiseAbs().maxCoeff());
            GridFunction gf{g, gamma};
            double est = holder_norm(gf, *grid);
            if (est > pt.norm_estimate) {
                pt.norm_estimate = est;
                best = gf;
            }
        }
        // two power-iteration refinements on the best probe
        for (int it = 0; it < 2; ++it) {
            best.values /= holder_norm(best, *grid);
            VectorC g = lu.solve(best.values);
            best.values = g;
            pt.norm_estimate = std::max(pt.norm_estimate, holder_norm(best, *grid));
        }
        scan.points.push_back(pt);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (auto& pt : scan.points) {
        if (pt.singular || pt.norm_estimate <= 0) continue;
        double lx = std::log(std::abs(pt.t)), ly = std::log(pt.norm_estimate);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++m;
    }
    if (m >= 2) {
        scan.l_hat = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        scan.c_hat = std::exp((sy - scan.l_hat * sx) / m);
    }
    return scan;
}

// U(z) f = (I - P(z))^{-1} f - N_0 f / (sigma z) on the domain
// D_{eta,C,L} = { -1/(C (1+|Im z|)^{L+1}) < Re z < eta }, z != 0.
struct UDomain {
    double eta = 0.2;
    double c = 50.0;
    double l = 2.0;
    bool contains(Complex z) const {
        double lo = -1.0 / (c * std::pow(1.0 + std::abs(z.imag()), l + 1));
        return z.real() > lo && z.real() < eta;
    }
};

inline GridFunction u_apply(const GeneratorMeasure& rho,
                            std::shared_ptr<const StateGrid> grid, Complex z,
                            const SpectralData& sd, double sigma_rho,
                            const GridFunction& f, const UDomain& dom = UDomain{}) {
    if (std::abs(z) < 1e-300) throw OutOfDomainError("U(z) has the pole removed at 0 only as a limit; use u0_apply");
    if (!dom.contains(z)) throw OutOfDomainError("z outside D_{eta,C,L}");
    auto op = build_operator(rho, z, grid);
    auto solve = resolvent_apply(op, f);
    GridFunction n0f = n0_apply(sd, f);
    GridFunction out;
    out.gamma = f.gamma;
    out.values = solve.solution.values - n0f.values / (sigma_rho * z);
    return out;
}

// U(0) as the symmetric small-|t| limit (U(it) + U(-it))/2 = U(0) + O(t^2)
inline GridFunction u0_apply(const GeneratorMeasure& rho,
                             std::shared_ptr<const StateGrid> grid,
                             const SpectralData& sd, double sigma_rho,
                             const GridFunction& f, double t_small = 1e-4) {
    auto up = u_apply(rho, grid, Complex(0, t_small), sd, sigma_rho, f);
    auto um = u_apply(rho, grid, Complex(0, -t_small), sd, sigma_rho, f);
    GridFunction out;
    out.gamma = f.gamma;
    out.values = 0.5 * (up.values + um.values);
    return out;
}

// even/odd parts under the antipodal involution; f = even + odd exactly
inline std::pair<GridFunction, GridFunction> isotypic_split(const GridFunction& f,
                                                            const StateGrid& grid) {
    GridFunction even, odd;
    even.gamma = odd.gamma = f.gamma;
    even.values.resize(f.values.size());
    odd.values.resize(f.values.size());
    for (int i = 0; i < f.values.size(); ++i) {
        Complex fx = f.values(i), fax = f.values(grid.antipode_index(i));
        even.values(i) = 0.5 * (fx + fax);
        odd.values(i) = 0.5 * (fx - fax);
    }
    return {std::move(even), std::move(odd)};
}

struct DolgopyatProbeResult {
    bool found = false;
    int x0 = -1;
    int n = -1;
    double value = 1.0;            // |P_e(it)^n f(x0)| at the witness
    std::vector<double> defects;   // near-coboundary defect per regular point
};

// Searches n in [0, beta ln|t|] and regular x0 for
// |P_e(it)^n f(x0)| <= 1 - |t|^{-alpha_1}; on failure reports the defect
// int |e^{-it sigma(g,x)} f(gx) - f(x)|^2 drho_e^{*n(beta,t)} at every
// regular point (exact word enumeration when feasible, sampled otherwise).
inline DolgopyatProbeResult dolgopyat_probe(const GeneratorMeasure& rho_lazy,
                                            const DiscretizedOperator& op_it,
                                            const GridFunction& f, double t,
                                            double alpha1, double beta,
                                            const std::vector<int>& regular_points,
                                            std::uint64_t seed = 7) {
    if (regular_points.empty()) throw EmptyRegularSetError("no regular grid points");
    const int n_max = static_cast<int>(std::floor(beta * std::log(std::abs(t))));
    const double bar = 1.0 - std::pow(std::abs(t), -alpha1);
    DolgopyatProbeResult out;
    GridFunction cur = f;
    for (int n = 0; n <= n_max; ++n) {
        for (int x0 : regular_points) {
            double v = std::abs(cur.values(x0));
            if (v <= bar) {
                out.found = true;
                out.x0 = x0;
                out.n = n;
                out.value = v;
                return out;
            }
        }
        if (n < n_max) cur = apply(op_it, cur);
    }
    // defect reporting
    const auto& grid = *op_it.grid;
    const std::size_t k = rho_lazy.atoms().size();
    double words_f = std::pow(static_cast<double>(k), n_max);
    bool exact = words_f <= 20000.0;
    long n_words = exact ? static_cast<long>(words_f) : 20000;
    for (int x0 : regular_points) {
        const Vector& x = grid.sphere_point(grid.vertex_of(x0));
        int a0 = grid.fiber_of(x0);
        Complex fx = f.values(x0);
        double defect = 0;
        double wtotal = 0;
        Rng rng(seed, static_cast<std::uint64_t>(x0));
        for (long w = 0; w < n_words; ++w) {
            Matrix prod = Matrix::Identity(grid.dim(), grid.dim());
            double weight = 1.0;
            int a = a0;
            if (exact) {
                long idx = w;
                for (int step = 0; step < n_max; ++step) {
                    std::size_t j = idx % k;
                    idx /= k;
                    prod = rho_lazy.atoms()[j].g.mat() * prod;
                    weight *= rho_lazy.atoms()[j].weight;
                    a = rho_lazy.apply_a(j, a);
                }
            } else {
                for (int step = 0; step < n_max; ++step) {
                    std::size_t j = rho_lazy.pick(rng);
                    prod = rho_lazy.atoms()[j].g.mat() * prod;
                    a = rho_lazy.apply_a(j, a);
                }
                weight = 1.0 / n_words;
            }
            Vector gx = prod * x;
            double s = std::log(gx.norm());
            Complex fgx = 0;
            for (auto& [vi, ww] : grid.interpolate(gx.normalized()))
                fgx += ww * f.values(grid.index(vi, a));
            Complex diff = std::exp(Complex(0, -t * s)) * fgx - fx;
            defect += weight * std::norm(diff);
            wtotal += weight;
        }
        out.defects.push_back(defect / wtotal);
    }
    return out;
}

struct DriftCheckPoint {
    double s;
    int n;
    double sup; // sup_x P(s)^n 1 (x)
};

struct DriftCheck {
    std::vector<DriftCheckPoint> table;
    double t_hat; // fitted decay rate: sup ~ C e^{-t s n}
};

inline DriftCheck drift_check(const GeneratorMeasure& rho,
                              std::shared_ptr<const StateGrid> grid,
                              const std::vector<double>& s_values,
                              const std::vector<int>& n_values) {
    DriftCheck out{};
    std::vector<double> rates;
    for (double s : s_values) {
        if (s < 0 || s > transfer_config().eta)
            throw PreconditionError("drift s must lie in [0, eta]");
        auto op = build_operator(rho, Complex(s, 0), grid);
        VectorC v = VectorC::Constant(grid->size(), 1.0);
        int n_max = *std::max_element(n_values.begin(), n_values.end());
        std::map<int, double> sup_at;
        for (int n = 1; n <= n_max; ++n) {
            v = op.mat * v;
            if (std::find(n_values.begin(), n_values.end(), n) != n_values.end())
                sup_at[n] = v.cwiseAbs().maxCoeff();
        }
        for (auto& [n, sup] : sup_at) out.table.push_back({s, n, sup});
        if (s > 0 && sup_at.size() >= 2) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            int m = 0;
            for (auto& [n, sup] : sup_at) {
                sx += n; sy += std::log(sup); sxx += double(n) * n; sxy += n * std::log(sup);
                ++m;
            }
            double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
            rates.push_back(-slope / s);
        }
    }
    out.t_hat = rates.empty()
                    ? 0.0
                    : std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
    return out;
}

struct CocycleBounds {
    double m;         // the exponent M in N(g)^M
    double sigma_m;   // [sigma]_M = sup sigma_Lip(g) / N(g)^M
    double sigma_inf; // [sigma]_inf = sup e^{sigma_sup(g)} / N(g)^M
};

inline CocycleBounds cocycle_bounds(const GeneratorMeasure& rho, const StateGrid& grid,
                                    double m_exponent = -1) {
    const int d = rho.dim();
    CocycleBounds out{};
    out.m = m_exponent > 0 ? m_exponent : 2.0 * d;
    for (const auto& at : rho.atoms()) {
        double k1 = at.g.norm();
        double k1i = at.g.inverse().norm();
        double sig_sup = std::max(std::log(k1), std::log(k1i));
        double lip = 0;
        for (int i = 0; i < grid.n_sphere(); ++i)
            for (int j = i + 1; j < grid.n_sphere(); ++j) {
                double dd = grid.distance(i, j, true);
                if (dd < 1e-12) continue;
                double si = std::log((at.g.mat() * grid.sphere_point(i)).norm());
                double sj = std::log((at.g.mat() * grid.sphere_point(j)).norm());
                lip = std::max(lip, std::abs(si - sj) / dd);
            }
        double nm = std::pow(k1, out.m);
        out.sigma_m = std::max(out.sigma_m, lip / nm);
        out.sigma_inf = std::max(out.sigma_inf, std::exp(sig_sup) / nm);
    }
    return out;
}

} // namespace renlab

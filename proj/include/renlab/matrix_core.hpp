#pragma once

// Matrix primitives for SL_d(R): membership, Cartan (singular value) data,
// projective distance d(X,Y) = ||x^y|| / (||x|| ||y||), the dual pairing
// delta(X,Y) = |phi(x)| / (||phi|| ||x||), wedge-power norms and the norm
// cocycle sigma(g,X) = ln(||gx|| / ||x||).

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "renlab/errors.hpp"

namespace renlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct MatrixCoreConfig {
    double det_tol = 1e-8;        // relative, after renormalization
    double det_reject = 1e-4;     // inputs farther from det 1 are rejected
    double fp_tol = 1e-9;
    double degenerate_tol = 1e-12; // kappa_1 ~ kappa_2 detection
};

inline const MatrixCoreConfig& core_config() {
    static MatrixCoreConfig cfg;
    return cfg;
}

// d x d real matrix with det = 1 (renormalized by det^{1/d} on construction
// when the drift is small, rejected otherwise).
class GroupElement {
public:
    explicit GroupElement(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols() || m_.rows() < 2)
            throw DimensionError("GroupElement needs a square matrix, d >= 2");
        const double d = static_cast<double>(m_.rows());
        const double det = m_.determinant();
        // det evaluation carries cancellation error ~ ||m||^d eps; beyond that
        // scale the measurement is noise and long det-1 products are kept as-is
        const double noise = std::pow(std::max(1.0, m_.norm()), d) * 1e-14;
        if (noise >= 0.25) return;
        if (!(det > 0.0) ||
            std::abs(det - 1.0) > std::max(core_config().det_reject, 100.0 * noise))
            throw PreconditionError("determinant " + std::to_string(det) +
                                    " too far from 1");
        if (std::abs(det - 1.0) > core_config().det_tol &&
            std::abs(det - 1.0) > 10.0 * noise)
            m_ /= std::pow(det, 1.0 / d);
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& mat() const { return m_; }

    GroupElement operator*(const GroupElement& o) const {
        if (dim() != o.dim()) throw DimensionError("dimension mismatch in product");
        return GroupElement(m_ * o.m_);
    }

    GroupElement inverse() const { return GroupElement(m_.inverse()); }
    GroupElement transpose() const { return GroupElement(m_.transpose()); }

    GroupElement pow(int p) const {
        Matrix acc = Matrix::Identity(dim(), dim());
        for (int i = 0; i < p; ++i) acc = acc * m_;
        return GroupElement(acc);
    }

    // operator norm ||g|| = kappa_1(g)
    double norm() const {
        return Eigen::JacobiSVD<Matrix>(m_).singularValues()(0);
    }

    static GroupElement identity(int d) {
        return GroupElement(Matrix::Identity(d, d));
    }

private:
    Matrix m_;
};

// Canonical sign: flip so the coordinate of largest absolute value is
// positive. Stable under perturbation away from ties.
inline Vector canonical_rep(Vector v) {
    double nrm = v.norm();
    if (!(nrm > 0)) throw PreconditionError("zero vector has no direction");
    v /= nrm;
    int imax = 0;
    for (int i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    if (v(imax) < 0) v = -v;
    return v;
}

class ProjectivePoint {
public:
    explicit ProjectivePoint(const Vector& v) : rep_(canonical_rep(v)) {}
    const Vector& rep() const { return rep_; }
    int dim() const { return static_cast<int>(rep_.size()); }

private:
    Vector rep_;
};

class DualProjectivePoint {
public:
    explicit DualProjectivePoint(const Vector& v) : rep_(canonical_rep(v)) {}
    const Vector& rep() const { return rep_; }
    int dim() const { return static_cast<int>(rep_.size()); }

private:
    Vector rep_;
};

// ||x ^ y|| for unit vectors, computed as ||x - <x,y>y|| (exact identity,
// no cancellation near x = y).
inline double wedge_norm_unit(const Vector& x, const Vector& y) {
    const double c = x.dot(y);
    return (x - c * y).norm();
}

inline double proj_distance(const ProjectivePoint& x, const ProjectivePoint& y) {
    if (x.dim() != y.dim()) throw DimensionError("proj_distance dims differ");
    return wedge_norm_unit(x.rep(), y.rep());
}

inline double dual_pairing(const ProjectivePoint& x, const DualProjectivePoint& y) {
    if (x.dim() != y.dim()) throw DimensionError("dual_pairing dims differ");
    return std::abs(y.rep().dot(x.rep()));
}

inline double sigma(const GroupElement& g, const ProjectivePoint& x) {
    if (g.dim() != x.dim()) throw DimensionError("sigma dims differ");
    return std::log((g.mat() * x.rep()).norm());
}

inline ProjectivePoint act(const GroupElement& g, const ProjectivePoint& x) {
    return ProjectivePoint(g.mat() * x.rep());
}

inline DualProjectivePoint act_dual(const GroupElement& g, const DualProjectivePoint& y) {
    // g . (R phi) = R (phi o g^{-1}) = R (g^{-T} phi)
    return DualProjectivePoint(g.mat().inverse().transpose() * y.rep());
}

// kappa_i(g), the axis points X_g^M = k_g e_1, Y_g^m = t(l_g) e_1^*, and the
// gap kappa_{1,2} = kappa_2 / kappa_1.
struct CartanDecomposition {
    Vector kappa;          // singular values, nonincreasing
    Vector x_M;            // top left singular direction (unit)
    Vector y_m;            // top right singular direction (unit covector)
    double kappa_gap = 1;  // kappa_2 / kappa_1
    bool degenerate = false;

    ProjectivePoint x_M_point() const { return ProjectivePoint(x_M); }
    DualProjectivePoint y_m_point() const { return DualProjectivePoint(y_m); }
};

inline CartanDecomposition cartan_decompose(const GroupElement& g) {
    Eigen::JacobiSVD<Matrix> svd(g.mat(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success)
        throw DecompositionError("SVD failed to converge");
    CartanDecomposition c;
    c.kappa = svd.singularValues();
    c.x_M = canonical_rep(svd.matrixU().col(0));
    c.y_m = canonical_rep(svd.matrixV().col(0));
    c.kappa_gap = c.kappa(1) / c.kappa(0);
    c.degenerate = (c.kappa(0) - c.kappa(1)) <= core_config().degenerate_tol * c.kappa(0);
    return c;
}

namespace detail {

// sorted i-element subsets of {0..d-1}, lexicographic
inline std::vector<std::vector<int>> index_subsets(int d, int i) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(i);
    std::function<void(int, int)> rec = [&](int start, int k) {
        if (k == i) { out.push_back(cur); return; }
        for (int j = start; j <= d - (i - k); ++j) {
            cur[k] = j;
            rec(j + 1, k + 1);
        }
    };
    if (i >= 0) rec(0, 0);
    return out;
}

// i-th compound matrix: entries are i x i minors in the standard wedge basis
inline Matrix compound(const Matrix& m, int i) {
    const int d = static_cast<int>(m.rows());
    auto subs = index_subsets(d, i);
    const int n = static_cast<int>(subs.size());
    Matrix c(n, n);
    Matrix minor_(i, i);
    for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) {
            for (int a = 0; a < i; ++a)
                for (int b = 0; b < i; ++b) minor_(a, b) = m(subs[r][a], subs[s][b]);
            c(r, s) = minor_.determinant();
        }
    return c;
}

} // namespace detail

// ||wedge^i g||; compound matrices for d <= 4, singular-value products above.
inline double wedge_norm(const GroupElement& g, int i) {
    const int d = g.dim();
    if (i < 1 || i > d) throw DimensionError("wedge_norm: i out of range");
    if (i == d) return std::abs(g.mat().determinant());
    if (d <= 4) {
        Matrix c = detail::compound(g.mat(), i);
        return Eigen::JacobiSVD<Matrix>(c).singularValues()(0);
    }
    Vector kappa = cartan_decompose(g).kappa;
    double out = 1.0;
    for (int k = 0; k < i; ++k) out *= kappa(k);
    return out;
}

} // namespace renlab

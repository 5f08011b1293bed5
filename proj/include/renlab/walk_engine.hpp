#pragma once

// Seeded Monte Carlo over iid matrix products: Lyapunov exponents, empirical
// stationary measures on the projective space, the lazy walk, regularity and
// genericity probes, and the diophantine spectral-radius scan.
//
// Determinism contract: sample index i draws from an Rng seeded by (seed, i);
// reductions run over fixed-size chunks merged in chunk order, so results are
// independent of the worker count.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "renlab/matrix_core.hpp"
#include "renlab/proximality.hpp"
#include "renlab/rng.hpp"

namespace renlab {

struct Atom {
    GroupElement g;
    double weight;
    std::vector<int> perm; // action on A; empty when |A| = 1
};

class GeneratorMeasure {
public:
    GeneratorMeasure(std::vector<Atom> atoms, int a_size = 1,
                     bool claims_strongly_irreducible = true, bool claims_proximal = true)
        : atoms_(std::move(atoms)), a_size_(a_size),
          claims_si_(claims_strongly_irreducible), claims_prox_(claims_proximal) {
        if (atoms_.empty()) throw ConfigError("measure needs at least one atom");
        double total = 0;
        for (const auto& a : atoms_) {
            if (!(a.weight > 0)) throw ConfigError("atom weights must be positive");
            total += a.weight;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("weights sum to " + std::to_string(total) + ", not 1");
        cum_.resize(atoms_.size());
        double run = 0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            run += atoms_[i].weight;
            cum_[i] = run;
        }
        cum_.back() = 1.0;
        validate_action();
    }

    int dim() const { return atoms_[0].g.dim(); }
    int a_size() const { return a_size_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    bool claims_strongly_irreducible() const { return claims_si_; }
    bool claims_proximal() const { return claims_prox_; }

    std::size_t pick(Rng& rng) const { return rng.pick(cum_); }

    int apply_a(std::size_t atom, int a) const {
        return a_size_ == 1 ? 0 : atoms_[atom].perm[a];
    }

    // transition matrix of the chain on A
    Matrix a_transition() const {
        Matrix p = Matrix::Zero(a_size_, a_size_);
        for (const auto& at : atoms_)
            for (int a = 0; a < a_size_; ++a)
                p(a, a_size_ == 1 ? 0 : at.perm[a]) += at.weight;
        return p;
    }

private:
    void validate_action() {
        if (a_size_ < 1) throw ConfigError("|A| must be >= 1");
        if (a_size_ == 1) return;
        for (const auto& at : atoms_) {
            if (static_cast<int>(at.perm.size()) != a_size_)
                throw ConfigError("permutation size does not match |A|");
            std::vector<bool> seen(a_size_, false);
            for (int v : at.perm) {
                if (v < 0 || v >= a_size_ || seen[v])
                    throw ConfigError("atom action is not a permutation of A");
                seen[v] = true;
            }
        }
        // irreducible + aperiodic <=> P^m positive for m = (|A|-1)^2 + 1
        Matrix p = a_transition();
        Matrix q = Matrix::Identity(a_size_, a_size_);
        int m = (a_size_ - 1) * (a_size_ - 1) + 1;
        for (int i = 0; i < m; ++i) q = q * p;
        if (q.minCoeff() <= 0)
            throw ConfigError("walk on A is not irreducible and aperiodic");
    }

    std::vector<Atom> atoms_;
    int a_size_;
    bool claims_si_, claims_prox_;
    std::vector<double> cum_;
};

// Built-in named measures used across experiments and the acceptance runs.
inline GeneratorMeasure builtin_measure(const std::string& name) {
    auto m2 = [](double a, double b, double c, double d) {
        Matrix m(2, 2);
        m << a, b, c, d;
        return m;
    };
    if (name == "cone2")
        return GeneratorMeasure({{GroupElement(m2(2, 1, 1, 1)), 0.5, {}},
                                 {GroupElement(m2(1, 1, 1, 2)), 0.5, {}}});
    if (name == "hyperbolic-rotate")
        return GeneratorMeasure({{GroupElement(m2(2, 1, 1, 1)), 0.5, {}},
                                 {GroupElement(m2(-1, -1, -1, -2)), 0.5, {}}});
    if (name == "diag-lattice")
        return GeneratorMeasure({{GroupElement(m2(2, 0, 0, 0.5)), 1.0, {}}},
                                1, false, true);
    if (name == "cone2-flip") // cone2 acting on A = {0,1}: second atom swaps
        return GeneratorMeasure({{GroupElement(m2(2, 1, 1, 1)), 0.5, {0, 1}},
                                 {GroupElement(m2(1, 1, 1, 2)), 0.5, {1, 0}}},
                                2);
    throw ConfigError("unknown built-in measure '" + name + "'");
}

// 1/2 delta_e + 1/2 rho; identity atoms are merged
inline GeneratorMeasure lazy_measure(const GeneratorMeasure& rho) {
    const int d = rho.dim();
    std::vector<Atom> atoms;
    std::vector<int> id_perm(rho.a_size());
    std::iota(id_perm.begin(), id_perm.end(), 0);
    double id_weight = 0.5;
    for (const auto& at : rho.atoms()) {
        bool is_id = (at.g.mat() - Matrix::Identity(d, d)).norm() <= 1e-12 &&
                     (rho.a_size() == 1 || at.perm == id_perm);
        if (is_id)
            id_weight += 0.5 * at.weight;
        else
            atoms.push_back({at.g, 0.5 * at.weight, at.perm});
    }
    std::vector<Atom> out;
    out.push_back({GroupElement::identity(d), id_weight,
                   rho.a_size() == 1 ? std::vector<int>{} : id_perm});
    for (auto& a : atoms) out.push_back(std::move(a));
    return GeneratorMeasure(std::move(out), rho.a_size(),
                            rho.claims_strongly_irreducible(), rho.claims_proximal());
}

struct WalkSample {
    GroupElement product;      // g_n ... g_1
    double log_norm;           // ln ||product||
    ProjectivePoint proj_point; // direction of product . x0
    int a_point;
    int length;
};

inline std::vector<WalkSample> sample_products(const GeneratorMeasure& rho, int n,
                                               int count, std::uint64_t seed) {
    if (n < 1 || count < 1) throw PreconditionError("need n >= 1 and count >= 1");
    if (n > 200) throw PreconditionError("product length capped at 200 (norm overflow)");
    const int d = rho.dim();
    std::vector<WalkSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(seed, static_cast<std::uint64_t>(i));
        Matrix prod = Matrix::Identity(d, d);
        int a = 0;
        for (int k = 0; k < n; ++k) {
            std::size_t j = rho.pick(rng);
            prod = rho.atoms()[j].g.mat() * prod;
            a = rho.apply_a(j, a);
        }
        GroupElement g(prod);
        auto cart = cartan_decompose(g);
        out.push_back({g, std::log(cart.kappa(0)),
                       ProjectivePoint(prod.col(0)), a, n});
    }
    return out;
}

struct LyapunovEstimate {
    double lambda_rho;   // vector-norm growth estimator
    double std_error;
    int n_steps;
    int n_walks;
    double lambda_birkhoff; // independent estimator: Birkhoff sum of sigma
    double std_error_birkhoff;
};

inline LyapunovEstimate lyapunov_estimate(const GeneratorMeasure& rho, int n, int n_walks,
                                          std::uint64_t seed, int workers = 1) {
    const int d = rho.dim();
    struct Acc {
        double sum = 0, sumsq = 0;
        long cnt = 0;
    };
    Acc acc;
    parallel_chunks<Acc>(
        n_walks, workers,
        [&](std::size_t lo, std::size_t hi, Acc& a) {
            for (std::size_t i = lo; i < hi; ++i) {
                Rng rng(seed, i);
                Vector v = Vector::Unit(d, 0);
                // 64-step burn-in kills the O(1/n) transient of the start point
                for (int k = 0; k < 64; ++k)
                    v = (rho.atoms()[rho.pick(rng)].g.mat() * v).normalized();
                double logsum = 0;
                for (int k = 0; k < n; ++k) {
                    v = rho.atoms()[rho.pick(rng)].g.mat() * v;
                    double nv = v.norm();
                    logsum += std::log(nv);
                    v /= nv;
                }
                double val = logsum / n;
                a.sum += val;
                a.sumsq += val * val;
                a.cnt += 1;
            }
        },
        [](Acc& t, const Acc& p) {
            t.sum += p.sum;
            t.sumsq += p.sumsq;
            t.cnt += p.cnt;
        },
        acc);
    LyapunovEstimate est{};
    est.n_steps = n;
    est.n_walks = n_walks;
    est.lambda_rho = acc.sum / acc.cnt;
    double var = std::max(0.0, acc.sumsq / acc.cnt - est.lambda_rho * est.lambda_rho);
    est.std_error = std::sqrt(var / acc.cnt);

    // second, independent estimator: time average of sigma(g, X_k) along one
    // long trajectory of the projective chain, batch-means error bars
    long total = std::min<long>(static_cast<long>(n) * n_walks, 2'000'000L);
    const int n_batches = 32;
    long per_batch = std::max<long>(1, total / n_batches);
    Rng rng(seed ^ 0x5bd1e995u, 0xb1a2u);
    Vector v = Vector::Unit(d, 0);
    std::vector<double> batch_means;
    for (int b = 0; b < n_batches; ++b) {
        double s = 0;
        for (long k = 0; k < per_batch; ++k) {
            v = rho.atoms()[rho.pick(rng)].g.mat() * v;
            double nv = v.norm();
            s += std::log(nv);
            v /= nv;
        }
        batch_means.push_back(s / per_batch);
    }
    double mb = std::accumulate(batch_means.begin(), batch_means.end(), 0.0) / n_batches;
    double vb = 0;
    for (double x : batch_means) vb += (x - mb) * (x - mb);
    vb /= (n_batches - 1);
    est.lambda_birkhoff = mb;
    est.std_error_birkhoff = std::sqrt(vb / n_batches);
    return est;
}

// Lyapunov spectrum by frame evolution with QR reorthonormalization.
inline std::vector<double> lyapunov_spectrum(const GeneratorMeasure& rho, long steps,
                                             std::uint64_t seed) {
    const int d = rho.dim();
    Matrix frame = Matrix::Identity(d, d);
    Vector logsum = Vector::Zero(d);
    Rng rng(seed, 0x9e3779b9u);
    for (long k = 0; k < steps; ++k) {
        frame = rho.atoms()[rho.pick(rng)].g.mat() * frame;
        Eigen::HouseholderQR<Matrix> qr(frame);
        Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
        frame = qr.householderQ();
        for (int i = 0; i < d; ++i) {
            double diag = std::abs(r(i, i));
            logsum(i) += std::log(diag);
            if (r(i, i) < 0) frame.col(i) *= -1;
        }
    }
    std::vector<double> out(d);
    for (int i = 0; i < d; ++i) out[i] = logsum(i) / steps;
    return out;
}

// Occupation measure of the projective chain, binned on an angular grid
// (d = 2) or a latitude/longitude grid of comparable angular resolution
// (d = 3), with the A-fiber kept alongside.
class EmpiricalMeasure {
public:
    EmpiricalMeasure(int d, int a_size, double resolution)
        : d_(d), a_size_(a_size), res_(resolution) {
        if (!(resolution > 0 && resolution < 1))
            throw ConfigError("resolution must be in (0,1)");
        n_theta_ = std::max(1, static_cast<int>(std::ceil(3.14159265358979 / res_)));
        n_phi_ = std::max(1, static_cast<int>(std::ceil(6.28318530717959 / res_)));
    }

    int dim() const { return d_; }
    int a_size() const { return a_size_; }
    double resolution() const { return res_; }
    // conservative covering radius of one cell in the projective metric
    double cell_radius() const { return d_ == 2 ? std::sin(res_ / 2) : res_; }
    long sample_count() const { return count_; }
    const std::map<long, double>& bins() const { return bins_; }

    long cell_of(const ProjectivePoint& x) const {
        const Vector& v = x.rep();
        if (d_ == 2) {
            double ang = std::atan2(v(1), v(0)); // canonical rep: in (-pi/2, pi/2]
            if (ang < 0) ang += 3.14159265358979323846;
            int c = std::min(n_theta_ - 1, static_cast<int>(ang / 3.14159265358979323846 *
                                                            n_theta_));
            return c;
        }
        double theta = std::acos(std::clamp(v(d_ - 1), -1.0, 1.0));
        double phi = std::atan2(v(1), v(0));
        if (phi < 0) phi += 6.28318530717958647692;
        int it = std::min(n_theta_ - 1, static_cast<int>(theta / 3.14159265358979323846 *
                                                         n_theta_));
        int ip = std::min(n_phi_ - 1, static_cast<int>(phi / 6.28318530717958647692 * n_phi_));
        return static_cast<long>(it) * n_phi_ + ip;
    }

    ProjectivePoint cell_center(long cell) const {
        if (d_ == 2) {
            double ang = (cell + 0.5) * 3.14159265358979323846 / n_theta_;
            Vector v(2);
            v << std::cos(ang), std::sin(ang);
            return ProjectivePoint(v);
        }
        long it = cell / n_phi_, ip = cell % n_phi_;
        double theta = (it + 0.5) * 3.14159265358979323846 / n_theta_;
        double phi = (ip + 0.5) * 6.28318530717958647692 / n_phi_;
        Vector v(3);
        v << std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
            std::cos(theta);
        return ProjectivePoint(v);
    }

    void add(const ProjectivePoint& x, int a, double w = 1.0) {
        bins_[cell_of(x) * a_size_ + a] += w;
        weight_ += w;
        ++count_;
    }

    void normalize() {
        if (weight_ <= 0) return;
        for (auto& kv : bins_) kv.second /= weight_;
        weight_ = 1.0;
    }

    double total_mass() const { return weight_; }

    // mass of the projective ball B(x, r), all A-fibers summed
    double mass_ball(const ProjectivePoint& x, double r) const {
        double m = 0;
        for (const auto& kv : bins_) {
            long cell = kv.first / a_size_;
            if (proj_distance(cell_center(cell), x) <= r) m += kv.second;
        }
        return m;
    }

    // push through one rho-step (cell centers as representatives)
    EmpiricalMeasure pushforward(const GeneratorMeasure& rho) const {
        EmpiricalMeasure out(d_, a_size_, res_);
        for (const auto& kv : bins_) {
            long cell = kv.first / a_size_;
            int a = static_cast<int>(kv.first % a_size_);
            auto c = cell_center(cell);
            for (std::size_t j = 0; j < rho.atoms().size(); ++j) {
                const auto& at = rho.atoms()[j];
                out.bins_[out.cell_of(act(at.g, c)) * a_size_ + rho.apply_a(j, a)] +=
                    kv.second * at.weight;
            }
        }
        out.weight_ = weight_;
        out.count_ = count_;
        return out;
    }

    // total variation against another measure on n_coarse shared angular bins
    double coarse_tv(const EmpiricalMeasure& other, int n_coarse) const {
        std::vector<double> a(n_coarse, 0.0), b(n_coarse, 0.0);
        auto fill = [&](const EmpiricalMeasure& src, std::vector<double>& dst) {
            for (const auto& kv : src.bins_) {
                long cell = kv.first / src.a_size_;
                auto c = src.cell_center(cell);
                double ang = std::atan2(c.rep()(1), c.rep()(0));
                if (ang < 0) ang += 3.14159265358979323846;
                int idx = std::min(n_coarse - 1,
                                   static_cast<int>(ang / 3.14159265358979323846 * n_coarse));
                dst[idx] += kv.second;
            }
        };
        fill(*this, a);
        fill(other, b);
        double tv = 0;
        for (int i = 0; i < n_coarse; ++i) tv += std::abs(a[i] - b[i]);
        return tv / 2;
    }

private:
    int d_, a_size_;
    double res_;
    int n_theta_, n_phi_;
    std::map<long, double> bins_;
    double weight_ = 0;
    long count_ = 0;
};

inline EmpiricalMeasure stationary_measure_estimate(const GeneratorMeasure& rho,
                                                    long burn_in, long samples,
                                                    double resolution,
                                                    std::uint64_t seed) {
    const int d = rho.dim();
    EmpiricalMeasure nu(d, rho.a_size(), resolution);
    Rng rng(seed, 0xfeedu);
    Vector v = Vector::Unit(d, 0);
    // nudge off exact fixed directions
    v(d - 1) = 1e-3;
    v.normalize();
    int a = 0;
    for (long k = 0; k < burn_in; ++k) {
        std::size_t j = rho.pick(rng);
        v = (rho.atoms()[j].g.mat() * v).normalized();
        a = rho.apply_a(j, a);
    }
    for (long k = 0; k < samples; ++k) {
        std::size_t j = rho.pick(rng);
        v = (rho.atoms()[j].g.mat() * v).normalized();
        a = rho.apply_a(j, a);
        nu.add(ProjectivePoint(v), a);
    }
    nu.normalize();
    return nu;
}

struct RegularityProbeResult {
    double pass_fraction;   // at Delta_estimate
    double delta_estimate;  // smallest Delta with pass fraction >= 1 - e^{-t n}
    double proximal_fraction;
};

inline RegularityProbeResult regularity_probe(const GeneratorMeasure& rho,
                                              const EmpiricalMeasure& nu, int n, double M,
                                              int count, std::uint64_t seed,
                                              double t_target = 0.25) {
    const double r = std::exp(-M * n);
    if (nu.cell_radius() >= r)
        throw ResolutionError("grid resolution " + std::to_string(nu.cell_radius()) +
                              " cannot resolve ball radius " + std::to_string(r));
    auto samples = sample_products(rho, n, count, seed);
    std::vector<double> deltas; // per-proximal-sample smallest passing Delta
    int prox = 0;
    for (const auto& s : samples) {
        auto cert = auto_certify(s.product);
        if (!cert) continue;
        ++prox;
        double mass = nu.mass_ball(cert->v_plus, r);
        deltas.push_back(mass <= 0 ? std::numeric_limits<double>::infinity()
                                   : -std::log(mass) / (M * n));
    }
    RegularityProbeResult out{};
    out.proximal_fraction = static_cast<double>(prox) / count;
    if (deltas.empty()) {
        out.pass_fraction = 0;
        out.delta_estimate = std::numeric_limits<double>::infinity();
        return out;
    }
    std::sort(deltas.begin(), deltas.end());
    double target = 1.0 - std::exp(-t_target * n);
    std::size_t idx = std::min(deltas.size() - 1,
                               static_cast<std::size_t>(std::ceil(target * deltas.size())));
    out.delta_estimate = std::max(deltas[idx], 1e-12);
    double pass = 0;
    for (double dv : deltas)
        if (dv <= out.delta_estimate) pass += 1;
    out.pass_fraction = pass / deltas.size();
    return out;
}

struct GenericityStats {
    // order: singular values, delta(x, y_g^m), d(gx, x_g^M), delta(x_g^M, y),
    //        delta(gx, y), delta(x_g^M, y_g^m)
    std::array<double, 6> frequency;
    std::array<double, 6> std_error;
    std::vector<double> lyapunov; // spectrum used for the singular-value event
};

inline GenericityStats genericity_stats(const GeneratorMeasure& rho, int n, double eps,
                                        int count, std::uint64_t seed) {
    const int d = rho.dim();
    auto lyap = lyapunov_spectrum(rho, 200'000, seed ^ 0xabcdu);
    Rng prng(seed, 0x777u);
    ProjectivePoint x = [&] {
        Vector v(d);
        for (int i = 0; i < d; ++i) v(i) = prng.normal();
        return ProjectivePoint(v);
    }();
    DualProjectivePoint y = [&] {
        Vector v(d);
        for (int i = 0; i < d; ++i) v(i) = prng.normal();
        return DualProjectivePoint(v);
    }();
    std::array<long, 6> hits{};
    const double thr = 2.0 * std::exp(-eps * n);
    for (int s = 0; s < count; ++s) {
        Rng rng(seed, static_cast<std::uint64_t>(s));
        Matrix prod = Matrix::Identity(d, d);
        // QR frame alongside the product: log singular values of strongly
        // split products are not recoverable from one SVD (kappa_d below
        // kappa_1 * eps_mach), so flag volume growth stands in beyond 1e12
        Matrix frame = Matrix::Identity(d, d);
        Vector lvol = Vector::Zero(d);
        for (int k = 0; k < n; ++k) {
            const Matrix& gm = rho.atoms()[rho.pick(rng)].g.mat();
            prod = gm * prod;
            frame = gm * frame;
            Eigen::HouseholderQR<Matrix> qr(frame);
            Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
            frame = qr.householderQ();
            for (int i = 0; i < d; ++i) {
                lvol(i) += std::log(std::abs(r(i, i)));
                if (r(i, i) < 0) frame.col(i) *= -1;
            }
        }
        GroupElement g(prod);
        auto c = cartan_decompose(g);
        std::vector<double> logk(d);
        if (c.kappa(0) <= 1e12 * c.kappa(d - 1)) {
            for (int i = 0; i < d; ++i) logk[i] = std::log(c.kappa(i));
        } else {
            logk[0] = std::log(c.kappa(0));
            double run = logk[0];
            for (int i = 1; i < d - 1; ++i) {
                double flag = 0;
                for (int j = 0; j <= i; ++j) flag += lvol(j);
                logk[i] = flag - run; // O(1) alignment defect, inside eps*n
                run += logk[i];
            }
            logk[d - 1] = -run; // det = 1
        }
        bool sv_ok = true;
        for (int i = 0; i < d; ++i)
            if (std::abs(logk[i] / n - lyap[i]) > eps) sv_ok = false;
        hits[0] += sv_ok;
        hits[1] += dual_pairing(x, c.y_m_point()) >= thr;
        hits[2] += proj_distance(act(g, x), c.x_M_point()) <=
                   std::exp(-(lyap[0] - lyap[1] - eps) * n);
        hits[3] += dual_pairing(c.x_M_point(), y) >= thr;
        hits[4] += dual_pairing(act(g, x), y) >= thr;
        hits[5] += dual_pairing(c.x_M_point(), c.y_m_point()) >= thr;
    }
    GenericityStats out{};
    out.lyapunov = lyap;
    for (int e = 0; e < 6; ++e) {
        double f = static_cast<double>(hits[e]) / count;
        out.frequency[e] = f;
        out.std_error[e] = std::sqrt(std::max(f * (1 - f), 1.0 / count) / count);
    }
    return out;
}

struct DiophantinePoint {
    double b;
    double D;            // MC estimate of int |e^{ib lambda_1} - 1|^2
    double prox_fraction;
    int n_words;         // p * n(beta, b)
};

struct DiophantineScan {
    std::vector<DiophantinePoint> points;
    double alpha_hat;    // from the log-log fit of D against |b|
    double min_bD;       // min over points of |b|^4 D(b)  (acceptance normalization)
};

inline DiophantineScan diophantine_scan(const GeneratorMeasure& rho, double beta, int p,
                                        const std::vector<double>& b_values, int count,
                                        std::uint64_t seed, int workers = 1) {
    DiophantineScan scan{};
    for (double b : b_values) {
        if (std::abs(b) < 2) throw PreconditionError("need |b| >= 2");
        int nb = static_cast<int>(std::floor(beta * std::log(std::abs(b))));
        if (nb < 1) throw PreconditionError("n(beta, b) = 0 at b = " + std::to_string(b));
        int len = p * nb;
        struct Acc {
            double sum = 0;
            long prox = 0;
        };
        Acc acc;
        parallel_chunks<Acc>(
            count, workers,
            [&](std::size_t lo, std::size_t hi, Acc& a) {
                const int d = rho.dim();
                for (std::size_t i = lo; i < hi; ++i) {
                    Rng rng(seed ^ std::hash<double>{}(b), i);
                    Matrix prod = Matrix::Identity(d, d);
                    for (int k = 0; k < len; ++k)
                        prod = rho.atoms()[rho.pick(rng)].g.mat() * prod;
                    auto cert = auto_certify(GroupElement(prod));
                    if (!cert) continue; // contributes 0, stays counted
                    a.prox += 1;
                    double phase = b * cert->lambda1;
                    double re = std::cos(phase) - 1.0, im = std::sin(phase);
                    a.sum += re * re + im * im;
                }
            },
            [](Acc& t, const Acc& q) {
                t.sum += q.sum;
                t.prox += q.prox;
            },
            acc);
        scan.points.push_back({b, acc.sum / count,
                               static_cast<double>(acc.prox) / count, len});
    }
    // least squares ln D = ln C - alpha ln |b| over positive points
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& pt : scan.points) {
        if (pt.D <= 0) continue;
        double lx = std::log(std::abs(pt.b)), ly = std::log(pt.D);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++n;
    }
    scan.alpha_hat = n >= 2 ? std::max(0.0, -(n * sxy - sx * sy) / (n * sxx - sx * sx)) : 0.0;
    scan.min_bD = std::numeric_limits<double>::infinity();
    for (const auto& pt : scan.points)
        scan.min_bD = std::min(scan.min_bD, std::pow(std::abs(pt.b), 4.0) * pt.D);
    return scan;
}

struct ConvolutionRegularityResult {
    double t3_estimate;
    double pass_fraction;
    bool exact; // word space enumerated exactly
};

// rho^{*n}-mass of operator-norm balls B(g, e^{-t2 n}) around rho^{*n}-typical g.
inline ConvolutionRegularityResult convolution_regularity_probe(
    const GeneratorMeasure& rho, int n, double t2, int count, std::uint64_t seed,
    double t1_target = 0.05, bool force_sampling = false) {
    const int d = rho.dim();
    const double radius = std::exp(-t2 * n);
    const std::size_t k = rho.atoms().size();
    double words_f = std::pow(static_cast<double>(k), n);
    ConvolutionRegularityResult out{};

    auto op_dist = [&](const Matrix& a, const Matrix& b) {
        return Eigen::JacobiSVD<Matrix>(a - b).singularValues()(0);
    };

    std::vector<std::pair<Matrix, double>> cloud; // (product, weight)
    bool exact = !force_sampling && words_f <= 4096.0;
    out.exact = exact;
    if (exact) {
        long total = static_cast<long>(words_f);
        for (long w = 0; w < total; ++w) {
            Matrix prod = Matrix::Identity(d, d);
            double weight = 1.0;
            long idx = w;
            for (int step = 0; step < n; ++step) {
                std::size_t j = idx % k;
                idx /= k;
                prod = rho.atoms()[j].g.mat() * prod;
                weight *= rho.atoms()[j].weight;
            }
            cloud.emplace_back(prod, weight);
        }
    } else {
        for (int i = 0; i < count; ++i) {
            Rng rng(seed ^ 0x1234u, i);
            Matrix prod = Matrix::Identity(d, d);
            for (int step = 0; step < n; ++step)
                prod = rho.atoms()[rho.pick(rng)].g.mat() * prod;
            cloud.emplace_back(prod, 1.0 / count);
        }
    }

    // centers g ~ rho^{*n}: in the exact case every word, weighted; otherwise
    // the first `count` cloud points
    std::vector<std::pair<double, double>> mass_weighted; // (t3_i, weight)
    for (const auto& [g, wg] : cloud) {
        double mass = 0;
        for (const auto& [h, wh] : cloud)
            if (op_dist(g, h) <= radius) mass += wh;
        double t3i = mass <= 0 ? std::numeric_limits<double>::infinity()
                               : -std::log(mass) / n;
        mass_weighted.emplace_back(t3i, wg);
    }
    std::sort(mass_weighted.begin(), mass_weighted.end());
    double target = 1.0 - std::exp(-t1_target * n);
    double run = 0, t3 = 0;
    for (const auto& [t3i, w] : mass_weighted) {
        run += w;
        t3 = t3i;
        if (run >= target) break;
    }
    out.t3_estimate = std::max(0.0, t3);
    double pass = 0;
    for (const auto& [t3i, w] : mass_weighted)
        if (t3i <= out.t3_estimate + 1e-12) pass += w;
    out.pass_fraction = pass;
    return out;
}

} // namespace renlab

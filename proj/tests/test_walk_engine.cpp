#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "renlab/walk_engine.hpp"
#include "test_support.hpp"

using namespace renlab;
using namespace renlab::testsupport;

namespace {

GeneratorMeasure single(const Matrix& m) {
    return GeneratorMeasure({{GroupElement(m), 1.0, {}}});
}

Matrix rot(double theta) {
    Matrix m(2, 2);
    m << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return m;
}

} // namespace

TEST_CASE("GeneratorMeasure validation") {
    Matrix id = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(GeneratorMeasure({{GroupElement(id), 0.7, {}},
                                      {GroupElement(id), 0.2, {}}}),
                    ConfigError);
    // a single swap atom has period 2 on A = {0,1}: rejected
    CHECK_THROWS_AS(GeneratorMeasure({{GroupElement(id), 1.0, {1, 0}}}, 2), ConfigError);
    CHECK_NOTHROW(builtin_measure("cone2-flip"));
    CHECK_THROWS_AS(builtin_measure("no-such"), ConfigError);
}

TEST_CASE("sample_products: deterministic atoms and binomial word frequencies") {
    auto rho_id = single(Matrix::Identity(2, 2));
    for (const auto& s : sample_products(rho_id, 5, 16, 1)) {
        CHECK(s.log_norm == doctest::Approx(0.0));
        CHECK((s.product.mat() - Matrix::Identity(2, 2)).norm() <= 1e-14);
    }

    Matrix g = testsupport::diag2(2, 0.5);
    auto cubes = sample_products(single(g), 3, 4, 7);
    for (const auto& s : cubes)
        CHECK((s.product.mat() - GroupElement(g).pow(3).mat()).norm() <= 1e-12);

    // two atoms, n = 2: each of the 4 words has frequency 1/4 +- 3 sigma
    auto cone2 = builtin_measure("cone2");
    int count = 4000;
    auto samples = sample_products(cone2, 2, count, 11);
    std::map<std::string, int> freq;
    auto a0 = cone2.atoms()[0].g.mat(), a1 = cone2.atoms()[1].g.mat();
    std::vector<std::pair<std::string, Matrix>> words = {
        {"00", a0 * a0}, {"01", a0 * a1}, {"10", a1 * a0}, {"11", a1 * a1}};
    for (const auto& s : samples) {
        for (auto& [name, w] : words)
            if ((s.product.mat() - w).norm() < 1e-9) ++freq[name];
    }
    double sigma3 = 3 * std::sqrt(0.25 * 0.75 / count);
    for (auto& [name, w] : words)
        CHECK(std::abs(freq[name] / double(count) - 0.25) <= sigma3);
}

TEST_CASE("sample_products determinism: same seed, same bits") {
    auto cone2 = builtin_measure("cone2");
    auto a = sample_products(cone2, 7, 64, 42);
    auto b = sample_products(cone2, 7, 64, 42);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].product.mat() == b[i].product.mat());
}

TEST_CASE("lyapunov_estimate: exact diagonal, rotation, cone2 cross-check") {
    auto est = lyapunov_estimate(single(testsupport::diag2(2, 0.5)), 100, 50, 3);
    CHECK(est.lambda_rho == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto rot_est = lyapunov_estimate(single(rot(0.7)), 100, 50, 3);
    CHECK(std::abs(rot_est.lambda_rho) <= 1e-12);

    // at n = 10^3 the O(1/n) transient bias of estimator 1 sits inside
    // the 3 sigma band; shorter walks leave it visible
    auto cone = lyapunov_estimate(builtin_measure("cone2"), 1000, 400, 5);
    CHECK(cone.lambda_rho > 0);
    double combined = std::sqrt(cone.std_error * cone.std_error +
                                cone.std_error_birkhoff * cone.std_error_birkhoff);
    CHECK(std::abs(cone.lambda_rho - cone.lambda_birkhoff) <= 3 * combined + 1e-9);
    CHECK(cone.lambda_rho > 5 * cone.std_error);
}

TEST_CASE("lyapunov_estimate is worker-count independent") {
    auto rho = builtin_measure("cone2");
    auto w1 = lyapunov_estimate(rho, 50, 3000, 9, 1);
    auto w4 = lyapunov_estimate(rho, 50, 3000, 9, 4);
    CHECK(w1.lambda_rho == w4.lambda_rho);
    CHECK(w1.std_error == w4.std_error);
}

TEST_CASE("stationary measure: attracting direction and cone support") {
    // diag(2, 1/2): mass concentrates at the e1 cell
    auto nu = stationary_measure_estimate(single(testsupport::diag2(2, 0.5)), 500, 4000,
                                          1.0 / 64, 21);
    Vector e1 = Vector::Unit(2, 0);
    CHECK(nu.mass_ball(ProjectivePoint(e1), 0.05) >= 0.999);

    // cone2: all mass inside the positive cone (first quadrant directions)
    auto nu2 = stationary_measure_estimate(builtin_measure("cone2"), 1000, 20000,
                                           1.0 / 256, 23);
    double pos = 0;
    for (const auto& kv : nu2.bins()) {
        auto c = nu2.cell_center(kv.first / nu2.a_size());
        if (c.rep()(0) > 0 && c.rep()(1) > 0) pos += kv.second;
    }
    CHECK(pos == doctest::Approx(1.0));
    CHECK(nu2.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stationary measure is approximately rho-invariant (coarse TV)") {
    auto rho = builtin_measure("cone2");
    auto nu = stationary_measure_estimate(rho, 1000, 40000, 1.0 / 256, 29);
    auto pushed = nu.pushforward(rho);
    CHECK(nu.coarse_tv(pushed, 16) <= 0.05);
}

TEST_CASE("lazy_measure structure and support growth") {
    auto rho = builtin_measure("cone2");
    auto lazy = lazy_measure(rho);
    CHECK(lazy.atoms().size() == 3);
    CHECK(lazy.atoms()[0].weight == doctest::Approx(0.5));
    auto lazy2 = lazy_measure(lazy);
    CHECK(lazy2.atoms()[0].weight == doctest::Approx(0.75));

    // supp(rho_e^{*n}) nondecreasing in n: word sets for n <= 5
    auto key = [](const Matrix& m) {
        char buf[128];
        snprintf(buf, sizeof buf, "%.9e_%.9e_%.9e_%.9e", m(0, 0), m(0, 1), m(1, 0),
                 m(1, 1));
        return std::string(buf);
    };
    std::vector<std::set<std::string>> sig(6);
    std::vector<Matrix> prods = {Matrix::Identity(2, 2)};
    sig[0].insert(key(Matrix::Identity(2, 2)));
    for (int n = 1; n <= 5; ++n) {
        std::vector<Matrix> next;
        for (const auto& p : prods)
            for (const auto& at : lazy.atoms()) next.push_back(at.g.mat() * p);
        prods = std::move(next);
        for (const auto& p : prods) sig[n].insert(key(p));
        for (const auto& s : sig[n - 1]) CHECK(sig[n].count(s) == 1);
    }
}

TEST_CASE("regularity_probe: single atom trivial, cone2 calibrated, resolution error") {
    auto rho4 = single(testsupport::diag2(4, 0.25));
    auto nu = stationary_measure_estimate(rho4, 500, 4000, 1.0 / 512, 31);
    auto res = regularity_probe(rho4, nu, 3, 1.0, 200, 33);
    CHECK(res.pass_fraction == doctest::Approx(1.0));
    CHECK(res.delta_estimate <= 0.1); // full mass at V_g^+ = e1

    auto cone = builtin_measure("cone2");
    auto nu2 = stationary_measure_estimate(cone, 1000, 60000, 1.0 / 2048, 35);
    auto res2 = regularity_probe(cone, nu2, 10, 0.5, 300, 37);
    CHECK(res2.proximal_fraction > 0.5);
    CHECK(res2.pass_fraction >= 0.9);

    CHECK_THROWS_AS(regularity_probe(cone, nu2, 40, 0.5, 10, 39), ResolutionError);
}

TEST_CASE("genericity_stats: frequencies sane, singular-value event fills in") {
    auto cone = builtin_measure("cone2");
    auto st = genericity_stats(cone, 20, 0.25, 400, 41);
    for (int e = 0; e < 6; ++e) {
        CHECK(st.frequency[e] >= 0.0);
        CHECK(st.frequency[e] <= 1.0);
    }
    auto st_small = genericity_stats(cone, 8, 0.25, 400, 43);
    auto st_big = genericity_stats(cone, 40, 0.25, 400, 43);
    CHECK(st_big.frequency[0] >= st_small.frequency[0] - 0.05);
    CHECK(st_big.frequency[0] >= 0.9);
    // axis transversality is generic at large n
    double f40 = genericity_stats(cone, 40, 0.25, 400, 47).frequency[5];
    CHECK(f40 >= 0.9);
}

TEST_CASE("diophantine_scan: lattice zeros for diag-lattice, positivity for cone2") {
    // every length-m word of diag-lattice has lambda_1 = m ln 2, so
    // D(b) = |e^{i b m ln 2} - 1|^2 vanishes exactly at b = 2 pi k / ln 2
    auto lat = builtin_measure("diag-lattice");
    const double ln2 = std::log(2.0);
    std::vector<double> lattice_b;
    for (int k = 1; k <= 6; ++k) lattice_b.push_back(2 * 3.14159265358979323846 * k / ln2);
    auto scan = diophantine_scan(lat, 2.0, 3, lattice_b, 64, 51);
    for (const auto& pt : scan.points) {
        CHECK(pt.prox_fraction == doctest::Approx(1.0));
        CHECK(pt.D <= 1e-10);
    }
    auto scan_off = diophantine_scan(lat, 2.0, 3, {5.0, 11.0, 23.0}, 64, 51);
    for (const auto& pt : scan_off.points) CHECK(pt.D > 1e-4);

    std::vector<double> bs;
    for (int i = 0; i <= 20; ++i) bs.push_back(2.0 + i * (98.0 / 20));
    auto scan2 = diophantine_scan(builtin_measure("cone2"), 2.0, 3, bs, 128, 53);
    for (const auto& pt : scan2.points) CHECK(pt.D > 0);
    CHECK(scan2.min_bD > 0);

    CHECK_THROWS_AS(diophantine_scan(lat, 0.5, 3, {2.0}, 16, 55), PreconditionError);
}

TEST_CASE("convolution_regularity_probe: trivial and exact-vs-sampled") {
    auto one = single(testsupport::diag2(3, 1.0 / 3));
    auto res = convolution_regularity_probe(one, 6, 1.0, 100, 57);
    CHECK(res.t3_estimate == doctest::Approx(0.0));
    CHECK(res.pass_fraction == doctest::Approx(1.0));

    auto cone = builtin_measure("cone2");
    auto exact = convolution_regularity_probe(cone, 8, 0.4, 0, 59);
    CHECK(exact.exact);
    CHECK(exact.t3_estimate >= 0.0);
    CHECK(exact.pass_fraction >= 1 - std::exp(-0.05 * 8) - 1e-12);

    // forced MC sampling tracks the exhaustive 2^8-word oracle
    auto sampled = convolution_regularity_probe(cone, 8, 0.4, 600, 61, 0.05, true);
    CHECK_FALSE(sampled.exact);
    CHECK(std::abs(sampled.t3_estimate - exact.t3_estimate) <= 0.25);
}

TEST_CASE("cone invariance: the projective chain never leaves the positive cone") {
    auto cone = builtin_measure("cone2");
    Rng rng(63);
    Vector v(2);
    v << 0.3, 0.9;
    for (int k = 0; k < 5000; ++k) {
        v = (cone.atoms()[rng.next_u64() % 2].g.mat() * v).normalized();
        CHECK(v(0) > 0);
        CHECK(v(1) > 0);
    }
}

TEST_CASE("lazy marginalization: non-identity steps distribute as rho-paths") {
    // pick lazy paths of length n with exactly L non-identity steps and
    // compare the log_norm law against length-L rho-paths (two-sample KS)
    auto rho = builtin_measure("cone2");
    auto lazy = lazy_measure(rho);
    const int n = 12, L = 6;
    Rng rng(201);
    std::vector<double> lazy_vals, rho_vals;
    while (lazy_vals.size() < 400) {
        Matrix prod = Matrix::Identity(2, 2);
        int eff = 0;
        for (int k = 0; k < n; ++k) {
            std::size_t j = lazy.pick(rng);
            if (j == 0) continue; // identity atom
            prod = lazy.atoms()[j].g.mat() * prod;
            ++eff;
        }
        if (eff == L)
            lazy_vals.push_back(std::log(GroupElement(prod).norm()));
    }
    for (int i = 0; i < 2000; ++i) {
        Matrix prod = Matrix::Identity(2, 2);
        for (int k = 0; k < L; ++k) prod = rho.atoms()[rho.pick(rng)].g.mat() * prod;
        rho_vals.push_back(std::log(GroupElement(prod).norm()));
    }
    std::sort(lazy_vals.begin(), lazy_vals.end());
    std::sort(rho_vals.begin(), rho_vals.end());
    double dstat = 0;
    std::size_t i = 0, j = 0;
    while (i < lazy_vals.size() && j < rho_vals.size()) {
        if (lazy_vals[i] <= rho_vals[j]) ++i; else ++j;
        dstat = std::max(dstat, std::abs(double(i) / lazy_vals.size() -
                                         double(j) / rho_vals.size()));
    }
    double nm = double(lazy_vals.size()) * rho_vals.size() /
                (lazy_vals.size() + rho_vals.size());
    // c = 1.9 corresponds to a ~3 sigma two-sample KS threshold
    CHECK(dstat <= 1.9 / std::sqrt(nm));
}

TEST_CASE("lyapunov estimator variance decays like 1/n_walks") {
    auto rho = builtin_measure("cone2");
    auto a = lyapunov_estimate(rho, 200, 1000, 77);
    auto b = lyapunov_estimate(rho, 200, 4000, 77);
    // doubling walks twice should halve the standard error
    CHECK(b.std_error <= a.std_error * 0.5 * 1.3);
    CHECK(b.std_error >= a.std_error * 0.5 / 1.3);
}

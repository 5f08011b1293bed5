#pragma once

// Experiment runner: every probe and scan as a named experiment producing
// CSV artifacts plus a metadata sidecar. Identical configs (seed included)
// produce byte-identical CSV bodies for any worker count.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "renlab/config.hpp"
#include "renlab/csv.hpp"
#include "renlab/renewal.hpp"

namespace renlab {

using ArtifactMap = std::map<std::string, std::string>;

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::shared_ptr<const StateGrid> grid_from_config(const ExperimentConfig& cfg,
                                                         const GeneratorMeasure& rho,
                                                         int default_size = 96,
                                                         int size_override = 0) {
    int a = rho.a_size();
    if (rho.dim() == 2) {
        bool aligned = cfg.param_s("grid_alignment",
                                   cfg.measure_name == "diag-lattice" ? "aligned"
                                                                      : "offset") ==
                       "aligned";
        int n = size_override ? size_override
                              : static_cast<int>(cfg.param_i("grid_size", default_size));
        if (aligned && n % 4 == 0) n += 2; // aligned grids need n = 2 mod 4
        if (n % 2) ++n;
        return std::make_shared<const StateGrid>(StateGrid::circle(n, a, aligned));
    }
    int sub = size_override ? size_override
                            : static_cast<int>(cfg.param_i("icosphere_subdiv", 2));
    return std::make_shared<const StateGrid>(StateGrid::icosphere(sub, a));
}

} // namespace detail

inline ArtifactMap run_experiment(const ExperimentConfig& cfg) {
    ArtifactMap out;
    auto rho = measure_from_config(cfg);
    const std::uint64_t seed = cfg.seed;
    const int workers = cfg.workers;
    const std::string& exp = cfg.experiment;

    if (exp == "lyapunov") {
        auto est = lyapunov_estimate(rho, static_cast<int>(cfg.param_i("n_steps", 1000)),
                                     static_cast<int>(cfg.param_i("n_walks", 1000)), seed,
                                     workers);
        CsvWriter w({"lambda_rho", "std_error", "lambda_birkhoff", "std_error_birkhoff",
                     "n_steps", "n_walks"});
        w.cell(est.lambda_rho).cell(est.std_error).cell(est.lambda_birkhoff)
            .cell(est.std_error_birkhoff).cell(long(est.n_steps)).cell(long(est.n_walks));
        w.endrow();
        out["lyapunov.csv"] = w.body();
    } else if (exp == "stationary") {
        auto nu = stationary_measure_estimate(
            rho, cfg.param_i("burn_in", 1000), cfg.param_i("samples", 120000),
            cfg.param_d("resolution", 1.0 / 512), seed);
        auto pushed = nu.pushforward(rho);
        CsvWriter w({"cell", "a", "mass"});
        for (const auto& kv : nu.bins()) {
            w.cell(long(kv.first / nu.a_size())).cell(long(kv.first % nu.a_size()))
                .cell(kv.second);
            w.endrow();
        }
        out["stationary.csv"] = w.body();
        CsvWriter s({"coarse_tv_selfconsistency", "samples", "resolution"});
        s.cell(nu.coarse_tv(pushed, 16)).cell(long(nu.sample_count()))
            .cell(nu.resolution());
        s.endrow();
        out["stationary_summary.csv"] = s.body();
    } else if (exp == "proximal-cert") {
        int n = static_cast<int>(cfg.param_i("n", 12));
        int count = static_cast<int>(cfg.param_i("count", 500));
        auto samples = sample_products(rho, n, count, seed);
        CsvWriter w({"index", "log_norm", "certified", "epsilon", "lambda1",
                     "kappa_gap", "d_vplus_xM_over_bound"});
        long certified = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto cert = auto_certify(samples[i].product);
            if (cert) ++certified;
            w.cell(long(i)).cell(samples[i].log_norm).cell(long(cert ? 1 : 0))
                .cell(cert ? cert->epsilon : 0.0).cell(cert ? cert->lambda1 : 0.0)
                .cell(cert ? cert->cartan.kappa_gap : 0.0)
                .cell(cert && cert->bound_vplus_xM > 0
                          ? cert->meas_vplus_xM / cert->bound_vplus_xM
                          : 0.0);
            w.endrow();
        }
        out["proximal_cert.csv"] = w.body();
        auto cal = calibrate_constants(rho.dim(), static_cast<int>(cfg.param_i(
                                                      "calibration_trials", 100)),
                                       seed ^ 0xca1u);
        CsvWriter s({"count", "certified_fraction", "c2_hat", "c3_hat", "c2_config",
                     "c3_config"});
        s.cell(long(count)).cell(double(certified) / count).cell(cal.c2_hat)
            .cell(cal.c3_hat).cell(prox_config().c2).cell(prox_config().c3);
        s.endrow();
        out["proximal_cert_summary.csv"] = s.body();
    } else if (exp == "diophantine-scan") {
        std::vector<double> bs;
        if (cfg.param_s("b_mode", "uniform") == "lattice") {
            double lam = cfg.param_d("lattice_log", std::log(2.0));
            int kmax = static_cast<int>(cfg.param_i("b_count", 10));
            for (int k = 1; k <= kmax; ++k)
                bs.push_back(2 * StateGrid::pi() * k / lam);
        } else {
            double lo = cfg.param_d("b_min", 2.0), hi = cfg.param_d("b_max", 100.0);
            int nb = static_cast<int>(cfg.param_i("b_count", 41));
            for (int i = 0; i < nb; ++i)
                bs.push_back(lo + (hi - lo) * i / std::max(1, nb - 1));
        }
        auto scan = diophantine_scan(rho, cfg.param_d("beta", 2.0),
                                     static_cast<int>(cfg.param_i("p", 3)), bs,
                                     static_cast<int>(cfg.param_i("count", 256)), seed,
                                     workers);
        CsvWriter w({"b", "D", "prox_fraction", "n_words"});
        for (auto& pt : scan.points) {
            w.cell(pt.b).cell(pt.D).cell(pt.prox_fraction).cell(long(pt.n_words));
            w.endrow();
        }
        out["diophantine.csv"] = w.body();
        CsvWriter s({"alpha_hat", "min_b4_D"});
        s.cell(scan.alpha_hat).cell(scan.min_bD);
        s.endrow();
        out["diophantine_summary.csv"] = s.body();
    } else if (exp == "resolvent-scan") {
        double gamma = cfg.param_d("gamma", 0.25);
        std::vector<double> ts;
        {
            double t = cfg.param_d("t_min", 2.0);
            double tmax = cfg.param_d("t_max", 64.0);
            if (cfg.param_s("t_mode", "geometric") == "lattice") {
                double lam = cfg.param_d("lattice_log", std::log(2.0));
                int kmax = static_cast<int>(cfg.param_i("t_count", 5));
                for (int k = 1; k <= kmax; ++k)
                    ts.push_back(2 * StateGrid::pi() * k / lam);
            } else {
                for (; t <= tmax * (1 + 1e-12); t *= 2) ts.push_back(t);
            }
        }
        auto grid = detail::grid_from_config(cfg, rho, 192);
        auto scan = resolvent_scan(rho, grid, gamma, ts,
                                   static_cast<int>(cfg.param_i("probes", 20)), seed);
        CsvWriter w({"t", "norm_estimate", "residual", "grid_size", "gamma", "seed",
                     "singular", "smallest_sv"});
        for (auto& pt : scan.points) {
            w.cell(pt.t).cell(pt.norm_estimate).cell(pt.residual)
                .cell(long(grid->n_sphere())).cell(gamma).cell(long(seed))
                .cell(long(pt.singular ? 1 : 0)).cell(pt.smallest_sv);
            w.endrow();
        }
        out["resolvent_scan.csv"] = w.body();
        CsvWriter s({"c_hat", "l_hat"});
        s.cell(scan.c_hat).cell(scan.l_hat);
        s.endrow();
        out["resolvent_summary.csv"] = s.body();
        // eigenvalue table of the unperturbed operator on the same grid
        try {
            auto op0 = build_operator(rho, Complex(0, 0), grid);
            Eigen::EigenSolver<Matrix> es(op0.mat.real());
            std::vector<std::pair<double, std::pair<double, double>>> evs;
            for (int i = 0; i < op0.mat.rows(); ++i) {
                Complex lam = es.eigenvalues()(i);
                evs.push_back({std::abs(lam), {lam.real(), lam.imag()}});
            }
            std::sort(evs.rbegin(), evs.rend());
            CsvWriter ew({"rank", "re", "im", "modulus"});
            for (std::size_t i = 0; i < std::min<std::size_t>(evs.size(), 64); ++i) {
                ew.cell(long(i)).cell(evs[i].second.first).cell(evs[i].second.second)
                    .cell(evs[i].first);
                ew.endrow();
            }
            out["spectral_eigenvalues.csv"] = ew.body();
        } catch (const Error&) {
            // eigentable is best-effort (degenerate measures)
        }
        if (cfg.param_i("refine_check", 0)) {
            auto grid2 = detail::grid_from_config(
                cfg, rho, 192,
                rho.dim() == 2 ? 2 * static_cast<int>(cfg.param_i("grid_size", 192))
                               : static_cast<int>(cfg.param_i("icosphere_subdiv", 2)) + 1);
            auto scan2 = resolvent_scan(rho, grid2, gamma, ts,
                                        static_cast<int>(cfg.param_i("probes", 20)), seed);
            CsvWriter r({"t", "norm_coarse", "norm_fine", "rel_change"});
            for (std::size_t i = 0; i < scan.points.size(); ++i) {
                double a = scan.points[i].norm_estimate, b = scan2.points[i].norm_estimate;
                r.cell(scan.points[i].t).cell(a).cell(b)
                    .cell(a > 0 ? std::abs(b - a) / a : 0.0);
                r.endrow();
            }
            out["resolvent_refine.csv"] = r.body();
        }
    } else if (exp == "dolgopyat-probe") {
        auto lazy = lazy_measure(rho);
        auto grid = detail::grid_from_config(cfg, rho, 48);
        double t = cfg.param_d("t", 16.0);
        double alpha1 = cfg.param_d("alpha1", 1.0);
        double alpha2 = cfg.param_d("alpha2", 1.0);
        double beta = cfg.param_d("beta", 2.0);
        double delta = cfg.param_d("delta", 2.0);
        auto nu = stationary_measure_estimate(rho, cfg.param_i("burn_in", 1000),
                                              cfg.param_i("samples", 100000),
                                              cfg.param_d("resolution", 1.0 / 1024), seed);
        double r = std::pow(std::abs(t), -alpha2);
        std::vector<int> regular;
        for (int idx = 0; idx < grid->size(); ++idx) {
            ProjectivePoint x(grid->sphere_point(grid->vertex_of(idx)));
            if (nu.mass_ball(x, r) >= std::pow(r, delta)) regular.push_back(idx);
        }
        auto op = build_operator(lazy, Complex(0, t), grid);
        auto one = grid_constant(*grid, 1.0, cfg.param_d("gamma", 0.25));
        auto res = dolgopyat_probe(lazy, op, one, t, alpha1, beta, regular, seed);
        CsvWriter w({"found", "x0", "n", "value", "n_regular", "max_defect"});
        double dmax = 0;
        for (double dv : res.defects) dmax = std::max(dmax, dv);
        w.cell(long(res.found ? 1 : 0)).cell(long(res.x0)).cell(long(res.n))
            .cell(res.value).cell(long(regular.size())).cell(dmax);
        w.endrow();
        out["dolgopyat.csv"] = w.body();
    } else if (exp == "renewal-rate") {
        auto grid = detail::grid_from_config(cfg, rho, 128);
        auto ctx = make_renewal_context(rho, grid, seed, workers, 2000, 2000);
        OmegaFunction f;
        f.gamma = cfg.param_d("gamma", 0.25);
        double center = cfg.param_d("bump_center", 2.0);
        double width = cfg.param_d("bump_width", 3.0);
        f.eval = [center, width](const Vector&, int, double t) {
            return std::exp(-0.5 * (t - center) * (t - center) / (width * width));
        };
        double on = 0;
        for (double tt = -60; tt <= 60; tt += 0.01)
            on = std::max(on, std::exp(f.gamma * std::abs(tt)) *
                                  f.eval(Vector::Unit(rho.dim(), 0), 0, tt));
        f.omega_norm = 2 * on;
        std::vector<double> radii;
        int klo = static_cast<int>(cfg.param_i("radius_pow_min", 2));
        int khi = static_cast<int>(cfg.param_i("radius_pow_max", 12));
        for (int k = klo; k <= khi; ++k) radii.push_back(std::pow(2.0, -k));
        Vector e1 = Vector::Unit(rho.dim(), 0);
        auto fit = rate_fit(ctx, f, e1, radii, seed,
                            cfg.param_d("mc_tolerance", 1e-4),
                            static_cast<int>(cfg.param_i("n_walks", 150000)), workers);
        CsvWriter w({"radius", "residual", "mc_error", "n_terms"});
        for (std::size_t i = 0; i < fit.radii.size(); ++i) {
            w.cell(fit.radii[i]).cell(fit.residuals[i]).cell(fit.mc_errors[i])
                .cell(long(fit.n_terms[i]));
            w.endrow();
        }
        out["renewal_rate.csv"] = w.body();
        CsvWriter s({"alpha_hat", "c_hat", "r_squared", "lambda_rho"});
        s.cell(fit.alpha_hat).cell(fit.c_hat).cell(fit.r_squared)
            .cell(ctx.lyap.lambda_rho);
        s.endrow();
        out["renewal_rate_summary.csv"] = s.body();
    } else if (exp == "fourier-check") {
        auto grid = detail::grid_from_config(cfg, rho, 256);
        auto ctx = make_renewal_context(rho, grid, seed, workers);
        double center = cfg.param_d("bump_center", 2.0);
        double gamma = cfg.param_d("gamma", 0.25);
        RegularFunction freg;
        freg.gamma = gamma;
        freg.k = 6;
        freg.norm_gamma_k = 4.0 * std::exp(gamma * std::abs(center) + gamma * gamma);
        freg.eval = [center](const Vector&, int, double t) {
            return std::exp(-0.5 * (t - center) * (t - center));
        };
        freg.fhat = [center](const Vector&, int, double xi) {
            return std::sqrt(2 * StateGrid::pi()) *
                   std::exp(Complex(0, -xi * center)) * std::exp(-0.5 * xi * xi);
        };
        OmegaFunction fom;
        fom.gamma = gamma;
        fom.omega_norm = freg.norm_gamma_k;
        fom.eval = freg.eval;
        std::vector<FourierGreenPoint> pts;
        Vector e1 = Vector::Unit(rho.dim(), 0);
        Vector diag = Vector::Constant(rho.dim(), 1.0).normalized();
        std::vector<double> tpts = {-1.0, -0.3, 0.5, 1.2, 2.0};
        for (std::size_t i = 0; i < tpts.size(); ++i)
            pts.push_back({i % 2 ? diag : e1, 0, tpts[i]});
        auto four = fourier_green(ctx, freg, pts, cfg.param_d("xi_cutoff", 14.0),
                                  cfg.param_d("xi_step", 0.03),
                                  cfg.param_d("cutoff_tolerance", 1e-4));
        CsvWriter w({"t", "fourier", "green_mc", "mc_std_error", "truncation",
                     "quad_error", "cutoff_tail", "diff"});
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto mc = green_mc(ctx, fom, pts[i].x, pts[i].a, pts[i].t,
                               seed + 1000 + i, cfg.param_d("mc_tolerance", 1e-4),
                               static_cast<int>(cfg.param_i("n_walks", 60000)), workers);
            w.cell(pts[i].t).cell(four.values[i]).cell(mc.value).cell(mc.mc_std_error)
                .cell(mc.truncation_bound).cell(four.quad_error).cell(four.cutoff_tail)
                .cell(std::abs(four.values[i] - mc.value));
            w.endrow();
        }
        out["fourier_check.csv"] = w.body();
        CsvWriter tr({"xi", "integrand_norm"});
        for (auto& [xi, nm] : four.trace) {
            tr.cell(xi).cell(nm);
            tr.endrow();
        }
        out["fourier_trace.csv"] = tr.body();
    } else if (exp == "regularity-probe") {
        auto nu = stationary_measure_estimate(rho, cfg.param_i("burn_in", 1000),
                                              cfg.param_i("samples", 100000),
                                              cfg.param_d("resolution", 1.0 / 2048), seed);
        auto res = regularity_probe(rho, nu, static_cast<int>(cfg.param_i("n", 10)),
                                    cfg.param_d("M", 0.5),
                                    static_cast<int>(cfg.param_i("count", 300)), seed,
                                    cfg.param_d("t_target", 0.25));
        CsvWriter w({"pass_fraction", "delta_estimate", "proximal_fraction"});
        w.cell(res.pass_fraction).cell(res.delta_estimate).cell(res.proximal_fraction);
        w.endrow();
        out["regularity.csv"] = w.body();
    } else if (exp == "tauberian-check") {
        int k = static_cast<int>(cfg.param_i("k", 1));
        auto f = [](double t) { return std::sin(t) * std::exp(-t * t); };
        auto omega_f = [](double h) { return 1.3 * h; };
        std::vector<double> v_grid = {1, 2, 4, 8, 16, 32};
        double fsup = 0;
        for (double t = -5; t <= 5; t += 0.01) fsup = std::max(fsup, std::abs(f(t)));
        double c_cal = 0;
        for (double t = -3; t <= 3; t += 0.17) {
            double raw = tauberian_raw(f, omega_f, k, v_grid, t, fsup);
            if (raw > 0) c_cal = std::max(c_cal, std::abs(f(t)) / raw);
        }
        CsvWriter w({"t", "f", "raw_bound", "dominated"});
        int fails = 0;
        for (double t = -2.9; t <= 3; t += 0.23) {
            double raw = tauberian_raw(f, omega_f, k, v_grid, t, fsup);
            bool ok = std::abs(f(t)) <= 1.1 * c_cal * raw;
            fails += !ok;
            w.cell(t).cell(f(t)).cell(raw).cell(long(ok ? 1 : 0));
            w.endrow();
        }
        out["tauberian.csv"] = w.body();
        CsvWriter s({"c_calibrated", "violations"});
        s.cell(c_cal).cell(long(fails));
        s.endrow();
        out["tauberian_summary.csv"] = s.body();
    } else {
        throw ConfigError("unknown experiment '" + exp + "'");
    }
    return out;
}

// writes artifacts + a metadata sidecar; returns the artifact map
inline ArtifactMap run_and_write(const ExperimentConfig& cfg, bool quiet = false) {
    auto t0 = std::chrono::steady_clock::now();
    auto artifacts = run_experiment(cfg);
    auto t1 = std::chrono::steady_clock::now();
    std::string norm = serialize_config(cfg);

    std::string dir = cfg.out_dir.empty() ? "out" : cfg.out_dir;
    std::filesystem::create_directories(dir);
    for (auto& [name, body] : artifacts) {
        std::ofstream f(dir + "/" + name, std::ios::binary);
        f << body;
    }
    std::ostringstream meta;
    meta << "experiment = " << cfg.experiment << "\n";
    meta << "seed = " << cfg.seed << "\n";
    meta << "config_hash = " << detail::fnv1a(norm) << "\n";
    meta << "wall_ms = "
         << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()
         << "\n";
    meta << "[config]\n" << norm;
    std::ofstream mf(dir + "/" + cfg.experiment + ".meta.txt", std::ios::binary);
    mf << meta.str();
    if (!quiet) {
        for (auto& [name, body] : artifacts)
            std::fprintf(stdout, "wrote %s/%s (%zu bytes)\n", dir.c_str(), name.c_str(),
                         body.size());
    }
    return artifacts;
}

} // namespace renlab

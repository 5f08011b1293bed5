#pragma once

// Flat sectioned config format, diff-friendly:
//   [measure]  name = cone2  (or explicit atom.N.matrix / weight / perm)
//   [experiment]  name, seed (mandatory), out_dir, workers
//   [params]  free-form numeric/string knobs per experiment
// normalize(text) := serialize(parse(text)); serialize is canonical, so
// parse/serialize round-trips are idempotent.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "renlab/errors.hpp"
#include "renlab/walk_engine.hpp"

namespace renlab {

struct ExperimentConfig {
    std::string measure_name; // builtin name; empty means explicit atoms
    int dim = 2;
    int a_size = 1;
    std::vector<std::vector<double>> atom_matrices; // row-major
    std::vector<double> atom_weights;
    std::vector<std::vector<int>> atom_perms;

    std::string experiment;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int workers = 2;

    std::map<std::string, std::string> params;

    double param_d(const std::string& key, double fallback) const {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw ConfigError("parameter '" + key + "' is not numeric");
        }
    }
    long param_i(const std::string& key, long fallback) const {
        return static_cast<long>(param_d(key, static_cast<double>(fallback)));
    }
    std::string param_s(const std::string& key, const std::string& fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    double v;
    while (in >> v) out.push_back(v);
    return out;
}

inline std::string fmt(double v) {
    char buf[40];
    snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::map<int, std::vector<double>> matrices;
    std::map<int, double> weights;
    std::map<int, std::vector<int>> perms;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": bad section");
            section = t.substr(1, t.size() - 2);
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        std::string val = detail::trim(t.substr(eq + 1));
        if (section == "measure") {
            if (key == "name") cfg.measure_name = val;
            else if (key == "dim") cfg.dim = std::stoi(val);
            else if (key == "a_size") cfg.a_size = std::stoi(val);
            else if (key.rfind("atom.", 0) == 0) {
                std::size_t dot2 = key.find('.', 5);
                if (dot2 == std::string::npos)
                    throw ConfigError("bad atom key '" + key + "'");
                int idx = std::stoi(key.substr(5, dot2 - 5));
                std::string field = key.substr(dot2 + 1);
                if (field == "matrix") matrices[idx] = detail::parse_doubles(val);
                else if (field == "weight") weights[idx] = std::stod(val);
                else if (field == "perm") {
                    std::vector<int> p;
                    for (double d : detail::parse_doubles(val))
                        p.push_back(static_cast<int>(d));
                    perms[idx] = p;
                } else
                    throw ConfigError("unknown atom field '" + field + "'");
            } else
                throw ConfigError("unknown measure key '" + key + "'");
        } else if (section == "experiment") {
            if (key == "name") cfg.experiment = val;
            else if (key == "seed") {
                cfg.seed = std::stoull(val);
                cfg.seed_set = true;
            } else if (key == "out_dir") cfg.out_dir = val;
            else if (key == "workers") cfg.workers = std::stoi(val);
            else
                throw ConfigError("unknown experiment key '" + key + "'");
        } else if (section == "params") {
            cfg.params[key] = val;
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown section '" +
                              section + "'");
        }
    }
    for (auto& [idx, m] : matrices) {
        cfg.atom_matrices.push_back(m);
        auto w = weights.find(idx);
        if (w == weights.end())
            throw ConfigError("atom " + std::to_string(idx) + " has no weight");
        cfg.atom_weights.push_back(w->second);
        auto p = perms.find(idx);
        cfg.atom_perms.push_back(p == perms.end() ? std::vector<int>{} : p->second);
    }
    if (!cfg.seed_set) throw ConfigError("seed is mandatory");
    for (auto& [k, v] : cfg.params)
        if (k.find("tol") != std::string::npos && !(std::stod(v) > 0))
            throw ConfigError("tolerance '" + k + "' must be positive");
    return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[measure]\n";
    if (!cfg.measure_name.empty()) out << "name = " << cfg.measure_name << "\n";
    out << "dim = " << cfg.dim << "\n";
    out << "a_size = " << cfg.a_size << "\n";
    for (std::size_t i = 0; i < cfg.atom_matrices.size(); ++i) {
        out << "atom." << i + 1 << ".matrix =";
        for (double v : cfg.atom_matrices[i]) out << " " << detail::fmt(v);
        out << "\n";
        out << "atom." << i + 1 << ".weight = " << detail::fmt(cfg.atom_weights[i])
            << "\n";
        if (!cfg.atom_perms[i].empty()) {
            out << "atom." << i + 1 << ".perm =";
            for (int v : cfg.atom_perms[i]) out << " " << v;
            out << "\n";
        }
    }
    out << "[experiment]\n";
    out << "name = " << cfg.experiment << "\n";
    out << "seed = " << cfg.seed << "\n";
    if (!cfg.out_dir.empty()) out << "out_dir = " << cfg.out_dir << "\n";
    out << "workers = " << cfg.workers << "\n";
    out << "[params]\n";
    for (auto& [k, v] : cfg.params) out << k << " = " << v << "\n";
    return out.str();
}

inline GeneratorMeasure measure_from_config(const ExperimentConfig& cfg) {
    if (!cfg.measure_name.empty()) return builtin_measure(cfg.measure_name);
    if (cfg.atom_matrices.empty()) throw ConfigError("no measure given");
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < cfg.atom_matrices.size(); ++i) {
        const auto& raw = cfg.atom_matrices[i];
        if (static_cast<int>(raw.size()) != cfg.dim * cfg.dim)
            throw ConfigError("atom matrix size does not match dim^2");
        Matrix m(cfg.dim, cfg.dim);
        for (int r = 0; r < cfg.dim; ++r)
            for (int c = 0; c < cfg.dim; ++c) m(r, c) = raw[r * cfg.dim + c];
        atoms.push_back({GroupElement(m), cfg.atom_weights[i], cfg.atom_perms[i]});
    }
    return GeneratorMeasure(std::move(atoms), cfg.a_size);
}

} // namespace renlab

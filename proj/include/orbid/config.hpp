#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "orbid/sdp/fit.hpp"
#include "orbid/trajectory.hpp"
#include "orbid/types.hpp"

namespace orbid {

// Declarative run configuration: plain-text `key = value` lines, '#'
// comments. Every key has a default; command-line flags override file values.
struct RunConfig {
    // data source: a csv path, or a synthetic system when empty
    std::string data;
    bool data_has_states = false;  // csv follows the record schema (t,x..,xdot..,u..,y..)

    std::string synthetic_system = "van_der_pol";  // van_der_pol | fitzhugh_nagumo | linear_osc
    double mu = 1.0;
    double fh_a = 0.7, fh_b = 0.8, fh_tau = 12.5, fh_current = 0.5;
    double omega = 1.0, zeta = 0.1;
    double duration = 30.0;
    double dt = 0.01;
    double noise_std = 0.0;
    double force_offset = 0.0, force_amplitude = 0.0, force_omega = 0.0, force_phase = 0.0;
    bool truth_states = false;  // fit on exact synthetic states instead of rebuilt ones

    double bank_pole = 1.0;
    int bank_order = 2;
    int smoother_window = 21;
    int smoother_degree = 3;

    int deg_e = 3, deg_f_x = 3, deg_f_u = 0, deg_g = 1;

    std::string kind = "trie";
    double lambda = 0.0;
    double v_threshold = 0.0;
    double gap_tol = 1e-8;
    double feas_tol = 1e-7;
    int max_iters = 200;

    std::string out = "out";
    unsigned seed = 1;
    double horizon = 0.0;        // evaluation horizon; 0 = data length
    double train_fraction = 1.0; // training prefix; remainder is held out
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
    RunConfig c;
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    auto str = [&](const char* k, std::string& v) { if (kv.count(k)) v = kv[k]; };
    auto num = [&](const char* k, double& v) { if (kv.count(k)) v = std::stod(kv[k]); };
    auto integer = [&](const char* k, int& v) { if (kv.count(k)) v = std::stoi(kv[k]); };
    auto boolean = [&](const char* k, bool& v) {
        if (!kv.count(k)) return;
        const std::string& s = kv[k];
        if (s == "true" || s == "1") v = true;
        else if (s == "false" || s == "0") v = false;
        else throw DataError(std::string("config: boolean expected for ") + k);
    };
    str("data", c.data);
    boolean("data.states", c.data_has_states);
    str("synthetic.system", c.synthetic_system);
    num("synthetic.mu", c.mu);
    num("synthetic.fh_a", c.fh_a);
    num("synthetic.fh_b", c.fh_b);
    num("synthetic.fh_tau", c.fh_tau);
    num("synthetic.fh_current", c.fh_current);
    num("synthetic.omega", c.omega);
    num("synthetic.zeta", c.zeta);
    num("synthetic.duration", c.duration);
    num("synthetic.dt", c.dt);
    num("synthetic.noise_std", c.noise_std);
    num("forcing.offset", c.force_offset);
    num("forcing.amplitude", c.force_amplitude);
    num("forcing.omega", c.force_omega);
    num("forcing.phase", c.force_phase);
    boolean("synthetic.truth_states", c.truth_states);
    num("bank.pole", c.bank_pole);
    integer("bank.order", c.bank_order);
    integer("smoother.window", c.smoother_window);
    integer("smoother.degree", c.smoother_degree);
    integer("model.deg_e", c.deg_e);
    integer("model.deg_f_x", c.deg_f_x);
    integer("model.deg_f_u", c.deg_f_u);
    integer("model.deg_g", c.deg_g);
    str("fit.kind", c.kind);
    num("fit.lambda", c.lambda);
    num("fit.v_threshold", c.v_threshold);
    num("solver.gap_tol", c.gap_tol);
    num("solver.feas_tol", c.feas_tol);
    integer("solver.max_iters", c.max_iters);
    str("out", c.out);
    if (kv.count("seed")) c.seed = unsigned(std::stoul(kv["seed"]));
    num("horizon", c.horizon);
    num("split.train", c.train_fraction);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config file: " + path);
    return parse_config(is);
}

inline std::string canonical_text(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << c.data << '|' << c.data_has_states << '|' << c.synthetic_system << '|' << c.mu << '|'
       << c.fh_a << '|' << c.fh_b << '|' << c.fh_tau << '|' << c.fh_current << '|' << c.omega
       << '|' << c.zeta << '|' << c.duration << '|' << c.dt << '|' << c.noise_std << '|'
       << c.force_offset << '|' << c.force_amplitude << '|' << c.force_omega << '|'
       << c.force_phase << '|' << c.truth_states << '|' << c.bank_pole << '|' << c.bank_order
       << '|' << c.smoother_window << '|' << c.smoother_degree << '|' << c.deg_e << '|'
       << c.deg_f_x << '|' << c.deg_f_u << '|' << c.deg_g << '|' << c.kind << '|' << c.lambda
       << '|' << c.v_threshold << '|' << c.gap_tol << '|' << c.feas_tol << '|' << c.max_iters
       << '|' << c.horizon << '|' << c.train_fraction;
    return os.str();
}

inline std::uint64_t config_hash(const RunConfig& c) {
    // FNV-1a
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canonical_text(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline SyntheticConfig synthetic_from(const RunConfig& c) {
    SyntheticConfig s;
    if (c.synthetic_system == "van_der_pol") s.system = VanDerPol{c.mu};
    else if (c.synthetic_system == "fitzhugh_nagumo")
        s.system = FitzHughNagumo{c.fh_a, c.fh_b, c.fh_tau, c.fh_current};
    else if (c.synthetic_system == "linear_osc") s.system = LinearOsc{c.omega, c.zeta};
    else throw DataError("unknown synthetic system: " + c.synthetic_system);
    s.forcing = ForcingSpec{c.force_offset, c.force_amplitude, c.force_omega, c.force_phase};
    s.duration = c.duration;
    s.dt = c.dt;
    s.noise_std = c.noise_std;
    s.seed = c.seed;
    return s;
}

inline sdp::FitOptions fit_options_from(const RunConfig& c) {
    sdp::FitOptions fo;
    fo.kind = sdp::fit_kind_from(c.kind);
    fo.lambda = c.lambda;
    fo.v_threshold = c.v_threshold;
    fo.solver.gap_tol = c.gap_tol;
    fo.solver.feas_tol = c.feas_tol;
    fo.solver.max_iters = c.max_iters;
    return fo;
}

}  // namespace orbid

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "orbid/config.hpp"
#include "orbid/csv.hpp"
#include "orbid/sdp/fit.hpp"
#include "orbid/simulate.hpp"
#include "orbid/trajectory.hpp"
#include "orbid/verify.hpp"

namespace orbid::cli {

// exit codes: 0 ok, 1 usage, 2 data error, 3 solver failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitSolver = 3;

struct LoadedData {
    TrajectoryRecord record;
    std::optional<SyntheticResult> synth;
};

inline LoadedData load_data(const RunConfig& cfg) {
    LoadedData out;
    if (!cfg.data.empty()) {
        if (cfg.data_has_states) {
            out.record = load_record_csv(cfg.data);
        } else {
            RawSeries raw = load_csv(cfg.data);
            out.record = build_state(raw, {cfg.bank_pole, cfg.bank_order},
                                     {cfg.smoother_window, cfg.smoother_degree});
        }
        return out;
    }
    out.synth = gen_synthetic(synthetic_from(cfg));
    if (cfg.truth_states) {
        out.record = out.synth->truth;
    } else {
        out.record = build_state(out.synth->raw, {cfg.bank_pole, cfg.bank_order},
                                 {cfg.smoother_window, cfg.smoother_degree});
    }
    return out;
}

inline TrajectoryRecord record_prefix(const TrajectoryRecord& rec, Eigen::Index n) {
    TrajectoryRecord r;
    r.dt = rec.dt;
    r.x = rec.x.topRows(n);
    r.xdot = rec.xdot.topRows(n);
    r.xddot = rec.xddot.topRows(n);
    r.u = rec.u.topRows(n);
    r.y = rec.y.topRows(n);
    return r;
}

inline void write_traces_csv(const std::string& path, const ErrorMetrics& m, const SimResult& sim,
                             const TrajectoryRecord& ref) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open traces file for writing: " + path);
    os.precision(17);
    os << "t,y_model,y_ref,deviation,tau\n";
    for (Eigen::Index i = 0; i < m.times.size(); ++i) {
        const double t = m.times(i);
        Vec yref = orbid::detail::interp_row(ref.y, ref.dt, std::min(t, ref.duration()));
        os << t << ',' << sim.outputs(i, 0) << ',' << yref(0) << ',' << m.deviation(i) << ','
           << m.tau(i) << '\n';
    }
}

// Simulation-based metrics of a model against a reference record: open-loop
// run from the record's initial state with the recorded input.
struct EvalMetrics {
    SimResult sim;
    ErrorMetrics train;
    ErrorMetrics full;
    double train_T = 0.0;
    double val_sim_err = 0.0;
    double val_orb_err = 0.0;
    bool completed = false;
};

inline EvalMetrics evaluate_model(const PolyModelSpec& spec, const ModelCoefficients& coefs,
                                  const TrajectoryRecord& ref, double horizon,
                                  double train_fraction) {
    EvalMetrics em;
    const double T = ref.duration();
    if (horizon <= 0.0) horizon = T;
    const Eigen::Index steps = Eigen::Index(std::llround(horizon / ref.dt)) + 1;
    Mat u_ext(steps, ref.input_dim());
    for (Eigen::Index i = 0; i < steps; ++i) {
        const double t = ref.dt * double(i);
        u_ext.row(i) =
            orbid::detail::interp_row(ref.u, ref.dt, std::min(t, T)).transpose();
    }
    em.sim = simulate(spec, coefs, ref.x.row(0).transpose(), u_ext, ref.dt);
    em.completed = em.sim.status == SimStatus::completed;
    em.full = orbital_sim_error(em.sim, ref);

    em.train_T = std::clamp(train_fraction, 0.0, 1.0) * T;
    const Eigen::Index n_train =
        std::min<Eigen::Index>(ref.samples(), Eigen::Index(std::llround(em.train_T / ref.dt)) + 1);
    TrajectoryRecord train_ref = record_prefix(ref, std::max<Eigen::Index>(n_train, 3));
    em.train = orbital_sim_error(em.sim, train_ref);

    // held-out tail: same-time and orbital errors accumulated past the split
    if (n_train < ref.samples() && em.sim.samples() > n_train) {
        double acc_s = 0.0, acc_o = 0.0;
        double prev_s = 0.0, prev_o = 0.0;
        bool first = true;
        for (Eigen::Index i = n_train; i < em.full.times.size(); ++i) {
            const double vs = em.full.deviation_same_time(i) * em.full.deviation_same_time(i);
            const double vo = em.full.deviation(i) * em.full.deviation(i);
            if (!first) {
                acc_s += 0.5 * (prev_s + vs) * ref.dt;
                acc_o += 0.5 * (prev_o + vo) * ref.dt;
            }
            prev_s = vs;
            prev_o = vo;
            first = false;
        }
        em.val_sim_err = acc_s;
        em.val_orb_err = acc_o;
    }
    return em;
}

inline int cmd_synth(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out);
    auto gen = gen_synthetic(synthetic_from(cfg));
    write_csv(cfg.out + "/data.csv", gen.raw);
    write_csv(cfg.out + "/truth.csv", gen.truth);
    std::cout << "wrote " << cfg.out << "/data.csv and truth.csv (" << gen.raw.samples()
              << " rows)\n";
    return kExitOk;
}

inline int cmd_fit(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out);
    LoadedData data = load_data(cfg);
    const TrajectoryRecord& full = data.record;

    const Eigen::Index n_train = std::max<Eigen::Index>(
        3, std::min<Eigen::Index>(full.samples(),
                                  Eigen::Index(std::llround(std::clamp(cfg.train_fraction, 0.0, 1.0) *
                                                            double(full.samples() - 1))) +
                                      1));
    TrajectoryRecord train = record_prefix(full, n_train);

    auto spec = PolyModelSpec::dense(int(train.state_dim()), int(train.input_dim()),
                                     int(train.output_dim()), cfg.deg_e, cfg.deg_f_x,
                                     cfg.deg_f_u, cfg.deg_g);
    sdp::FitOptions fo = fit_options_from(cfg);
    auto res = sdp::fit(spec, train, fo);

    res.report.config_hash = config_hash(cfg);
    res.report.seed = cfg.seed;

    if (res.report.status == "optimal") {
        save_model(cfg.out + "/model.txt", spec, res.coefs);
        {
            auto samples = freeze_samples(spec, res.coefs, train, res.frames);
            auto breakdown = cost_breakdown(samples, res.metric);
            std::ofstream os(cfg.out + "/costs.csv");
            write_breakdown_csv(os, breakdown);
        }
        EvalMetrics em = evaluate_model(spec, res.coefs, full, cfg.horizon, cfg.train_fraction);
        res.report.train_sim_err = em.train.sim_err;
        res.report.train_orb_err = em.train.orbital_err;
        res.report.val_sim_err = em.val_sim_err;
        res.report.val_orb_err = em.val_orb_err;
        if (fo.kind == sdp::FitKind::trie) {
            auto vr = variational_run(spec, res.coefs, train, res.metric);
            res.report.chain_lin_orbital = vr.lin_err_orbital;
            res.report.chain_int_trie = res.report.cost_trie;
            res.report.chain_int_trie_hat = res.report.cost_trie_hat;
        }
    }
    sdp::write_report(cfg.out + "/report.txt", res.report);
    std::cout << "fit kind=" << res.report.kind << " status=" << res.report.status
              << " objective=" << res.report.objective << " -> " << cfg.out << "/report.txt\n";
    return res.report.status == "optimal" ? kExitOk : kExitSolver;
}

inline int cmd_eval(const RunConfig& cfg, const std::string& model_path) {
    std::filesystem::create_directories(cfg.out);
    PolyModelSpec spec;
    ModelCoefficients coefs;
    load_model(model_path, spec, coefs);
    LoadedData data = load_data(cfg);
    if (data.record.state_dim() != spec.n || data.record.output_dim() != spec.p)
        throw DataError("eval: model and data dimensions are incompatible");

    EvalMetrics em = evaluate_model(spec, coefs, data.record, cfg.horizon, cfg.train_fraction);
    write_traces_csv(cfg.out + "/traces.csv", em.full, em.sim, data.record);

    std::ofstream os(cfg.out + "/eval_report.txt");
    os.precision(17);
    os << "orbid-eval-report v1\n";
    os << "model " << model_path << '\n';
    os << "status "
       << (em.sim.status == SimStatus::completed
               ? "completed"
               : em.sim.status == SimStatus::diverged ? "diverged" : "singular_E")
       << '\n';
    os << "t_stop " << em.sim.t_stop << '\n';
    os << "train_sim_err " << em.train.sim_err << '\n';
    os << "train_orb_err " << em.train.orbital_err << '\n';
    os << "val_sim_err " << em.val_sim_err << '\n';
    os << "val_orb_err " << em.val_orb_err << '\n';
    os << "full_sim_err " << em.full.sim_err << '\n';
    os << "full_orb_err " << em.full.orbital_err << '\n';
    os << "config_hash " << config_hash(cfg) << '\n';
    os << "seed " << cfg.seed << '\n';
    std::cout << "eval sim_err=" << em.full.sim_err << " orb_err=" << em.full.orbital_err
              << " -> " << cfg.out << "/traces.csv\n";
    return kExitOk;
}

inline int cmd_verify(bool flip_hook, std::ostream& os) {
    auto results = verify::run_default_suite(flip_hook);
    int passed = 0;
    for (const auto& r : results) {
        os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " — " << r.detail << '\n';
        if (r.pass) ++passed;
    }
    os << "VERIFY " << passed << "/" << results.size() << " checks passed\n";
    return passed == int(results.size()) ? kExitOk : kExitSolver;
}

}  // namespace orbid::cli

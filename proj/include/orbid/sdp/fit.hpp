#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "orbid/geometry.hpp"
#include "orbid/model.hpp"
#include "orbid/objective.hpp"
#include "orbid/sdp/lmi.hpp"
#include "orbid/sdp/program.hpp"
#include "orbid/sdp/solver.hpp"
#include "orbid/sdp/sos.hpp"
#include "orbid/types.hpp"

namespace orbid::sdp {

enum class FitKind { eq, rie, trie };

inline const char* to_string(FitKind k) {
    switch (k) {
        case FitKind::eq: return "eq";
        case FitKind::rie: return "rie";
        case FitKind::trie: return "trie";
    }
    return "?";
}

inline FitKind fit_kind_from(const std::string& s) {
    if (s == "eq") return FitKind::eq;
    if (s == "rie") return FitKind::rie;
    if (s == "trie") return FitKind::trie;
    throw DataError("unknown fit kind: " + s);
}

struct FitOptions {
    FitKind kind = FitKind::trie;
    double lambda = 0.0;       // l1 shrinkage on the coefficients
    double v_threshold = 0.0;  // degeneracy threshold; <= 0 selects the default rule
    bool dt_weighted = true;   // slack sum approximates the time integral
    double p_floor = 1e-6;     // P >= p_floor * I
    SolverOptions solver;
    LmiOptions lmi;  // carries the sign-flip verification hook
    // optional pins (flat coefficient index, value), enforced as equalities
    std::vector<std::pair<Eigen::Index, double>> pin_coefficients;
};

// Variable layout of the assembled program.
struct AssembleInfo {
    Eigen::Index nc = 0;          // model coefficients at [0, nc)
    Eigen::Index p_base = -1;     // vech(P), trie/rie only
    Eigen::Index mu_base = -1;    // free Gram directions
    Eigen::Index slack_base = 0;  // one slack per sample
    Eigen::Index l1_base = -1;    // epigraph variables when lambda > 0
    Eigen::Index num_vars = 0;
    Eigen::Index samples = 0;
    double slack_weight = 1.0;
    SosCertificate sos;
};

inline ConicProgram assemble(const PolyModelSpec& spec, const TrajectoryRecord& record,
                             const std::vector<TransverseFrame>& frames,
                             const FitOptions& options, AssembleInfo& info) {
    spec.validate();
    record.validate();
    if (options.kind == FitKind::trie && frames.size() != size_t(record.samples()))
        throw DataError("assemble: frame count mismatch");

    const Eigen::Index N = record.samples();
    const Eigen::Index nc = spec.num_coefficients();
    const Eigen::Index nP = vech_size(spec.n);
    const bool metric_fit = options.kind != FitKind::eq;

    info = AssembleInfo{};
    info.nc = nc;
    info.samples = N;
    info.sos = build_sos_block(spec);
    Eigen::Index next = nc;
    if (metric_fit) { info.p_base = next; next += nP; }
    info.mu_base = next;
    next += info.sos.num_free;
    info.slack_base = next;
    next += N;
    if (options.lambda > 0.0) { info.l1_base = next; next += nc; }
    info.num_vars = next;
    info.slack_weight = options.dt_weighted ? record.dt : 1.0;

    ConicProgram prog;
    prog.num_vars = info.num_vars;
    prog.objective = Vec::Zero(info.num_vars);
    for (Eigen::Index i = 0; i < N; ++i)
        prog.objective(info.slack_base + i) = info.slack_weight;
    if (options.lambda > 0.0)
        for (Eigen::Index k = 0; k < nc; ++k) prog.objective(info.l1_base + k) = options.lambda;

    auto maps = affine_maps(spec, record);

    LmiLayout layout;
    layout.coef_base = 0;
    layout.p_base = metric_fit ? info.p_base : -1;
    for (Eigen::Index i = 0; i < N; ++i) {
        layout.slack_var = info.slack_base + i;
        switch (options.kind) {
            case FitKind::trie:
                prog.blocks.push_back(
                    build_trie_lmi(spec, maps[size_t(i)], frames[size_t(i)], layout, options.lmi));
                break;
            case FitKind::rie:
                prog.blocks.push_back(build_rie_lmi(spec, maps[size_t(i)], layout, options.lmi));
                break;
            case FitKind::eq:
                prog.blocks.push_back(
                    build_eq_epigraph(spec, maps[size_t(i)], 0, layout.slack_var));
                break;
        }
    }
    prog.blocks.push_back(emit_sos_block(spec, info.sos, 0, info.mu_base));
    if (metric_fit) {
        // P - p_floor I >= 0
        PsdBlock pb;
        pb.dim = spec.n;
        pb.add(-1, -options.p_floor * Mat::Identity(spec.n, spec.n));
        for (Eigen::Index q = 0; q < nP; ++q)
            pb.add(int(info.p_base + q), vech_basis_matrix(q, spec.n));
        prog.blocks.push_back(std::move(pb));
    }
    if (options.lambda > 0.0) {
        for (Eigen::Index k = 0; k < nc; ++k) {
            PsdBlock rb;
            rb.dim = 2;
            Mat rr = Mat::Identity(2, 2);
            rb.add(int(info.l1_base + k), rr);
            Mat cc = Mat::Zero(2, 2);
            cc(0, 1) = cc(1, 0) = 1.0;
            rb.add(int(k), cc);
            prog.blocks.push_back(std::move(rb));
        }
    }
    for (const auto& [idx, val] : options.pin_coefficients) {
        LinearEquality eq;
        eq.coeffs = {{int(idx), 1.0}};
        eq.rhs = val;
        prog.equalities.push_back(std::move(eq));
    }
    return prog;
}

// Fit summary written next to the model artifacts; the simulation metrics
// are filled by the evaluation stage.
struct FitReport {
    std::string kind;
    std::string status;
    double objective = std::numeric_limits<double>::quiet_NaN();  // sum of slacks (weighted)
    double solver_objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double assemble_seconds = 0.0;
    double solve_seconds = 0.0;
    Eigen::Index samples = 0;
    Eigen::Index degenerate_samples = 0;
    Eigen::Index num_vars = 0;
    double cost_eq = std::numeric_limits<double>::quiet_NaN();
    double cost_rie = std::numeric_limits<double>::quiet_NaN();
    double cost_trie = std::numeric_limits<double>::quiet_NaN();
    double cost_trie_hat = std::numeric_limits<double>::quiet_NaN();
    double slack_consistency = std::numeric_limits<double>::quiet_NaN();
    double train_sim_err = std::numeric_limits<double>::quiet_NaN();
    double train_orb_err = std::numeric_limits<double>::quiet_NaN();
    double val_sim_err = std::numeric_limits<double>::quiet_NaN();
    double val_orb_err = std::numeric_limits<double>::quiet_NaN();
    double chain_lin_orbital = std::numeric_limits<double>::quiet_NaN();
    double chain_int_trie = std::numeric_limits<double>::quiet_NaN();
    double chain_int_trie_hat = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t config_hash = 0;
    unsigned seed = 0;
};

inline void write_report(std::ostream& os, const FitReport& r) {
    os.precision(17);
    os << "orbid-fit-report v1\n";
    os << "kind " << r.kind << '\n';
    os << "status " << r.status << '\n';
    os << "objective " << r.objective << '\n';
    os << "solver_objective " << r.solver_objective << '\n';
    os << "iterations " << r.iterations << '\n';
    os << "assemble_seconds " << r.assemble_seconds << '\n';
    os << "solve_seconds " << r.solve_seconds << '\n';
    os << "samples " << r.samples << '\n';
    os << "degenerate_samples " << r.degenerate_samples << '\n';
    os << "num_vars " << r.num_vars << '\n';
    os << "cost_eq " << r.cost_eq << '\n';
    os << "cost_rie " << r.cost_rie << '\n';
    os << "cost_trie " << r.cost_trie << '\n';
    os << "cost_trie_hat " << r.cost_trie_hat << '\n';
    os << "slack_consistency " << r.slack_consistency << '\n';
    os << "train_sim_err " << r.train_sim_err << '\n';
    os << "train_orb_err " << r.train_orb_err << '\n';
    os << "val_sim_err " << r.val_sim_err << '\n';
    os << "val_orb_err " << r.val_orb_err << '\n';
    os << "chain_lin_orbital " << r.chain_lin_orbital << '\n';
    os << "chain_int_trie " << r.chain_int_trie << '\n';
    os << "chain_int_trie_hat " << r.chain_int_trie_hat << '\n';
    os << "config_hash " << r.config_hash << '\n';
    os << "seed " << r.seed << '\n';
}

inline void write_report(const std::string& path, const FitReport& r) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open report file for writing: " + path);
    write_report(os, r);
}

struct FitResult {
    ModelCoefficients coefs;
    Metric metric;
    FitReport report;
    ConicSolution solution;
    std::vector<TransverseFrame> frames;
};

// End-to-end identification: assemble the convex program for the requested
// error bound, solve it, extract coefficients and metric, and evaluate the
// per-sample costs of the solution.
inline FitResult fit(const PolyModelSpec& spec, const TrajectoryRecord& record,
                     const FitOptions& options) {
    using clock = std::chrono::steady_clock;
    FitResult res;
    res.frames = frames_along(record, options.v_threshold);

    const auto t0 = clock::now();
    AssembleInfo info;
    ConicProgram prog = assemble(spec, record, res.frames, options, info);
    const auto t1 = clock::now();
    res.solution = solve(prog, options.solver);
    const auto t2 = clock::now();

    res.coefs = unflatten(spec, res.solution.x.head(info.nc));
    if (options.kind != FitKind::eq && res.solution.status == SolveStatus::optimal) {
        Mat P = from_vech(res.solution.x.segment(info.p_base, vech_size(spec.n)), spec.n);
        res.metric = Metric::from_P(P);
    } else {
        res.metric = Metric::identity(spec.n);
    }

    FitReport& rep = res.report;
    rep.kind = to_string(options.kind);
    rep.status = to_string(res.solution.status);
    rep.iterations = res.solution.iterations;
    rep.assemble_seconds = std::chrono::duration<double>(t1 - t0).count();
    rep.solve_seconds = std::chrono::duration<double>(t2 - t1).count();
    rep.samples = info.samples;
    rep.num_vars = info.num_vars;
    for (const auto& f : res.frames)
        if (f.degenerate) ++rep.degenerate_samples;
    rep.solver_objective = res.solution.objective;
    rep.objective = res.solution.x.segment(info.slack_base, info.samples).sum() * info.slack_weight;

    if (res.solution.status == SolveStatus::optimal) {
        rep.cost_eq = total_cost(record, res.frames, spec, res.coefs, res.metric, CostKind::eq,
                                 options.dt_weighted);
        rep.cost_rie = total_cost(record, res.frames, spec, res.coefs, res.metric, CostKind::rie,
                                  options.dt_weighted);
        rep.cost_trie = total_cost(record, res.frames, spec, res.coefs, res.metric,
                                   CostKind::trie, options.dt_weighted);
        rep.cost_trie_hat = total_cost(record, res.frames, spec, res.coefs, res.metric,
                                       CostKind::trie_hat, options.dt_weighted);
        double ref = rep.cost_trie_hat;
        if (options.kind == FitKind::eq) ref = rep.cost_eq;
        if (options.kind == FitKind::rie)
            ref = total_cost(record, res.frames, spec, res.coefs, res.metric, CostKind::rie_hat,
                             options.dt_weighted);
        rep.slack_consistency = std::abs(rep.objective - ref) / (1.0 + std::abs(rep.objective));
    }
    return res;
}

}  // namespace orbid::sdp

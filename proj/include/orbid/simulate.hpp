#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "orbid/model.hpp"
#include "orbid/objective.hpp"
#include "orbid/types.hpp"

namespace orbid {

enum class SimStatus { completed, diverged, singular_E };

struct SimResult {
    Vec times;
    Mat states;   // N x n, valid rows up to the status time
    Mat outputs;  // N x p
    SimStatus status = SimStatus::completed;
    double t_stop = 0.0;  // escape / singularity time when not completed

    Eigen::Index samples() const { return times.size(); }
};

struct SimOptions {
    double divergence_radius = 1e6;
    double cond_limit = 1e12;
    int substeps = 1;  // internal RK4 steps per output step
    // optional additive forcing on the state equation: E(x) xdot = f(x,u) + inject(t)
    std::function<Vec(double)> inject;
};

namespace detail {

// linear interpolation of a sampled multichannel signal (rows = samples)
inline Vec interp_row(const Mat& series, double dt, double t) {
    const Eigen::Index N = series.rows();
    if (N == 1) return series.row(0).transpose();
    double s = t / dt;
    if (s <= 0.0) return series.row(0).transpose();
    if (s >= double(N - 1)) return series.row(N - 1).transpose();
    const Eigen::Index i = Eigen::Index(std::floor(s));
    const double w = s - double(i);
    return ((1.0 - w) * series.row(i) + w * series.row(i + 1)).transpose();
}

// Solves E(x) k = rhs; returns false when E is numerically singular.
inline bool implicit_rate(const PolyModelSpec& spec, const ModelCoefficients& c,
                          const Vec& x, const Vec& rhs, double cond_limit, Vec& k) {
    Mat E = jacobian_e(spec, c, x);
    Eigen::PartialPivLU<Mat> lu(E);
    Mat Einv = lu.inverse();
    if (!Einv.allFinite()) return false;
    const double cond = E.cwiseAbs().colwise().sum().maxCoeff() *
                        Einv.cwiseAbs().colwise().sum().maxCoeff();
    if (!(cond < cond_limit)) return false;
    k = lu.solve(rhs);
    return k.allFinite();
}

}  // namespace detail

// Fixed-step RK4 integration of the implicit model xdot = E(x)^{-1} f(x,u),
// with the input linearly interpolated between its samples. u_series rows are
// samples on the same dt grid as the requested output.
inline SimResult simulate(const PolyModelSpec& spec, const ModelCoefficients& coefs,
                          const Vec& x0, const Mat& u_series, double dt,
                          const SimOptions& opts = {}) {
    coefs.validate(spec);
    if (x0.size() != spec.n) throw DataError("simulate: x0 dimension mismatch");
    if (u_series.cols() != spec.m) throw DataError("simulate: input dimension mismatch");
    if (!(dt > 0.0)) throw DataError("simulate: dt must be > 0");

    const Eigen::Index N = u_series.rows();
    SimResult res;
    res.times = Vec::LinSpaced(N, 0.0, dt * double(N - 1));
    res.states = Mat::Zero(N, spec.n);
    res.outputs = Mat::Zero(N, spec.p);

    auto rate = [&](double t, const Vec& x, Vec& k) -> bool {
        Vec rhs = eval_f(spec, coefs, x, detail::interp_row(u_series, dt, t));
        if (opts.inject) rhs += opts.inject(t);
        return detail::implicit_rate(spec, coefs, x, rhs, opts.cond_limit, k);
    };

    Vec x = x0;
    const double h = dt / double(opts.substeps < 1 ? 1 : opts.substeps);
    const int sub = opts.substeps < 1 ? 1 : opts.substeps;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double ti = res.times(i);
        res.states.row(i) = x.transpose();
        res.outputs.row(i) = eval_g(spec, coefs, x, detail::interp_row(u_series, dt, ti)).transpose();
        if (x.norm() > opts.divergence_radius) {
            res.status = SimStatus::diverged;
            res.t_stop = ti;
            res.times.conservativeResize(i + 1);
            res.states.conservativeResize(i + 1, Eigen::NoChange);
            res.outputs.conservativeResize(i + 1, Eigen::NoChange);
            return res;
        }
        if (i + 1 == N) break;
        for (int ss = 0; ss < sub; ++ss) {
            const double t = ti + h * double(ss);
            Vec k1, k2, k3, k4;
            bool ok = rate(t, x, k1) &&
                      rate(t + 0.5 * h, x + 0.5 * h * k1, k2) &&
                      rate(t + 0.5 * h, x + 0.5 * h * k2, k3) &&
                      rate(t + h, x + h * k3, k4);
            if (!ok) {
                res.status = SimStatus::singular_E;
                res.t_stop = t;
                res.times.conservativeResize(i + 1);
                res.states.conservativeResize(i + 1, Eigen::NoChange);
                res.outputs.conservativeResize(i + 1, Eigen::NoChange);
                return res;
            }
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!x.allFinite()) {
                res.status = SimStatus::diverged;
                res.t_stop = t;
                res.times.conservativeResize(i + 1);
                res.states.conservativeResize(i + 1, Eigen::NoChange);
                res.outputs.conservativeResize(i + 1, Eigen::NoChange);
                return res;
            }
        }
    }
    res.status = SimStatus::completed;
    res.t_stop = res.times(N - 1);
    return res;
}

// Simulation error E = int |y - y_ref|^2 dt by trapezoidal quadrature on the
// reference grid, over the overlapping horizon. Model output is interpolated.
inline double sim_error(const SimResult& sim, const TrajectoryRecord& ref) {
    if (sim.outputs.cols() != ref.output_dim())
        throw DataError("sim_error: output dimension mismatch");
    const double t_end = std::min(sim.times(sim.samples() - 1), ref.duration());
    const Eigen::Index M = Eigen::Index(std::floor(t_end / ref.dt + 0.5)) + 1;
    const double sim_dt = sim.samples() > 1 ? sim.times(1) - sim.times(0) : ref.dt;
    double acc = 0.0;
    double prev = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
        const double t = ref.dt * double(i);
        Vec ym = detail::interp_row(sim.outputs, sim_dt, t);
        const double v = (ym - ref.y.row(i).transpose()).squaredNorm();
        if (i > 0) acc += 0.5 * (prev + v) * ref.dt;
        prev = v;
    }
    return acc;
}

// Orbital metrics: time map tau(t), deviation traces, and the two integrated
// errors. tau is the globally nearest reference sample in state space,
// refined by parabolic interpolation of the squared distance.
struct ErrorMetrics {
    double sim_err = 0.0;       // same-time comparison
    double orbital_err = 0.0;   // nearest-orbit-point comparison
    Vec times;                  // sim grid
    Vec tau;                    // matched reference times
    Vec deviation;              // |y(t) - y_ref(tau(t))|
    Vec deviation_same_time;    // |y(t) - y_ref(t)| (zero past the ref horizon)
};

inline ErrorMetrics orbital_sim_error(const SimResult& sim, const TrajectoryRecord& ref) {
    if (sim.outputs.cols() != ref.output_dim() || sim.states.cols() != ref.state_dim())
        throw DataError("orbital_sim_error: dimension mismatch");
    const Eigen::Index Ns = sim.samples();
    const Eigen::Index Nr = ref.samples();
    ErrorMetrics m;
    m.times = sim.times;
    m.tau.resize(Ns);
    m.deviation.resize(Ns);
    m.deviation_same_time = Vec::Zero(Ns);
    const double sim_dt = Ns > 1 ? sim.times(1) - sim.times(0) : ref.dt;

    double acc_orb = 0.0, acc_sim = 0.0;
    double prev_orb = 0.0, prev_sim = 0.0;
    for (Eigen::Index i = 0; i < Ns; ++i) {
        const Vec xs = sim.states.row(i).transpose();
        Eigen::Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < Nr; ++j) {
            const double d = (ref.x.row(j).transpose() - xs).squaredNorm();
            if (d < best_d) { best_d = d; best = j; }  // strict: ties keep smallest tau
        }
        double tau = ref.dt * double(best);
        if (best > 0 && best + 1 < Nr) {
            const double dm = (ref.x.row(best - 1).transpose() - xs).squaredNorm();
            const double dp = (ref.x.row(best + 1).transpose() - xs).squaredNorm();
            const double denom = dm - 2.0 * best_d + dp;
            if (denom > 1e-300) {
                double delta = 0.5 * (dm - dp) / denom;
                delta = std::clamp(delta, -1.0, 1.0);
                tau += delta * ref.dt;
            }
        }
        m.tau(i) = tau;
        Vec yref_tau = detail::interp_row(ref.y, ref.dt, tau);
        const Vec ys = sim.outputs.row(i).transpose();
        const double dev = (ys - yref_tau).norm();
        m.deviation(i) = dev;
        const double vo = dev * dev;
        double vs = 0.0;
        if (sim.times(i) <= ref.duration() + 0.5 * ref.dt) {
            Vec yref_t = detail::interp_row(ref.y, ref.dt, sim.times(i));
            m.deviation_same_time(i) = (ys - yref_t).norm();
            vs = m.deviation_same_time(i) * m.deviation_same_time(i);
        }
        if (i > 0) {
            acc_orb += 0.5 * (prev_orb + vo) * sim_dt;
            acc_sim += 0.5 * (prev_sim + vs) * sim_dt;
        }
        prev_orb = vo;
        prev_sim = vs;
    }
    m.orbital_err = acc_orb;
    m.sim_err = acc_sim;
    return m;
}

// Result of integrating the linearized deviation dynamics along the data:
//   d/dt [E(x(t)) Delta] = F(x(t),u(t)) Delta + eps_x(t),  Delta(0) = 0.
struct VariationalResult {
    Mat Delta;       // N x n
    Mat Delta_bar;   // N x n, Pi Delta
    Vec V;           // storage |E Pi Delta|_Q^2 + |pi Delta_bar|^2 along the run
    Vec out_err;     // per-sample |G Delta + eps_y|^2
    Vec out_err_bar; // per-sample |G Delta_bar + eps_y|^2
    double lin_err = 0.0;          // int |G Delta + eps_y|^2 dt
    double lin_err_orbital = 0.0;  // int |G Delta_bar + eps_y|^2 dt
};

inline VariationalResult variational_run(const PolyModelSpec& spec, const ModelCoefficients& coefs,
                                         const TrajectoryRecord& rec, const Metric& metric) {
    coefs.validate(spec);
    rec.validate();
    if (rec.state_dim() != spec.n) throw DataError("variational_run: dimension mismatch");
    const Eigen::Index N = rec.samples();
    const double dt = rec.dt;

    Mat eps_x, eps_y;
    equation_errors(spec, coefs, rec, eps_x, eps_y);

    // Integrate w = E(x(t)) Delta:  wdot = F Delta + eps_x, Delta = E^{-1} w.
    auto rate = [&](double t, const Vec& w, Vec& wdot) -> bool {
        Vec x = detail::interp_row(rec.x, dt, t);
        Vec u = detail::interp_row(rec.u, dt, t);
        Vec ex = detail::interp_row(eps_x, dt, t);
        Mat E = jacobian_e(spec, coefs, x);
        Eigen::PartialPivLU<Mat> lu(E);
        Vec Delta = lu.solve(w);
        if (!Delta.allFinite()) return false;
        wdot = jacobian_f_x(spec, coefs, x, u) * Delta + ex;
        return wdot.allFinite();
    };

    VariationalResult r;
    r.Delta = Mat::Zero(N, spec.n);
    r.Delta_bar = Mat::Zero(N, spec.n);
    r.V = Vec::Zero(N);
    r.out_err = Vec::Zero(N);
    r.out_err_bar = Vec::Zero(N);

    Vec w = Vec::Zero(spec.n);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double t = dt * double(i);
        Vec x = rec.x.row(i).transpose();
        Vec u = rec.u.row(i).transpose();
        Mat E = jacobian_e(spec, coefs, x);
        Eigen::PartialPivLU<Mat> lu(E);
        Vec Delta = lu.solve(w);
        if (!Delta.allFinite()) throw DataError("variational_run: singular E along record");
        r.Delta.row(i) = Delta.transpose();

        const Vec xd = rec.xdot.row(i).transpose();
        const double s2 = xd.squaredNorm();
        Vec Delta_bar;
        if (s2 > 0.0) Delta_bar = Delta - xd * (xd.dot(Delta) / s2);
        else Delta_bar = Delta;
        r.Delta_bar.row(i) = Delta_bar.transpose();

        Vec v = E * Delta_bar;  // E Pi Delta
        r.V(i) = v.dot(metric.Q * v);
        Mat G = jacobian_g_x(spec, coefs, x, u);
        r.out_err(i) = (G * Delta + eps_y.row(i).transpose()).squaredNorm();
        r.out_err_bar(i) = (G * Delta_bar + eps_y.row(i).transpose()).squaredNorm();

        if (i + 1 == N) break;
        Vec k1, k2, k3, k4;
        bool ok = rate(t, w, k1) &&
                  rate(t + 0.5 * dt, w + 0.5 * dt * k1, k2) &&
                  rate(t + 0.5 * dt, w + 0.5 * dt * k2, k3) &&
                  rate(t + dt, w + dt * k3, k4);
        if (!ok) throw DataError("variational_run: singular E along record");
        w += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    for (Eigen::Index i = 0; i + 1 < N; ++i) {
        r.lin_err += 0.5 * (r.out_err(i) + r.out_err(i + 1)) * dt;
        r.lin_err_orbital += 0.5 * (r.out_err_bar(i) + r.out_err_bar(i + 1)) * dt;
    }
    return r;
}

}  // namespace orbid

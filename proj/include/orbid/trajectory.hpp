#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "orbid/model.hpp"
#include "orbid/simulate.hpp"
#include "orbid/types.hpp"

namespace orbid {

// --- smoothing / differentiation --------------------------------------------

namespace detail {

// Least-squares polynomial filter weights for a window of `w` samples with
// the evaluation point at index `pos`. Row 0 of the result reproduces the
// fitted value, row 1 its derivative in window-index units.
inline Mat lsq_filter(int w, int degree, int pos) {
    Mat V(w, degree + 1);
    for (int r = 0; r < w; ++r) {
        double s = double(r - pos);
        double pw = 1.0;
        for (int q = 0; q <= degree; ++q) { V(r, q) = pw; pw *= s; }
    }
    // rows of pinv(V) give the polynomial coefficients as linear filters
    Mat pinv = (V.transpose() * V).ldlt().solve(V.transpose());
    Mat out(2, w);
    out.row(0) = pinv.row(0);
    out.row(1) = pinv.row(1);
    return out;
}

}  // namespace detail

// Noncausal local least-squares fit of one uniformly sampled channel: the
// smoothed value and the analytic derivative of the local fit, both at the
// sample position. Endpoints use one-sided windows so length is preserved.
inline void smooth_and_differentiate(const Vec& channel, double dt, const SmootherConfig& cfg,
                                     Vec& smoothed, Vec& derivative) {
    cfg.validate();
    const Eigen::Index N = channel.size();
    if (N < cfg.window)
        throw DataError("smoother: window larger than the number of samples");
    const int w = cfg.window;
    const int half = w / 2;
    smoothed.resize(N);
    derivative.resize(N);
    // one filter per possible position of the sample inside its window
    std::vector<Mat> filters(static_cast<size_t>(w));
    for (int pos = 0; pos < w; ++pos)
        filters[size_t(pos)] = detail::lsq_filter(w, cfg.poly_degree, pos);
    for (Eigen::Index i = 0; i < N; ++i) {
        Eigen::Index start = i - half;
        if (start < 0) start = 0;
        if (start + w > N) start = N - w;
        const int pos = int(i - start);
        const Mat& f = filters[size_t(pos)];
        double val = 0.0, der = 0.0;
        for (int r = 0; r < w; ++r) {
            val += f(0, r) * channel(start + r);
            der += f(1, r) * channel(start + r);
        }
        smoothed(i) = val;
        derivative(i) = der / dt;
    }
}

// --- Laguerre filter bank ----------------------------------------------------

// State-space matrices of the identical-pole cascade with unit DC gain per
// stage: z1 = a/(s+a) v, z_i = ((a-s)/(s+a)) z_{i-1}.
inline void laguerre_state_space(const LaguerreBank& bank, Mat& A, Vec& B) {
    bank.validate();
    const int k = bank.order;
    const double a = bank.pole;
    A = Mat::Zero(k, k);
    B = Vec::Zero(k);
    for (int i = 0; i < k; ++i) {
        A(i, i) = -a;
        for (int j = 0; j < i; ++j)
            A(i, j) = 2.0 * a * ((i - 1 - j) % 2 == 0 ? 1.0 : -1.0);
        B(i) = a * (i % 2 == 0 ? 1.0 : -1.0);
    }
}

// Filter a scalar series through the bank by exact discretization of the LTI
// cascade over each step, treating the input as linear between samples, and
// return the states plus their analytic rates zdot = A z + B v.
inline void laguerre_states(const Vec& channel, double dt, const LaguerreBank& bank,
                            Mat& states, Mat& rates) {
    bank.validate();
    if (!(dt > 0.0)) throw DataError("laguerre_states: dt must be > 0");
    const int k = bank.order;
    const Eigen::Index N = channel.size();
    Mat A;
    Vec B;
    laguerre_state_space(bank, A, B);

    // Van Loan blocks: exp([[A,B,0],[0,0,1],[0,0,0]] dt) yields Phi and the
    // zero-order / first-order input convolution integrals.
    Mat M = Mat::Zero(k + 2, k + 2);
    M.topLeftCorner(k, k) = A;
    M.block(0, k, k, 1) = B;
    M(k, k + 1) = 1.0;
    Mat Me = (M * dt).exp();
    Mat Phi = Me.topLeftCorner(k, k);
    Vec G0 = Me.block(0, k, k, 1);      // int exp(A(dt-s)) B ds
    Vec G1 = Me.block(0, k + 1, k, 1);  // int exp(A(dt-s)) B s ds

    states = Mat::Zero(N, k);
    rates = Mat::Zero(N, k);
    Vec z = Vec::Zero(k);
    for (Eigen::Index i = 0; i < N; ++i) {
        states.row(i) = z.transpose();
        rates.row(i) = (A * z + B * channel(i)).transpose();
        if (i + 1 == N) break;
        z = Phi * z + G0 * channel(i) + (G1 / dt) * (channel(i + 1) - channel(i));
    }
}

// --- resampling ---------------------------------------------------------------

inline bool is_uniform(const Vec& times, double rel_tol = 1e-9) {
    const Eigen::Index N = times.size();
    if (N < 2) return true;
    const double dt = (times(N - 1) - times(0)) / double(N - 1);
    for (Eigen::Index i = 0; i + 1 < N; ++i)
        if (std::abs(times(i + 1) - times(i) - dt) > rel_tol * dt) return false;
    return true;
}

// Linear interpolation onto a uniform grid with the same span and count.
inline RawSeries resample_uniform(const RawSeries& raw) {
    raw.validate();
    const Eigen::Index N = raw.samples();
    if (is_uniform(raw.times)) return raw;
    RawSeries out;
    const double t0 = raw.times(0);
    const double dt = (raw.times(N - 1) - t0) / double(N - 1);
    out.times = Vec::LinSpaced(N, t0, raw.times(N - 1));
    out.inputs.resize(N, raw.input_dim());
    out.outputs.resize(N, raw.output_dim());
    Eigen::Index j = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double t = out.times(i);
        while (j + 2 < N && raw.times(j + 1) <= t) ++j;
        const double span = raw.times(j + 1) - raw.times(j);
        const double w = std::clamp((t - raw.times(j)) / span, 0.0, 1.0);
        out.inputs.row(i) = (1.0 - w) * raw.inputs.row(j) + w * raw.inputs.row(j + 1);
        out.outputs.row(i) = (1.0 - w) * raw.outputs.row(j) + w * raw.outputs.row(j + 1);
    }
    return out;
}

// --- state construction --------------------------------------------------------

// State vector from input/output history: smoothed outputs followed by the
// Laguerre states of each (smoothed) output channel; n = p + k*p. Rates come
// from the smoother derivative and the analytic bank equations; xddot from
// re-applying the smoothing differentiator to the xdot channels.
inline TrajectoryRecord build_state(const RawSeries& raw_in, const LaguerreBank& bank,
                                    const SmootherConfig& cfg) {
    bank.validate();
    cfg.validate();
    RawSeries raw = resample_uniform(raw_in);
    const Eigen::Index N = raw.samples();
    if (N < 3) throw DataError("build_state: need at least 3 samples");
    const double dt = (raw.times(N - 1) - raw.times(0)) / double(N - 1);
    const Eigen::Index p = raw.output_dim();
    const int k = bank.order;
    const Eigen::Index n = p + Eigen::Index(k) * p;

    TrajectoryRecord rec;
    rec.dt = dt;
    rec.x.resize(N, n);
    rec.xdot.resize(N, n);
    rec.xddot.resize(N, n);
    rec.u = raw.inputs;
    rec.y = raw.outputs;

    for (Eigen::Index c = 0; c < p; ++c) {
        Vec ys, yd;
        smooth_and_differentiate(raw.outputs.col(c), dt, cfg, ys, yd);
        rec.x.col(c) = ys;
        rec.xdot.col(c) = yd;
        Mat z, zdot;
        laguerre_states(ys, dt, bank, z, zdot);
        for (int j = 0; j < k; ++j) {
            rec.x.col(p + c * k + j) = z.col(j);
            rec.xdot.col(p + c * k + j) = zdot.col(j);
        }
    }
    for (Eigen::Index c = 0; c < n; ++c) {
        Vec dummy, dd;
        smooth_and_differentiate(rec.xdot.col(c), dt, cfg, dummy, dd);
        rec.xddot.col(c) = dd;
    }
    rec.validate();
    return rec;
}

// --- synthetic reference systems ------------------------------------------------

struct VanDerPol { double mu = 1.0; };
struct FitzHughNagumo { double a = 0.7, b = 0.8, tau = 12.5, current = 0.5; };
struct LinearOsc { double omega = 1.0, zeta = 0.1; };
using SyntheticSystem = std::variant<VanDerPol, FitzHughNagumo, LinearOsc>;

// u(t) = offset + amplitude * sin(omega t + phase)
struct ForcingSpec {
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 0.0;
    double phase = 0.0;
    double value(double t) const { return offset + amplitude * std::sin(omega * t + phase); }
    double rate(double t) const { return amplitude * omega * std::cos(omega * t + phase); }
};

struct SyntheticConfig {
    SyntheticSystem system = VanDerPol{};
    ForcingSpec forcing;
    double duration = 50.0;
    double dt = 0.01;
    double noise_std = 0.0;
    unsigned seed = 1;
    Vec x0;  // empty -> per-system default
};

namespace detail {

// Polynomial form of each reference system; e(x) = x throughout.
inline void synthetic_model(const SyntheticSystem& sys, PolyModelSpec& spec,
                            ModelCoefficients& coefs, Vec& default_x0) {
    auto idx = [&](const MonomialBasis& b, const Exponents& e) -> Eigen::Index {
        for (size_t j = 0; j < b.size(); ++j)
            if (b[j] == e) return Eigen::Index(j);
        throw DataError("synthetic_model: missing monomial");
    };
    if (std::holds_alternative<VanDerPol>(sys)) {
        const double mu = std::get<VanDerPol>(sys).mu;
        if (!(mu > 0.0)) throw DataError("van_der_pol: mu must be > 0");
        spec = PolyModelSpec::dense(2, 1, 1, 1, 3, 1, 1);
        coefs = ModelCoefficients::identity_e(spec);
        // x1' = x2 ; x2' = mu (1 - x1^2) x2 - x1 + u
        coefs.coef_f(0, idx(spec.basis_f, {0, 1, 0})) = 1.0;
        coefs.coef_f(1, idx(spec.basis_f, {0, 1, 0})) = mu;
        coefs.coef_f(1, idx(spec.basis_f, {2, 1, 0})) = -mu;
        coefs.coef_f(1, idx(spec.basis_f, {1, 0, 0})) = -1.0;
        coefs.coef_f(1, idx(spec.basis_f, {0, 0, 1})) = 1.0;
        coefs.coef_g(0, idx(spec.basis_g, {1, 0, 0})) = 1.0;
        default_x0 = Vec::Zero(2);
        default_x0 << 2.0, 0.0;
    } else if (std::holds_alternative<FitzHughNagumo>(sys)) {
        const auto fh = std::get<FitzHughNagumo>(sys);
        if (!(fh.tau > 0.0)) throw DataError("fitzhugh_nagumo: tau must be > 0");
        spec = PolyModelSpec::dense(2, 1, 1, 1, 3, 1, 1);
        coefs = ModelCoefficients::identity_e(spec);
        // v' = v - v^3/3 - w + I + u ; w' = (v + a - b w)/tau
        coefs.coef_f(0, idx(spec.basis_f, {1, 0, 0})) = 1.0;
        coefs.coef_f(0, idx(spec.basis_f, {3, 0, 0})) = -1.0 / 3.0;
        coefs.coef_f(0, idx(spec.basis_f, {0, 1, 0})) = -1.0;
        coefs.coef_f(0, idx(spec.basis_f, {0, 0, 0})) = fh.current;
        coefs.coef_f(0, idx(spec.basis_f, {0, 0, 1})) = 1.0;
        coefs.coef_f(1, idx(spec.basis_f, {1, 0, 0})) = 1.0 / fh.tau;
        coefs.coef_f(1, idx(spec.basis_f, {0, 0, 0})) = fh.a / fh.tau;
        coefs.coef_f(1, idx(spec.basis_f, {0, 1, 0})) = -fh.b / fh.tau;
        coefs.coef_g(0, idx(spec.basis_g, {1, 0, 0})) = 1.0;
        default_x0 = Vec::Zero(2);
        default_x0 << 1.0, 0.0;
    } else {
        const auto lo = std::get<LinearOsc>(sys);
        if (!(lo.omega > 0.0) || lo.zeta < 0.0) throw DataError("linear_osc: bad parameters");
        spec = PolyModelSpec::dense(2, 1, 1, 1, 1, 1, 1);
        coefs = ModelCoefficients::identity_e(spec);
        coefs.coef_f(0, idx(spec.basis_f, {0, 1, 0})) = 1.0;
        coefs.coef_f(1, idx(spec.basis_f, {1, 0, 0})) = -lo.omega * lo.omega;
        coefs.coef_f(1, idx(spec.basis_f, {0, 1, 0})) = -2.0 * lo.zeta * lo.omega;
        coefs.coef_f(1, idx(spec.basis_f, {0, 0, 1})) = 1.0;
        coefs.coef_g(0, idx(spec.basis_g, {1, 0, 0})) = 1.0;
        default_x0 = Vec::Zero(2);
        default_x0 << 1.0, 0.0;
    }
}

}  // namespace detail

struct SyntheticResult {
    RawSeries raw;           // what an experiment would record (noisy outputs)
    TrajectoryRecord truth;  // exact states and derivatives
    PolyModelSpec spec;      // generating model, for self-identification tests
    ModelCoefficients coefs;
};

// Integrates the reference ODE at a refined internal step (RK4 keeps the
// Van der Pol cycle accurate with internal steps <= 1e-3) and returns both the
// recorded series and the exact ground truth. Noise is additive Gaussian on
// the outputs only; noise_std == 0 draws nothing.
inline SyntheticResult gen_synthetic(const SyntheticConfig& cfg) {
    if (!(cfg.dt > 0.0) || !(cfg.duration > 0.0))
        throw DataError("gen_synthetic: duration and dt must be > 0");
    SyntheticResult out;
    Vec x0;
    detail::synthetic_model(cfg.system, out.spec, out.coefs, x0);
    if (cfg.x0.size() > 0) {
        if (cfg.x0.size() != out.spec.n) throw DataError("gen_synthetic: x0 dimension mismatch");
        x0 = cfg.x0;
    }

    const Eigen::Index N = Eigen::Index(std::llround(cfg.duration / cfg.dt)) + 1;
    Mat u_series(N, 1);
    for (Eigen::Index i = 0; i < N; ++i) u_series(i, 0) = cfg.forcing.value(cfg.dt * double(i));

    SimOptions opts;
    opts.substeps = std::max(1, int(std::ceil(cfg.dt / 1e-3)));
    SimResult sim = simulate(out.spec, out.coefs, x0, u_series, cfg.dt, opts);
    if (sim.status != SimStatus::completed)
        throw DataError("gen_synthetic: reference integration failed");

    TrajectoryRecord& rec = out.truth;
    rec.dt = cfg.dt;
    rec.x = sim.states;
    rec.u = u_series;
    rec.y = sim.outputs;
    rec.xdot.resize(N, out.spec.n);
    rec.xddot.resize(N, out.spec.n);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double t = cfg.dt * double(i);
        Vec x = rec.x.row(i).transpose();
        Vec u(1);
        u << cfg.forcing.value(t);
        Vec xd = eval_f(out.spec, out.coefs, x, u);  // e(x) = x
        rec.xdot.row(i) = xd.transpose();
        Vec udot(1);
        udot << cfg.forcing.rate(t);
        rec.xddot.row(i) = (jacobian_f_x(out.spec, out.coefs, x, u) * xd +
                            jacobian_f_u(out.spec, out.coefs, x, u) * udot).transpose();
    }
    rec.validate();

    out.raw.times = Vec::LinSpaced(N, 0.0, cfg.dt * double(N - 1));
    out.raw.inputs = u_series;
    out.raw.outputs = sim.outputs;
    if (cfg.noise_std > 0.0) {
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> dist(0.0, cfg.noise_std);
        for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index j = 0; j < out.raw.outputs.cols(); ++j)
                out.raw.outputs(i, j) += dist(rng);
    }
    return out;
}

}  // namespace orbid

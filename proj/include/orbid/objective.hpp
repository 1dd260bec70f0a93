#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "orbid/geometry.hpp"
#include "orbid/model.hpp"
#include "orbid/types.hpp"

namespace orbid {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Weighting metric Q > 0 and its inverse P, stored jointly.
struct Metric {
    Mat Q;
    Mat P;  // Q^{-1}

    static Metric from_Q(const Mat& Q) {
        Metric m;
        m.Q = 0.5 * (Q + Q.transpose());
        Eigen::LLT<Mat> llt(m.Q);
        if (llt.info() != Eigen::Success) throw DataError("metric: Q is not positive definite");
        m.P = llt.solve(Mat::Identity(Q.rows(), Q.cols()));
        m.P = 0.5 * (m.P + m.P.transpose()).eval();
        return m;
    }
    static Metric from_P(const Mat& P) {
        Metric m = from_Q(P);   // invert
        std::swap(m.Q, m.P);
        return m;
    }
    static Metric identity(Eigen::Index n) {
        return {Mat::Identity(n, n), Mat::Identity(n, n)};
    }

    void validate() const {
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + Q.cwiseAbs().maxCoeff()))
            throw DataError("metric: Q not symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(Q);
        if (es.eigenvalues().minCoeff() <= 0.0) throw DataError("metric: Q not positive definite");
        if ((Q * P - Mat::Identity(Q.rows(), Q.cols())).cwiseAbs().maxCoeff() > 1e-8)
            throw DataError("metric: P is not the inverse of Q");
    }
};

// Closed-form supremum of Delta' H Delta + 2 h' Delta + c over all Delta.
// Finite only when H is negative semidefinite (relative tolerance) and, on
// the semidefinite boundary, h lies in range(H).
inline double sup_quadratic(const Mat& H, const Vec& h, double c,
                            double eig_tol_rel = 1e-9, double range_tol = 1e-8) {
    const Eigen::Index k = H.rows();
    if (k == 0) return c;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
    const Vec lam = es.eigenvalues();
    const double scale = lam.cwiseAbs().maxCoeff();
    const double tol = eig_tol_rel * std::max(scale, 1e-300);
    if (lam.maxCoeff() > tol) return kInf;
    const Vec eta = es.eigenvectors().transpose() * h;
    double val = c;
    double null_resid2 = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (lam(i) < -tol) val -= eta(i) * eta(i) / lam(i);
        else null_resid2 += eta(i) * eta(i);
    }
    if (std::sqrt(null_resid2) > range_tol * (1.0 + h.norm())) return kInf;
    return val;
}

namespace detail {

// Supremum of the exact local bound restricted to the subspace spanned by
// Phi (the reduced transverse directions), with projector rate Pid:
//   sup 2 (Phi d)' E'Q ((F + E Pid) Phi d + eps_x) + |G Phi d + eps_y|^2
inline double exact_local(const Mat& E, const Mat& F, const Mat& G,
                          const Vec& eps_x, const Vec& eps_y,
                          const Mat& Phi, const Mat& Pid, const Metric& metric) {
    const Mat M = E.transpose() * metric.Q * (F + E * Pid);
    const Mat GP = G * Phi;
    Mat H = Phi.transpose() * (M + M.transpose()) * Phi + GP.transpose() * GP;
    Vec h = Phi.transpose() * (E.transpose() * (metric.Q * eps_x) + G.transpose() * eps_y);
    return sup_quadratic(H, h, eps_y.squaredNorm());
}

// Quadratic data of the convex relaxation (the slack-LMI bound) on the
// subspace spanned by Phi: value = d'H d + 2 h'd + c with
// Delta_e^+ = (E(I+Pid)+F) Phi d + eps_x,
// Delta_e^- = (E(I-Pid)-F) Phi d - eps_x, Delta_y = G Phi d + eps_y.
struct QuadraticForm {
    Mat H;
    Vec h;
    double c = 0.0;
};

inline QuadraticForm relaxed_form(const Mat& E, const Mat& F, const Mat& G,
                                  const Vec& eps_x, const Vec& eps_y,
                                  const Mat& Phi, const Mat& Pid, const Metric& metric) {
    const Eigen::Index n = E.rows();
    const Mat I = Mat::Identity(n, n);
    const Mat Cp = (E * (I + Pid) + F) * Phi;
    const Mat Cm = (E * (I - Pid) - F) * Phi;
    const Vec cp = eps_x;
    const Vec cm = -eps_x;
    const Mat Dy = G * Phi;
    const Vec dy = eps_y;

    QuadraticForm q;
    Mat PhiCm = Phi.transpose() * Cm;
    q.H = 0.5 * Cp.transpose() * metric.Q * Cp
        + 0.5 * Phi.transpose() * metric.P * Phi
        - 0.5 * (PhiCm + PhiCm.transpose())
        + Dy.transpose() * Dy;
    q.h = 0.5 * (Cp.transpose() * (metric.Q * cp) - Phi.transpose() * cm +
                 2.0 * Dy.transpose() * dy);
    q.c = 0.5 * cp.dot(metric.Q * cp) + dy.squaredNorm();
    return q;
}

inline double relaxed_local(const Mat& E, const Mat& F, const Mat& G,
                            const Vec& eps_x, const Vec& eps_y,
                            const Mat& Phi, const Mat& Pid, const Metric& metric) {
    QuadraticForm q = relaxed_form(E, F, G, eps_x, eps_y, Phi, Pid, metric);
    return sup_quadratic(q.H, q.h, q.c);
}

}  // namespace detail

// Supremum form of Eq.-error dissipation over the full space (finite iff
// R = E'QF + F'QE + G'G is negative semidefinite at this sample).
inline double rie_local(const SamplePointData& s, const Metric& metric) {
    const Eigen::Index n = s.E.rows();
    return detail::exact_local(s.E, s.F, s.G, s.eps_x, s.eps_y,
                               Mat::Identity(n, n), Mat::Zero(n, n), metric);
}

// Transverse version: supremum over the (n-1)-dimensional transversal.
// Degenerate samples fall back to the full-space form.
inline double trie_local(const SamplePointData& s, const Metric& metric) {
    const Eigen::Index n = s.E.rows();
    if (s.frame.degenerate)
        return rie_local(s, metric);
    return detail::exact_local(s.E, s.F, s.G, s.eps_x, s.eps_y,
                               s.frame.Pi_r, s.frame.Pi_dot, metric);
}

// Convex upper bound on trie_local (the quantity the slack LMIs encode).
inline double trie_hat_local(const SamplePointData& s, const Metric& metric) {
    const Eigen::Index n = s.E.rows();
    if (s.frame.degenerate)
        return detail::relaxed_local(s.E, s.F, s.G, s.eps_x, s.eps_y,
                                     Mat::Identity(n, n), Mat::Zero(n, n), metric);
    return detail::relaxed_local(s.E, s.F, s.G, s.eps_x, s.eps_y,
                                 s.frame.Pi_r, s.frame.Pi_dot, metric);
}

// Full-space convex relaxation (used for the non-transverse fit and at
// degenerate samples).
inline double rie_hat_local(const SamplePointData& s, const Metric& metric) {
    const Eigen::Index n = s.E.rows();
    return detail::relaxed_local(s.E, s.F, s.G, s.eps_x, s.eps_y,
                                 Mat::Identity(n, n), Mat::Zero(n, n), metric);
}

// Quadratic data behind trie_hat_local (diagnostics: feasibility margins).
inline detail::QuadraticForm trie_hat_form(const SamplePointData& s, const Metric& metric) {
    const Eigen::Index n = s.E.rows();
    if (s.frame.degenerate)
        return detail::relaxed_form(s.E, s.F, s.G, s.eps_x, s.eps_y,
                                    Mat::Identity(n, n), Mat::Zero(n, n), metric);
    return detail::relaxed_form(s.E, s.F, s.G, s.eps_x, s.eps_y,
                                s.frame.Pi_r, s.frame.Pi_dot, metric);
}

inline double eq_local(const SamplePointData& s) {
    return s.eps_x.squaredNorm() + s.eps_y.squaredNorm();
}

// Storage function V(Delta, t) = |E Pi Delta|_Q^2 + |pi Delta|^2 (diagnostic;
// used by the dissipation-inequality checks, not by the fit path).
inline double storage_value(const SamplePointData& s, const Metric& metric, const Vec& Delta) {
    Vec v = s.E * (s.frame.Pi * Delta);
    Vec d = s.frame.pi * Delta;
    return v.dot(metric.Q * v) + d.squaredNorm();
}

enum class CostKind { eq, rie, trie, trie_hat, rie_hat };

struct LocalCostBreakdown {
    Vec eq_error;
    Vec rie_bar;
    Vec trie_bar;
    Vec trie_hat;
    std::vector<bool> rie_finite;
    std::vector<bool> trie_finite;
    std::vector<bool> trie_hat_finite;
    std::vector<bool> degenerate;
};

inline std::vector<SamplePointData> freeze_samples(const PolyModelSpec& spec,
                                                   const ModelCoefficients& coefs,
                                                   const TrajectoryRecord& rec,
                                                   const std::vector<TransverseFrame>& frames) {
    auto aff = affine_maps(spec, rec);
    std::vector<SamplePointData> out;
    out.reserve(aff.size());
    for (size_t i = 0; i < aff.size(); ++i)
        out.push_back(aff[i].freeze(spec, coefs, frames[i]));
    return out;
}

inline LocalCostBreakdown cost_breakdown(const std::vector<SamplePointData>& samples,
                                         const Metric& metric) {
    const Eigen::Index N = Eigen::Index(samples.size());
    LocalCostBreakdown b;
    b.eq_error.resize(N);
    b.rie_bar.resize(N);
    b.trie_bar.resize(N);
    b.trie_hat.resize(N);
    b.rie_finite.resize(size_t(N));
    b.trie_finite.resize(size_t(N));
    b.trie_hat_finite.resize(size_t(N));
    b.degenerate.resize(size_t(N));
    for (Eigen::Index i = 0; i < N; ++i) {
        const SamplePointData& s = samples[size_t(i)];
        b.eq_error(i) = eq_local(s);
        b.rie_bar(i) = rie_local(s, metric);
        b.trie_bar(i) = trie_local(s, metric);
        b.trie_hat(i) = trie_hat_local(s, metric);
        b.rie_finite[size_t(i)] = std::isfinite(b.rie_bar(i));
        b.trie_finite[size_t(i)] = std::isfinite(b.trie_bar(i));
        b.trie_hat_finite[size_t(i)] = std::isfinite(b.trie_hat(i));
        b.degenerate[size_t(i)] = s.frame.degenerate;
    }
    return b;
}

inline void write_breakdown_csv(std::ostream& os, const LocalCostBreakdown& b) {
    os << "sample,eq_error,rie_bar,trie_bar,trie_hat,rie_finite,trie_finite,trie_hat_finite,degenerate\n";
    for (Eigen::Index i = 0; i < b.eq_error.size(); ++i) {
        os << i << ',' << b.eq_error(i) << ',' << b.rie_bar(i) << ',' << b.trie_bar(i) << ','
           << b.trie_hat(i) << ',' << int(b.rie_finite[size_t(i)]) << ','
           << int(b.trie_finite[size_t(i)]) << ',' << int(b.trie_hat_finite[size_t(i)]) << ','
           << int(b.degenerate[size_t(i)]) << '\n';
    }
}

// Sum of per-sample costs. With dt_weighted the sum approximates the time
// integral; otherwise it is the plain finite sum. Sequential summation order
// (deterministic across runs).
inline double total_cost(const TrajectoryRecord& rec, const std::vector<TransverseFrame>& frames,
                         const PolyModelSpec& spec, const ModelCoefficients& coefs,
                         const Metric& metric, CostKind kind, bool dt_weighted = true) {
    if (frames.size() != size_t(rec.samples()))
        throw DataError("total_cost: frame count mismatch");
    auto samples = freeze_samples(spec, coefs, rec, frames);
    const double w = dt_weighted ? rec.dt : 1.0;
    double acc = 0.0;
    for (const auto& s : samples) {
        double v = 0.0;
        switch (kind) {
            case CostKind::eq: v = eq_local(s); break;
            case CostKind::rie: v = rie_local(s, metric); break;
            case CostKind::trie: v = trie_local(s, metric); break;
            case CostKind::trie_hat: v = trie_hat_local(s, metric); break;
            case CostKind::rie_hat: v = rie_hat_local(s, metric); break;
        }
        if (!std::isfinite(v)) return kInf;
        acc += v * w;
    }
    return acc;
}

}  // namespace orbid

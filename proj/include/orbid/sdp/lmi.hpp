#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "orbid/geometry.hpp"
#include "orbid/model.hpp"
#include "orbid/sdp/program.hpp"
#include "orbid/types.hpp"

namespace orbid::sdp {

// Symmetric-matrix parametrization used for the metric variable P: vech
// ordering is column-major over the lower triangle, (0,0),(1,0),..,(1,1),..
inline Eigen::Index vech_size(Eigen::Index n) { return n * (n + 1) / 2; }

inline Eigen::Index vech_index(Eigen::Index i, Eigen::Index j, Eigen::Index n) {
    if (i < j) std::swap(i, j);
    return j * n - j * (j - 1) / 2 + (i - j);
}

inline Mat vech_basis_matrix(Eigen::Index q, Eigen::Index n) {
    Mat m = Mat::Zero(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i, ++k)
            if (k == q) {
                m(i, j) = 1.0;
                m(j, i) = 1.0;
                return m;
            }
    throw DataError("vech index out of range");
}

inline Mat from_vech(const Vec& v, Eigen::Index n) {
    Mat m = Mat::Zero(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i, ++k) {
            m(i, j) = v(k);
            m(j, i) = v(k);
        }
    return m;
}

inline Vec to_vech(const Mat& m) {
    const Eigen::Index n = m.rows();
    Vec v(vech_size(n));
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i, ++k) v(k) = m(i, j);
    return v;
}

// Variable placement for the per-sample LMIs. Model coefficients occupy
// [coef_base, coef_base + num_coefficients); the metric P is either a block
// of vech variables starting at p_base or a fixed numeric matrix.
struct LmiLayout {
    Eigen::Index coef_base = 0;
    Eigen::Index p_base = -1;  // -1: P fixed
    Mat P_fixed;
    Eigen::Index slack_var = -1;
};

struct LmiOptions {
    // Test hook: negates Delta_e^- inside the block. Used to demonstrate that
    // the closed-form oracle gate catches construction mistakes.
    bool flip_delta_e_minus = false;
};

namespace detail {

// The slack LMI for one sample: encodes s >= sup of the relaxed local bound
// on the subspace spanned by Phi with projector rate Pid. Layout
//   [ s    t'     c+'    d' ]
//   [ t    T2     C+'    D' ]
//   [ c+   C+     P      0  ]
//   [ d    D      0      I  ]  >= 0
// with C+ = (E(I+Pid)+F) Phi / sqrt2, c+ = eps_x / sqrt2, D = G Phi,
// d = eps_y, t = -(1/2) Phi' eps_x (the Delta_e^- constant), and
// T2 = sym(Phi'(E(I-Pid)-F) Phi) - (1/2) Phi' P Phi.
inline Mat relaxed_lmi_matrix(const Mat& E, const Mat& F, const Mat& G, const Vec& eps_x,
                              const Vec& eps_y, const Mat& Phi, const Mat& Pid, const Mat& P,
                              double s, bool flip_minus) {
    const Eigen::Index n = E.rows();
    const Eigen::Index p = G.rows();
    const Eigen::Index r = Phi.cols();
    const Mat I = Mat::Identity(n, n);
    const double rt2 = std::sqrt(2.0);

    Mat Cp = (E * (I + Pid) + F) * Phi / rt2;
    Vec cp = eps_x / rt2;
    Mat Cm = (E * (I - Pid) - F) * Phi;
    Vec cm = -eps_x;
    if (flip_minus) {
        Cm = -Cm;
        cm = -cm;
    }
    Mat Dy = G * Phi;

    const Eigen::Index dim = 1 + r + n + p;
    Mat B = Mat::Zero(dim, dim);
    B(0, 0) = s;
    Vec t = 0.5 * (Phi.transpose() * cm);
    B.block(0, 1, 1, r) = t.transpose();
    B.block(1, 0, r, 1) = t;
    Mat PhiCm = Phi.transpose() * Cm;
    B.block(1, 1, r, r) = 0.5 * (PhiCm + PhiCm.transpose()) - 0.5 * Phi.transpose() * P * Phi;
    B.block(0, 1 + r, 1, n) = cp.transpose();
    B.block(1 + r, 0, n, 1) = cp;
    B.block(1, 1 + r, r, n) = Cp.transpose();
    B.block(1 + r, 1, n, r) = Cp;
    B.block(1 + r, 1 + r, n, n) = P;
    B.block(0, 1 + r + n, 1, p) = eps_y.transpose();
    B.block(1 + r + n, 0, p, 1) = eps_y;
    B.block(1, 1 + r + n, r, p) = Dy.transpose();
    B.block(1 + r + n, 1, p, r) = Dy;
    B.block(1 + r + n, 1 + r + n, p, p) = Mat::Identity(p, p);
    return B;
}

}  // namespace detail

// Builds the per-sample slack LMI as an affine PsdBlock over (model
// coefficients, vech(P), slack). Probes the affine map against one-hot
// inputs; every entry of the block is affine in the decision variables, so
// the probe is exact.
inline PsdBlock build_relaxed_lmi(const PolyModelSpec& spec, const SampleAffine& aff,
                                  const Mat& Phi, const Mat& Pid, const LmiLayout& layout,
                                  const LmiOptions& opts = {}) {
    const Eigen::Index n = spec.n;
    const Eigen::Index nc = spec.num_coefficients();
    const bool p_is_var = layout.p_base >= 0;
    const Mat P0 = p_is_var ? Mat::Zero(n, n) : layout.P_fixed;

    auto block_at = [&](const ModelCoefficients& c, const Mat& P, double s) {
        return detail::relaxed_lmi_matrix(aff.E(spec, c), aff.F(spec, c), aff.G(spec, c),
                                          aff.eps_x(spec, c), aff.eps_y(spec, c), Phi, Pid, P,
                                          s, opts.flip_delta_e_minus);
    };

    PsdBlock blk;
    const ModelCoefficients zero = ModelCoefficients::zero(spec);
    Mat base = block_at(zero, P0, 0.0);
    blk.dim = base.rows();
    blk.add(-1, base);

    Vec one = Vec::Zero(nc);
    for (Eigen::Index k = 0; k < nc; ++k) {
        one(k) = 1.0;
        Mat A = block_at(unflatten(spec, one), P0, 0.0) - base;
        one(k) = 0.0;
        if (A.cwiseAbs().maxCoeff() > 0.0) blk.add(int(layout.coef_base + k), std::move(A));
    }
    if (p_is_var) {
        for (Eigen::Index q = 0; q < vech_size(n); ++q) {
            Mat A = block_at(zero, vech_basis_matrix(q, n), 0.0) - base;
            if (A.cwiseAbs().maxCoeff() > 0.0) blk.add(int(layout.p_base + q), std::move(A));
        }
    }
    Mat As = Mat::Zero(blk.dim, blk.dim);
    As(0, 0) = 1.0;
    blk.add(int(layout.slack_var), std::move(As));
    return blk;
}

// Transverse version: reduced subspace from the frame, full space with zero
// projector rate at degenerate samples.
inline PsdBlock build_trie_lmi(const PolyModelSpec& spec, const SampleAffine& aff,
                               const TransverseFrame& frame, const LmiLayout& layout,
                               const LmiOptions& opts = {}) {
    if (frame.degenerate) {
        const Mat I = Mat::Identity(spec.n, spec.n);
        return build_relaxed_lmi(spec, aff, I, Mat::Zero(spec.n, spec.n), layout, opts);
    }
    return build_relaxed_lmi(spec, aff, frame.Pi_r, frame.Pi_dot, layout, opts);
}

// Non-transverse version (the full-space robust bound) for the rie fit kind.
inline PsdBlock build_rie_lmi(const PolyModelSpec& spec, const SampleAffine& aff,
                              const LmiLayout& layout, const LmiOptions& opts = {}) {
    const Mat I = Mat::Identity(spec.n, spec.n);
    return build_relaxed_lmi(spec, aff, I, Mat::Zero(spec.n, spec.n), layout, opts);
}

// Equation-error epigraph for one sample: q >= |eps_x|^2 + |eps_y|^2 as
// [[q, w'],[w, I]] >= 0 with w = (eps_x, eps_y) affine in the coefficients.
inline PsdBlock build_eq_epigraph(const PolyModelSpec& spec, const SampleAffine& aff,
                                  Eigen::Index coef_base, Eigen::Index slack_var) {
    const Eigen::Index n = spec.n, p = spec.p;
    const Eigen::Index nc = spec.num_coefficients();
    const Eigen::Index dim = 1 + n + p;

    auto block_at = [&](const ModelCoefficients& c, double q) {
        Mat B = Mat::Zero(dim, dim);
        B(0, 0) = q;
        Vec w(n + p);
        w << aff.eps_x(spec, c), aff.eps_y(spec, c);
        B.block(1, 0, n + p, 1) = w;
        B.block(0, 1, 1, n + p) = w.transpose();
        B.block(1, 1, n + p, n + p) = Mat::Identity(n + p, n + p);
        return B;
    };

    PsdBlock blk;
    const ModelCoefficients zero = ModelCoefficients::zero(spec);
    Mat base = block_at(zero, 0.0);
    blk.dim = dim;
    blk.add(-1, base);
    Vec one = Vec::Zero(nc);
    for (Eigen::Index k = 0; k < nc; ++k) {
        one(k) = 1.0;
        Mat A = block_at(unflatten(spec, one), 0.0) - base;
        one(k) = 0.0;
        if (A.cwiseAbs().maxCoeff() > 0.0) blk.add(int(coef_base + k), std::move(A));
    }
    Mat As = Mat::Zero(dim, dim);
    As(0, 0) = 1.0;
    blk.add(int(slack_var), std::move(As));
    return blk;
}

}  // namespace orbid::sdp

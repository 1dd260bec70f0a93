#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <vector>

#include "orbid/model.hpp"
#include "orbid/sdp/lmi.hpp"
#include "orbid/sdp/program.hpp"
#include "orbid/types.hpp"

namespace orbid::sdp {

// Matrix sum-of-squares certificate for the well-posedness constraint
// E(x) + E(x)' >= I for all x. The polynomial y'(E+E'-I)y is matched to a
// Gram form m(x,y)' W m(x,y) with m = {x-monomials up to ceil((deg_e-1)/2)}
// tensor y; the coefficient-matching equalities are linear in (vech W,
// coef_e) and are pre-eliminated into an affine parametrization of W by the
// e-coefficients plus free Gram directions.
struct SosCertificate {
    MonomialBasis msos;      // x-monomial part of the Gram basis
    Eigen::Index gram_dim;   // |msos| * n
    Eigen::Index num_free;   // dimension of the Gram null space

    // vech(W) = w_const + w_coef * ce + w_free * mu, ce = flattened e-coefs
    Vec w_const;
    Mat w_coef;
    Mat w_free;

    // raw equality system (rows: (x-monomial, i<=k) pairs):
    //   eq_gram vech(W) - eq_coef ce = eq_rhs
    Mat eq_gram, eq_coef;
    Vec eq_rhs;

    // worst equality violation of a concrete (W, ce) pair
    double equality_residual(const Vec& vechW, const Vec& ce) const {
        return (eq_gram * vechW - eq_coef * ce - eq_rhs).cwiseAbs().maxCoeff();
    }
};

inline SosCertificate build_sos_block(const PolyModelSpec& spec) {
    spec.validate();
    const int n = spec.n;
    const Eigen::Index Be = spec.ne();
    const int d_m = (spec.deg_e - 1 + 1) / 2;  // ceil((deg_e - 1)/2)
    SosCertificate cert;
    cert.msos = orbid::detail::monomials_up_to(n, d_m);
    const Eigen::Index M = Eigen::Index(cert.msos.size());
    cert.gram_dim = M * n;
    const Eigen::Index NW = vech_size(cert.gram_dim);

    // enumerate the x-monomials reachable as a product of two basis entries
    std::map<Exponents, Eigen::Index> gamma_index;
    for (const auto& a : cert.msos)
        for (const auto& b : cert.msos) {
            Exponents s(a.size());
            for (size_t i = 0; i < a.size(); ++i) s[i] = a[i] + b[i];
            gamma_index.emplace(s, Eigen::Index(gamma_index.size()));
        }
    // rows: (gamma, i <= k)
    const Eigen::Index pairs = Eigen::Index(n) * (n + 1) / 2;
    const Eigen::Index neq = Eigen::Index(gamma_index.size()) * pairs;
    auto pair_index = [&](int i, int k) {  // i <= k upper triangle, row-major
        return Eigen::Index(i) * n - Eigen::Index(i) * (i - 1) / 2 + (k - i);
    };
    auto row_of = [&](const Exponents& gamma, int i, int k) {
        return gamma_index.at(gamma) * pairs + pair_index(i, k);
    };

    cert.eq_gram = Mat::Zero(neq, NW);
    cert.eq_coef = Mat::Zero(neq, Eigen::Index(n) * Be);
    cert.eq_rhs = Vec::Zero(neq);

    // gram side: ordered basis pairs ((j,i),(l,k)) contribute to the
    // coefficient of x^(ej+el) y_i y_k
    auto basis_flat = [&](Eigen::Index j, int i) { return j * n + i; };
    for (Eigen::Index j = 0; j < M; ++j)
        for (Eigen::Index l = 0; l < M; ++l) {
            Exponents gamma(cert.msos[size_t(j)].size());
            for (size_t q = 0; q < gamma.size(); ++q)
                gamma[q] = cert.msos[size_t(j)][q] + cert.msos[size_t(l)][q];
            for (int i = 0; i < n; ++i)
                for (int k = i; k < n; ++k) {
                    // y_i from the first factor, y_k from the second; the
                    // transposed pairing is covered by the (l,j) iteration
                    const Eigen::Index w1 =
                        vech_index(basis_flat(j, i), basis_flat(l, k), cert.gram_dim);
                    cert.eq_gram(row_of(gamma, i, k), w1) += 1.0;
                    if (i != k) {
                        const Eigen::Index w2 =
                            vech_index(basis_flat(j, k), basis_flat(l, i), cert.gram_dim);
                        cert.eq_gram(row_of(gamma, i, k), w2) += 1.0;
                    }
                }
        }
    // coefficient side: (E + E')_{ik} expanded over the e-monomial gradients.
    // E_{ik}[gamma] picks e-monomials with exponent gamma + unit(k).
    for (Eigen::Index j = 0; j < Be; ++j) {
        const Exponents& ej = spec.basis_e[size_t(j)];
        for (int k = 0; k < n; ++k) {
            if (ej[size_t(k)] == 0) continue;
            Exponents gamma = ej;
            gamma[size_t(k)] -= 1;
            auto it = gamma_index.find(gamma);
            if (it == gamma_index.end())
                throw DataError("sos: basis_e degree exceeds the Gram basis");
            const double dcoef = double(ej[size_t(k)]);
            for (int i = 0; i < n; ++i) {
                // contribution of coef_e(i, j) to the y_a y_b coefficient,
                // which collects 2 M_ab from the symmetric quadratic form
                const int a = std::min(i, k), b = std::max(i, k);
                cert.eq_coef(row_of(gamma, a, b), Eigen::Index(i) * Be + j) += 2.0 * dcoef;
            }
        }
    }
    // the -I part of y'(E+E'-I)y
    Exponents zero_gamma(size_t(n), 0);
    for (int i = 0; i < n; ++i) cert.eq_rhs(row_of(zero_gamma, i, i)) = -1.0;

    // eliminate: vech(W) = pinv(eq_gram) (eq_coef ce + eq_rhs) + null(eq_gram) mu
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(cert.eq_gram);
    cert.w_coef = cod.solve(cert.eq_coef);
    cert.w_const = cod.solve(cert.eq_rhs);
    if ((cert.eq_gram * cert.w_coef - cert.eq_coef).cwiseAbs().maxCoeff() > 1e-8 ||
        (cert.eq_gram * cert.w_const - cert.eq_rhs).cwiseAbs().maxCoeff() > 1e-8)
        throw DataError("sos: coefficient matching is inconsistent");
    Eigen::HouseholderQR<Mat> qr(cert.eq_gram.transpose());
    Mat Q = qr.householderQ();
    cert.num_free = NW - cod.rank();
    cert.w_free = Q.rightCols(cert.num_free);
    return cert;
}

// Emit the Gram PSD block over program variables: e-coefficients start at
// coef_base (the e-part occupies the first n*|basis_e| of the flattened
// layout), free Gram directions start at mu_base.
inline PsdBlock emit_sos_block(const PolyModelSpec& spec, const SosCertificate& cert,
                               Eigen::Index coef_base, Eigen::Index mu_base) {
    PsdBlock blk;
    blk.dim = cert.gram_dim;
    blk.add(-1, from_vech(cert.w_const, cert.gram_dim));
    const Eigen::Index nBe = Eigen::Index(spec.n) * spec.ne();
    for (Eigen::Index j = 0; j < nBe; ++j) {
        Mat A = from_vech(cert.w_coef.col(j), cert.gram_dim);
        if (A.cwiseAbs().maxCoeff() > 0.0) blk.add(int(coef_base + j), std::move(A));
    }
    for (Eigen::Index q = 0; q < cert.num_free; ++q) {
        Mat A = from_vech(cert.w_free.col(q), cert.gram_dim);
        if (A.cwiseAbs().maxCoeff() > 0.0) blk.add(int(mu_base + q), std::move(A));
    }
    return blk;
}

// Numeric check on a concrete coefficient assignment: reconstruct the Gram
// residual y'(E(x)+E(x)'-I)y - m'Wm at random points.
inline double sos_pointwise_residual(const PolyModelSpec& spec, const SosCertificate& cert,
                                     const Vec& ce, const Vec& mu, const Vec& x, const Vec& y) {
    Vec vechW = cert.w_const + cert.w_coef * ce;
    if (mu.size() > 0) vechW += cert.w_free * mu;
    Mat W = from_vech(vechW, cert.gram_dim);
    Vec m(cert.gram_dim);
    for (size_t j = 0; j < cert.msos.size(); ++j) {
        const double mj = orbid::detail::eval_monomial(cert.msos[j], x);
        for (int i = 0; i < spec.n; ++i) m(Eigen::Index(j) * spec.n + i) = mj * y(i);
    }
    ModelCoefficients c = ModelCoefficients::zero(spec);
    Eigen::Index k = 0;
    for (int r = 0; r < spec.n; ++r)
        for (Eigen::Index j = 0; j < spec.ne(); ++j) c.coef_e(r, j) = ce(k++);
    Mat E = jacobian_e(spec, c, x);
    const double lhs = y.dot((E + E.transpose()) * y) - y.squaredNorm();
    return lhs - m.dot(W * m);
}

}  // namespace orbid::sdp

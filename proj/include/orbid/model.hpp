#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orbid/geometry.hpp"
#include "orbid/types.hpp"

namespace orbid {

// Exponent list of one monomial; for e the variables are x (length n), for
// f and g they are (x, u) (length n + m).
using Exponents = std::vector<int>;
using MonomialBasis = std::vector<Exponents>;

namespace detail {

inline MonomialBasis monomials_up_to(int nvars, int max_total, int min_total = 0) {
    MonomialBasis out;
    Exponents cur(size_t(nvars), 0);
    // lexicographic enumeration by recursion on remaining degree
    auto rec = [&](auto&& self, int var, int remaining) -> void {
        if (var == nvars) {
            int total = 0;
            for (int e : cur) total += e;
            if (total >= min_total) out.push_back(cur);
            return;
        }
        for (int d = 0; d <= remaining; ++d) {
            cur[size_t(var)] = d;
            self(self, var + 1, remaining - d);
        }
        cur[size_t(var)] = 0;
    };
    rec(rec, 0, max_total);
    return out;
}

// monomials in (x,u) with x-degree <= dx and u-degree <= du
inline MonomialBasis monomials_split(int n, int m, int dx, int du) {
    MonomialBasis xs = monomials_up_to(n, dx);
    MonomialBasis us = monomials_up_to(m, du);
    MonomialBasis out;
    out.reserve(xs.size() * us.size());
    for (const auto& a : xs)
        for (const auto& b : us) {
            Exponents e = a;
            e.insert(e.end(), b.begin(), b.end());
            out.push_back(std::move(e));
        }
    return out;
}

inline double eval_monomial(const Exponents& e, const Vec& z) {
    double v = 1.0;
    for (size_t i = 0; i < e.size(); ++i)
        for (int k = 0; k < e[i]; ++k) v *= z(Eigen::Index(i));
    return v;
}

// derivative of z^e with respect to z_s, evaluated at z
inline double eval_monomial_deriv(const Exponents& e, const Vec& z, size_t s) {
    if (e[s] == 0) return 0.0;
    double v = double(e[s]);
    for (size_t i = 0; i < e.size(); ++i) {
        const int p = (i == s) ? e[i] - 1 : e[i];
        for (int k = 0; k < p; ++k) v *= z(Eigen::Index(i));
    }
    return v;
}

}  // namespace detail

// Symbolic shape of the implicit model d/dt e(x) = f(x,u), y = g(x,u):
// dimensions plus explicit monomial bases. e depends on x only.
struct PolyModelSpec {
    int n = 0, m = 0, p = 0;
    int deg_e = 1, deg_f_x = 1, deg_f_u = 0, deg_g = 1;
    MonomialBasis basis_e;  // exponents over x
    MonomialBasis basis_f;  // exponents over (x,u)
    MonomialBasis basis_g;  // exponents over (x,u)

    // All monomials up to the stated degrees. basis_e omits the constant
    // (it cannot affect the dynamics).
    static PolyModelSpec dense(int n, int m, int p, int deg_e, int deg_f_x,
                               int deg_f_u, int deg_g) {
        PolyModelSpec s;
        s.n = n; s.m = m; s.p = p;
        s.deg_e = deg_e; s.deg_f_x = deg_f_x; s.deg_f_u = deg_f_u; s.deg_g = deg_g;
        s.basis_e = detail::monomials_up_to(n, deg_e, 1);
        s.basis_f = detail::monomials_split(n, m, deg_f_x, deg_f_u);
        s.basis_g = detail::monomials_up_to(n + m, deg_g);
        s.validate();
        return s;
    }

    Eigen::Index ne() const { return Eigen::Index(basis_e.size()); }
    Eigen::Index nf() const { return Eigen::Index(basis_f.size()); }
    Eigen::Index ng() const { return Eigen::Index(basis_g.size()); }
    // flattened coefficient count, layout: e rows, then f rows, then g rows
    Eigen::Index num_coefficients() const { return n * ne() + n * nf() + p * ng(); }

    void validate() const {
        if (n < 1 || m < 0 || p < 1) throw DataError("model spec: bad dimensions");
        if (deg_e < 1) throw DataError("model spec: deg_e must be >= 1");
        if (basis_e.empty() || basis_f.empty() || basis_g.empty())
            throw DataError("model spec: empty monomial basis");
        auto check = [](const MonomialBasis& b, size_t nvars, const char* name) {
            std::set<Exponents> seen;
            for (const auto& e : b) {
                if (e.size() != nvars) throw DataError(std::string("model spec: bad exponent length in ") + name);
                for (int d : e)
                    if (d < 0) throw DataError(std::string("model spec: negative exponent in ") + name);
                if (!seen.insert(e).second)
                    throw DataError(std::string("model spec: duplicate monomial in ") + name);
            }
        };
        check(basis_e, size_t(n), "basis_e");
        check(basis_f, size_t(n + m), "basis_f");
        check(basis_g, size_t(n + m), "basis_g");
    }
};

// Concrete coefficient assignment for a PolyModelSpec.
struct ModelCoefficients {
    Mat coef_e;  // n x |basis_e|
    Mat coef_f;  // n x |basis_f|
    Mat coef_g;  // p x |basis_g|

    static ModelCoefficients zero(const PolyModelSpec& s) {
        return {Mat::Zero(s.n, s.ne()), Mat::Zero(s.n, s.nf()), Mat::Zero(s.p, s.ng())};
    }

    // e(x) = x; f and g zero. Requires the degree-1 monomials in basis_e.
    static ModelCoefficients identity_e(const PolyModelSpec& s) {
        ModelCoefficients c = zero(s);
        for (int r = 0; r < s.n; ++r) {
            Exponents want(size_t(s.n), 0);
            want[size_t(r)] = 1;
            bool found = false;
            for (size_t j = 0; j < s.basis_e.size(); ++j)
                if (s.basis_e[j] == want) { c.coef_e(r, Eigen::Index(j)) = 1.0; found = true; break; }
            if (!found) throw DataError("identity_e: basis_e lacks first-degree monomials");
        }
        return c;
    }

    void validate(const PolyModelSpec& s) const {
        if (coef_e.rows() != s.n || coef_e.cols() != s.ne() ||
            coef_f.rows() != s.n || coef_f.cols() != s.nf() ||
            coef_g.rows() != s.p || coef_g.cols() != s.ng())
            throw DataError("model coefficients: shape mismatch");
        if (!all_finite(coef_e) || !all_finite(coef_f) || !all_finite(coef_g))
            throw DataError("model coefficients: non-finite values");
    }
};

namespace detail {

inline Vec basis_values(const MonomialBasis& b, const Vec& z) {
    Vec v(Eigen::Index(b.size()));
    for (size_t j = 0; j < b.size(); ++j) v(Eigen::Index(j)) = eval_monomial(b[j], z);
    return v;
}

// rows: basis index, cols: variable index (only the first `nd` variables)
inline Mat basis_gradients(const MonomialBasis& b, const Vec& z, Eigen::Index nd) {
    Mat g(Eigen::Index(b.size()), nd);
    for (size_t j = 0; j < b.size(); ++j)
        for (Eigen::Index s = 0; s < nd; ++s)
            g(Eigen::Index(j), s) = eval_monomial_deriv(b[j], z, size_t(s));
    return g;
}

inline Vec stack_xu(const Vec& x, const Vec& u) {
    Vec z(x.size() + u.size());
    z << x, u;
    return z;
}

}  // namespace detail

inline Vec eval_e(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x) {
    if (x.size() != s.n) throw DataError("eval_e: state dimension mismatch");
    return c.coef_e * detail::basis_values(s.basis_e, x);
}

inline Vec eval_f(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x, const Vec& u) {
    if (x.size() != s.n || u.size() != s.m) throw DataError("eval_f: dimension mismatch");
    return c.coef_f * detail::basis_values(s.basis_f, detail::stack_xu(x, u));
}

inline Vec eval_g(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x, const Vec& u) {
    if (x.size() != s.n || u.size() != s.m) throw DataError("eval_g: dimension mismatch");
    return c.coef_g * detail::basis_values(s.basis_g, detail::stack_xu(x, u));
}

// E(x) = de/dx
inline Mat jacobian_e(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x) {
    if (x.size() != s.n) throw DataError("jacobian_e: state dimension mismatch");
    return c.coef_e * detail::basis_gradients(s.basis_e, x, s.n);
}

// F(x,u) = df/dx
inline Mat jacobian_f_x(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x, const Vec& u) {
    if (x.size() != s.n || u.size() != s.m) throw DataError("jacobian_f_x: dimension mismatch");
    return c.coef_f * detail::basis_gradients(s.basis_f, detail::stack_xu(x, u), s.n);
}

// df/du (used when differentiating synthetic trajectories in time)
inline Mat jacobian_f_u(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x, const Vec& u) {
    if (x.size() != s.n || u.size() != s.m) throw DataError("jacobian_f_u: dimension mismatch");
    Vec z = detail::stack_xu(x, u);
    Mat g(s.nf(), s.m);
    for (size_t j = 0; j < s.basis_f.size(); ++j)
        for (int k = 0; k < s.m; ++k)
            g(Eigen::Index(j), k) = detail::eval_monomial_deriv(s.basis_f[j], z, size_t(s.n + k));
    return c.coef_f * g;
}

// G(x,u) = dg/dx
inline Mat jacobian_g_x(const PolyModelSpec& s, const ModelCoefficients& c, const Vec& x, const Vec& u) {
    if (x.size() != s.n || u.size() != s.m) throw DataError("jacobian_g_x: dimension mismatch");
    return c.coef_g * detail::basis_gradients(s.basis_g, detail::stack_xu(x, u), s.n);
}

// Equation errors along a record: eps_x = E(x)xdot - f(x,u), eps_y = y - g(x,u).
inline void equation_errors(const PolyModelSpec& s, const ModelCoefficients& c,
                            const TrajectoryRecord& rec, Mat& eps_x, Mat& eps_y) {
    if (rec.state_dim() != s.n || rec.input_dim() != s.m || rec.output_dim() != s.p)
        throw DataError("equation_errors: record dimensions do not match spec");
    const Eigen::Index N = rec.samples();
    eps_x.resize(N, s.n);
    eps_y.resize(N, s.p);
    for (Eigen::Index i = 0; i < N; ++i) {
        Vec x = rec.x.row(i).transpose();
        Vec u = rec.u.row(i).transpose();
        eps_x.row(i) = (jacobian_e(s, c, x) * rec.xdot.row(i).transpose() - eval_f(s, c, x, u)).transpose();
        eps_y.row(i) = (rec.y.row(i).transpose() - eval_g(s, c, x, u)).transpose();
    }
}

// --- flattened coefficient vector -----------------------------------------
// Layout (the SDP variable contract): row-major over (output row, basis
// index), e first, then f, then g.

inline Vec flatten(const PolyModelSpec& s, const ModelCoefficients& c) {
    Vec v(s.num_coefficients());
    Eigen::Index k = 0;
    for (int r = 0; r < s.n; ++r) for (Eigen::Index j = 0; j < s.ne(); ++j) v(k++) = c.coef_e(r, j);
    for (int r = 0; r < s.n; ++r) for (Eigen::Index j = 0; j < s.nf(); ++j) v(k++) = c.coef_f(r, j);
    for (int r = 0; r < s.p; ++r) for (Eigen::Index j = 0; j < s.ng(); ++j) v(k++) = c.coef_g(r, j);
    return v;
}

inline ModelCoefficients unflatten(const PolyModelSpec& s, const Vec& v) {
    if (v.size() != s.num_coefficients()) throw DataError("unflatten: wrong vector size");
    ModelCoefficients c = ModelCoefficients::zero(s);
    Eigen::Index k = 0;
    for (int r = 0; r < s.n; ++r) for (Eigen::Index j = 0; j < s.ne(); ++j) c.coef_e(r, j) = v(k++);
    for (int r = 0; r < s.n; ++r) for (Eigen::Index j = 0; j < s.nf(); ++j) c.coef_f(r, j) = v(k++);
    for (int r = 0; r < s.p; ++r) for (Eigen::Index j = 0; j < s.ng(); ++j) c.coef_g(r, j) = v(k++);
    return c;
}

// index of e-coefficient (row r, basis j) in the flattened vector
inline Eigen::Index coef_index_e(const PolyModelSpec& s, int r, Eigen::Index j) {
    return Eigen::Index(r) * s.ne() + j;
}
inline Eigen::Index coef_index_f(const PolyModelSpec& s, int r, Eigen::Index j) {
    return s.n * s.ne() + Eigen::Index(r) * s.nf() + j;
}
inline Eigen::Index coef_index_g(const PolyModelSpec& s, int r, Eigen::Index j) {
    return s.n * s.ne() + s.n * s.nf() + Eigen::Index(r) * s.ng() + j;
}

// --- per-sample affine structure -------------------------------------------

// Frozen per-sample matrices plus the transverse frame, for fixed coefficients.
struct SamplePointData {
    Mat E, F, G;
    Vec eps_x, eps_y;
    TransverseFrame frame;
};

// Everything about one sample needed to express (E, F, G, eps_x, eps_y) as
// affine functions of the flattened coefficient vector: monomial values and
// gradients at the data point.
struct SampleAffine {
    Vec me, mf, mg;          // basis values at the sample
    Mat dme, dmf_x, dmg_x;   // basis x-gradients (|basis| x n)
    Vec x, xdot, u, y;

    Mat E(const PolyModelSpec& s, const ModelCoefficients& c) const { return c.coef_e * dme; }
    Mat F(const PolyModelSpec& s, const ModelCoefficients& c) const { (void)s; return c.coef_f * dmf_x; }
    Mat G(const PolyModelSpec& s, const ModelCoefficients& c) const { (void)s; return c.coef_g * dmg_x; }
    Vec eps_x(const PolyModelSpec& s, const ModelCoefficients& c) const {
        return c.coef_e * (dme * xdot) - c.coef_f * mf;
    }
    Vec eps_y(const PolyModelSpec& s, const ModelCoefficients& c) const {
        (void)s;
        return y - c.coef_g * mg;
    }

    SamplePointData freeze(const PolyModelSpec& s, const ModelCoefficients& c,
                           TransverseFrame frame) const {
        SamplePointData d;
        d.E = E(s, c); d.F = F(s, c); d.G = G(s, c);
        d.eps_x = eps_x(s, c); d.eps_y = eps_y(s, c);
        d.frame = std::move(frame);
        return d;
    }
};

inline std::vector<SampleAffine> affine_maps(const PolyModelSpec& s, const TrajectoryRecord& rec) {
    if (rec.state_dim() != s.n || rec.input_dim() != s.m || rec.output_dim() != s.p)
        throw DataError("affine_maps: record dimensions do not match spec");
    std::vector<SampleAffine> out(size_t(rec.samples()));
    for (Eigen::Index i = 0; i < rec.samples(); ++i) {
        SampleAffine& a = out[size_t(i)];
        a.x = rec.x.row(i).transpose();
        a.xdot = rec.xdot.row(i).transpose();
        a.u = rec.u.row(i).transpose();
        a.y = rec.y.row(i).transpose();
        Vec z = detail::stack_xu(a.x, a.u);
        a.me = detail::basis_values(s.basis_e, a.x);
        a.dme = detail::basis_gradients(s.basis_e, a.x, s.n);  // |basis| x n
        a.mf = detail::basis_values(s.basis_f, z);
        a.dmf_x = detail::basis_gradients(s.basis_f, z, s.n);
        a.mg = detail::basis_values(s.basis_g, z);
        a.dmg_x = detail::basis_gradients(s.basis_g, z, s.n);
    }
    return out;
}

// --- model file I/O ---------------------------------------------------------
// Plain-text schema, full decimal precision; round-trips bit-exactly.

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void save_model(std::ostream& os, const PolyModelSpec& s, const ModelCoefficients& c) {
    os << "orbid-model v1\n";
    os << "dims " << s.n << ' ' << s.m << ' ' << s.p << '\n';
    os << "degrees " << s.deg_e << ' ' << s.deg_f_x << ' ' << s.deg_f_u << ' ' << s.deg_g << '\n';
    auto dump_basis = [&](const char* name, const MonomialBasis& b) {
        os << name << ' ' << b.size() << '\n';
        for (const auto& e : b) {
            for (size_t i = 0; i < e.size(); ++i) os << (i ? " " : "") << e[i];
            os << '\n';
        }
    };
    dump_basis("basis_e", s.basis_e);
    dump_basis("basis_f", s.basis_f);
    dump_basis("basis_g", s.basis_g);
    auto dump_mat = [&](const char* name, const Mat& mm) {
        os << name << ' ' << mm.rows() << ' ' << mm.cols() << '\n';
        for (Eigen::Index r = 0; r < mm.rows(); ++r) {
            for (Eigen::Index j = 0; j < mm.cols(); ++j)
                os << (j ? " " : "") << detail::fmt_double(mm(r, j));
            os << '\n';
        }
    };
    dump_mat("coef_e", c.coef_e);
    dump_mat("coef_f", c.coef_f);
    dump_mat("coef_g", c.coef_g);
}

inline void save_model(const std::string& path, const PolyModelSpec& s, const ModelCoefficients& c) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open model file for writing: " + path);
    save_model(os, s, c);
}

inline void load_model(std::istream& is, PolyModelSpec& s, ModelCoefficients& c) {
    std::string tag, ver;
    is >> tag >> ver;
    if (tag != "orbid-model" || ver != "v1") throw DataError("model file: bad header");
    std::string key;
    is >> key >> s.n >> s.m >> s.p;
    if (key != "dims") throw DataError("model file: expected dims");
    is >> key >> s.deg_e >> s.deg_f_x >> s.deg_f_u >> s.deg_g;
    if (key != "degrees") throw DataError("model file: expected degrees");
    auto read_basis = [&](const char* name, size_t nvars) {
        size_t cnt;
        is >> key >> cnt;
        if (key != name) throw DataError(std::string("model file: expected ") + name);
        MonomialBasis b(cnt, Exponents(nvars, 0));
        for (auto& e : b)
            for (auto& d : e) is >> d;
        return b;
    };
    s.basis_e = read_basis("basis_e", size_t(s.n));
    s.basis_f = read_basis("basis_f", size_t(s.n + s.m));
    s.basis_g = read_basis("basis_g", size_t(s.n + s.m));
    auto read_mat = [&](const char* name) {
        Eigen::Index r, cj;
        is >> key >> r >> cj;
        if (key != name) throw DataError(std::string("model file: expected ") + name);
        Mat mm(r, cj);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < cj; ++j) is >> mm(i, j);
        return mm;
    };
    c.coef_e = read_mat("coef_e");
    c.coef_f = read_mat("coef_f");
    c.coef_g = read_mat("coef_g");
    if (!is) throw DataError("model file: truncated");
    s.validate();
    c.validate(s);
}

inline void load_model(const std::string& path, PolyModelSpec& s, ModelCoefficients& c) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open model file: " + path);
    load_model(is, s, c);
}

}  // namespace orbid

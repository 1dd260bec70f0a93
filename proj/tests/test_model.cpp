#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "orbid/model.hpp"
#include "orbid/trajectory.hpp"

using namespace orbid;

namespace {

// independent term-by-term evaluator used as the oracle
double naive_poly(const MonomialBasis& basis, const Vec& coefs_row, const Vec& z) {
    double acc = 0.0;
    for (size_t j = 0; j < basis.size(); ++j) {
        double term = coefs_row(Eigen::Index(j));
        for (size_t v = 0; v < basis[j].size(); ++v)
            term *= std::pow(z(Eigen::Index(v)), basis[j][v]);
        acc += term;
    }
    return acc;
}

ModelCoefficients random_coefs(const PolyModelSpec& s, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    ModelCoefficients c = ModelCoefficients::zero(s);
    for (Eigen::Index i = 0; i < c.coef_e.size(); ++i) c.coef_e.data()[i] = d(rng);
    for (Eigen::Index i = 0; i < c.coef_f.size(); ++i) c.coef_f.data()[i] = d(rng);
    for (Eigen::Index i = 0; i < c.coef_g.size(); ++i) c.coef_g.data()[i] = d(rng);
    return c;
}

}  // namespace

TEST_CASE("eval_e: identity map") {
    auto s = PolyModelSpec::dense(2, 1, 1, 1, 1, 0, 1);
    auto c = ModelCoefficients::identity_e(s);
    Vec x(2);
    x << 1.0, 2.0;
    CHECK((eval_e(s, c, x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eval_f: single monomial x1*u") {
    auto s = PolyModelSpec::dense(2, 1, 1, 1, 2, 1, 1);
    auto c = ModelCoefficients::zero(s);
    Exponents want{1, 0, 1};  // x1 * u
    for (size_t j = 0; j < s.basis_f.size(); ++j)
        if (s.basis_f[j] == want) c.coef_f(0, Eigen::Index(j)) = 1.0;
    Vec x(2), u(1);
    x << 3.0, -7.0;
    u << 2.0;
    Vec f = eval_f(s, c, x, u);
    CHECK(f(0) == doctest::Approx(6.0));
    CHECK(f(1) == 0.0);
}

TEST_CASE("eval matches the brute-force monomial-sum oracle") {
    auto s = PolyModelSpec::dense(3, 1, 1, 3, 3, 1, 2);
    auto c = random_coefs(s, 42);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        Vec x(3), u(1);
        for (int i = 0; i < 3; ++i) x(i) = d(rng);
        u(0) = d(rng);
        Vec z(4);
        z << x, u;
        Vec e = eval_e(s, c, x), f = eval_f(s, c, x, u), g = eval_g(s, c, x, u);
        for (int r = 0; r < 3; ++r) {
            const double we = naive_poly(s.basis_e, c.coef_e.row(r).transpose(), x);
            const double wf = naive_poly(s.basis_f, c.coef_f.row(r).transpose(), z);
            CHECK(std::abs(e(r) - we) <= 1e-12 * (1.0 + std::abs(we)));
            CHECK(std::abs(f(r) - wf) <= 1e-12 * (1.0 + std::abs(wf)));
        }
        const double wg = naive_poly(s.basis_g, c.coef_g.row(0).transpose(), z);
        CHECK(std::abs(g(0) - wg) <= 1e-12 * (1.0 + std::abs(wg)));
    }
}

TEST_CASE("jacobian_e: identity and hand-differentiated monomials") {
    auto s = PolyModelSpec::dense(2, 0, 1, 2, 1, 0, 1);
    auto c = ModelCoefficients::identity_e(s);
    Vec x(2);
    x << 5.0, -3.0;
    CHECK((jacobian_e(s, c, x) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

    // e(x) = (x1^2, x2)
    auto c2 = ModelCoefficients::zero(s);
    for (size_t j = 0; j < s.basis_e.size(); ++j) {
        if (s.basis_e[j] == Exponents{2, 0}) c2.coef_e(0, Eigen::Index(j)) = 1.0;
        if (s.basis_e[j] == Exponents{0, 1}) c2.coef_e(1, Eigen::Index(j)) = 1.0;
    }
    Vec x2(2);
    x2 << 3.0, 1.0;
    Mat E = jacobian_e(s, c2, x2);
    CHECK(E(0, 0) == doctest::Approx(6.0));
    CHECK(E(0, 1) == 0.0);
    CHECK(E(1, 0) == 0.0);
    CHECK(E(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("jacobians match central finite differences") {
    auto s = PolyModelSpec::dense(3, 2, 2, 3, 2, 2, 2);
    auto c = random_coefs(s, 5);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        Vec x(3), u(2);
        for (int i = 0; i < 3; ++i) x(i) = d(rng);
        for (int i = 0; i < 2; ++i) u(i) = d(rng);
        Mat E = jacobian_e(s, c, x), F = jacobian_f_x(s, c, x, u), G = jacobian_g_x(s, c, x, u);
        for (int k = 0; k < 3; ++k) {
            Vec xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            Vec de = (eval_e(s, c, xp) - eval_e(s, c, xm)) / (2 * h);
            Vec df = (eval_f(s, c, xp, u) - eval_f(s, c, xm, u)) / (2 * h);
            Vec dg = (eval_g(s, c, xp, u) - eval_g(s, c, xm, u)) / (2 * h);
            CHECK((E.col(k) - de).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + de.cwiseAbs().maxCoeff()));
            CHECK((F.col(k) - df).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + df.cwiseAbs().maxCoeff()));
            CHECK((G.col(k) - dg).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + dg.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("equation_errors: self-consistency on self-generated data") {
    SyntheticConfig cfg;
    cfg.system = VanDerPol{1.0};
    cfg.duration = 10.0;
    cfg.dt = 0.01;
    auto res = gen_synthetic(cfg);
    Mat ex, ey;
    equation_errors(res.spec, res.coefs, res.truth, ex, ey);
    CHECK(ex.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(ey.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("equation_errors: zero dynamics returns the raw signals") {
    SyntheticConfig cfg;
    cfg.system = LinearOsc{1.0, 0.1};
    cfg.duration = 2.0;
    cfg.dt = 0.01;
    auto res = gen_synthetic(cfg);
    auto c = ModelCoefficients::identity_e(res.spec);  // e = x, f = 0, g = 0
    Mat ex, ey;
    equation_errors(res.spec, c, res.truth, ex, ey);
    CHECK((ex - res.truth.xdot).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((ey - res.truth.y).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("equation_errors: linear model against central-difference derivatives") {
    SyntheticConfig cfg;
    cfg.system = LinearOsc{1.0, 0.1};
    cfg.duration = 5.0;
    cfg.dt = 0.01;
    auto res = gen_synthetic(cfg);
    TrajectoryRecord rec = res.truth;
    // replace the exact rates with central differences; eps_x must stay below
    // the O(dt^2) differencing error bound
    for (Eigen::Index i = 1; i + 1 < rec.samples(); ++i)
        rec.xdot.row(i) = (rec.x.row(i + 1) - rec.x.row(i - 1)) / (2.0 * rec.dt);
    Mat ex, ey;
    equation_errors(res.spec, res.coefs, rec, ex, ey);
    double interior_max = 0.0;
    for (Eigen::Index i = 1; i + 1 < rec.samples(); ++i)
        interior_max = std::max(interior_max, ex.row(i).cwiseAbs().maxCoeff());
    const double bound = rec.dt * rec.dt / 6.0 * 2.0;  // |x'''| <= ~2 for this oscillator
    CHECK(interior_max < bound * 1.5);
}

TEST_CASE("affine maps: constants, one-hot probing, exact linearity") {
    SyntheticConfig cfg;
    cfg.system = VanDerPol{1.0};
    cfg.duration = 1.0;
    cfg.dt = 0.02;
    auto res = gen_synthetic(cfg);
    auto s = PolyModelSpec::dense(2, 1, 1, 2, 2, 1, 1);
    auto maps = affine_maps(s, res.truth);
    const Eigen::Index nc = s.num_coefficients();

    // constant part: zero coefficients give E=F=G=0, eps_x=0, eps_y=y
    auto zero = ModelCoefficients::zero(s);
    for (size_t i : {size_t(0), size_t(maps.size() / 2)}) {
        CHECK(maps[i].E(s, zero).cwiseAbs().maxCoeff() == 0.0);
        CHECK(maps[i].eps_x(s, zero).cwiseAbs().maxCoeff() == 0.0);
        CHECK((maps[i].eps_y(s, zero) - maps[i].y).cwiseAbs().maxCoeff() == 0.0);
    }

    // one-hot probing equals the direct evaluation path
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Eigen::Index> pick(0, nc - 1);
    const SampleAffine& a = maps[5];
    for (int t = 0; t < 25; ++t) {
        Vec v = Vec::Zero(nc);
        v(pick(rng)) = 1.0;
        auto c = unflatten(s, v);
        Vec x = a.x, u = a.u;
        CHECK((a.E(s, c) - jacobian_e(s, c, x)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((a.F(s, c) - jacobian_f_x(s, c, x, u)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((a.G(s, c) - jacobian_g_x(s, c, x, u)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((a.eps_x(s, c) - (jacobian_e(s, c, x) * a.xdot - eval_f(s, c, x, u))).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((a.eps_y(s, c) - (a.y - eval_g(s, c, x, u))).cwiseAbs().maxCoeff() < 1e-14);
    }

    // random coefficients match equation_errors end to end
    auto c = random_coefs(s, 77);
    Mat ex, ey;
    equation_errors(s, c, res.truth, ex, ey);
    for (size_t i = 0; i < maps.size(); i += 7) {
        CHECK((maps[i].eps_x(s, c) - ex.row(Eigen::Index(i)).transpose()).cwiseAbs().maxCoeff()
              < 1e-12 * (1.0 + ex.row(Eigen::Index(i)).cwiseAbs().maxCoeff()));
        CHECK((maps[i].eps_y(s, c) - ey.row(Eigen::Index(i)).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }

    // exact linearity of the map
    auto c1 = random_coefs(s, 1), c2 = random_coefs(s, 2);
    Vec v1 = flatten(s, c1), v2 = flatten(s, c2);
    auto mix = unflatten(s, 0.7 * v1 - 1.3 * v2);
    Vec lhs = a.eps_x(s, mix);
    Vec rhs = 0.7 * a.eps_x(s, c1) - 1.3 * a.eps_x(s, c2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
}

TEST_CASE("chain rule: d/dt e(x(t)) agrees with E(x) xdot at O(h^2)") {
    auto s = PolyModelSpec::dense(2, 0, 1, 3, 1, 0, 1);
    auto c = random_coefs(s, 9);
    auto x_of_t = [](double t) {
        Vec x(2);
        x << std::sin(t), std::cos(2.0 * t);
        return x;
    };
    auto xdot_of_t = [](double t) {
        Vec v(2);
        v << std::cos(t), -2.0 * std::sin(2.0 * t);
        return v;
    };
    auto err_at = [&](double h) {
        double m = 0.0;
        for (double t = 0.3; t < 3.0; t += 0.37) {
            Vec fd = (eval_e(s, c, x_of_t(t + h)) - eval_e(s, c, x_of_t(t - h))) / (2 * h);
            Vec an = jacobian_e(s, c, x_of_t(t)) * xdot_of_t(t);
            m = std::max(m, (fd - an).cwiseAbs().maxCoeff());
        }
        return m;
    };
    const double e1 = err_at(1e-3), e2 = err_at(5e-4);
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
}

TEST_CASE("flatten/unflatten round trip and layout") {
    auto s = PolyModelSpec::dense(2, 1, 1, 2, 2, 1, 1);
    auto c = random_coefs(s, 4);
    Vec v = flatten(s, c);
    CHECK(v.size() == s.num_coefficients());
    auto c2 = unflatten(s, v);
    CHECK((c.coef_e - c2.coef_e).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.coef_f - c2.coef_f).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.coef_g - c2.coef_g).cwiseAbs().maxCoeff() == 0.0);
    CHECK(v(coef_index_e(s, 1, 2)) == c.coef_e(1, 2));
    CHECK(v(coef_index_f(s, 0, 3)) == c.coef_f(0, 3));
    CHECK(v(coef_index_g(s, 0, 1)) == c.coef_g(0, 1));
}

TEST_CASE("model file round-trip is bit-exact") {
    auto s = PolyModelSpec::dense(2, 1, 1, 3, 3, 1, 1);
    auto c = random_coefs(s, 123);
    c.coef_e(0, 0) = 1.0 / 3.0;
    c.coef_f(1, 2) = 1e-17;
    c.coef_g(0, 0) = -0.0;
    std::stringstream ss;
    save_model(ss, s, c);
    PolyModelSpec s2;
    ModelCoefficients c2;
    load_model(ss, s2, c2);
    CHECK(s2.basis_e == s.basis_e);
    CHECK(s2.basis_f == s.basis_f);
    CHECK(s2.basis_g == s.basis_g);
    CHECK(std::memcmp(c.coef_e.data(), c2.coef_e.data(), sizeof(double) * size_t(c.coef_e.size())) == 0);
    CHECK(std::memcmp(c.coef_f.data(), c2.coef_f.data(), sizeof(double) * size_t(c.coef_f.size())) == 0);
    CHECK(std::memcmp(c.coef_g.data(), c2.coef_g.data(), sizeof(double) * size_t(c.coef_g.size())) == 0);
}

TEST_CASE("spec validation rejects duplicates and bad shapes") {
    auto s = PolyModelSpec::dense(2, 0, 1, 2, 1, 0, 1);
    s.basis_e.push_back(s.basis_e.front());
    CHECK_THROWS_AS(s.validate(), DataError);
    auto s2 = PolyModelSpec::dense(2, 0, 1, 2, 1, 0, 1);
    auto c = ModelCoefficients::zero(s2);
    Vec x(3);
    x << 1, 2, 3;
    CHECK_THROWS_AS(eval_e(s2, c, x), DataError);
}

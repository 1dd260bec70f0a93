// Acceptance suite: one test per criterion, executed in order. The slack-LMI
// oracle gate must pass before any fit-based criterion runs.
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "orbid/cli.hpp"
#include "orbid/sdp/fit.hpp"
#include "orbid/simulate.hpp"
#include "orbid/trajectory.hpp"
#include "orbid/verify.hpp"

using namespace orbid;

namespace {

bool g_gate_passed = false;

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void report(int criterion, bool pass, const std::string& detail, double seconds) {
    std::printf("[%s] criterion %d (%.1fs): %s\n", pass ? "PASS" : "FAIL", criterion, seconds,
                detail.c_str());
    std::fflush(stdout);
}

// noiseless Van der Pol ground-truth record, autonomous coordinates
TrajectoryRecord vdp_record(double T, double dt) {
    SyntheticConfig cfg;
    cfg.system = VanDerPol{1.0};
    cfg.duration = T;
    cfg.dt = dt;
    auto gen = gen_synthetic(cfg);
    TrajectoryRecord rec = gen.truth;
    rec.u.resize(rec.samples(), 0);
    return rec;
}

struct ChainFixture {
    bool ready = false;
    verify::ChainCheckResult result;
    TrajectoryRecord record;
    PolyModelSpec spec;
};

ChainFixture& chain_fixture() {
    static ChainFixture f = [] {
        ChainFixture fx;
        fx.record = vdp_record(30.0, 0.01);
        fx.result = verify::check_bound_chain(fx.record, 3, 1e-4);
        fx.spec = PolyModelSpec::dense(2, 0, 1, 3, 3, 0, 1);
        fx.ready = fx.result.fit.report.status == "optimal";
        return fx;
    }();
    return f;
}

// minimum eigenvalue of E(x)+E(x)' over a grid spanning the record's
// bounding box inflated by 25%
double wellposedness_margin(const PolyModelSpec& spec, const ModelCoefficients& coefs,
                            const TrajectoryRecord& rec, int grid_per_dim = 20) {
    const Eigen::Index n = spec.n;
    Vec lo = rec.x.colwise().minCoeff().transpose();
    Vec hi = rec.x.colwise().maxCoeff().transpose();
    Vec mid = 0.5 * (lo + hi);
    Vec half = 0.625 * (hi - lo);  // 1.25x inflation
    double min_eig = std::numeric_limits<double>::infinity();
    std::vector<int> idx(size_t(n), 0);
    while (true) {
        Vec x(n);
        for (Eigen::Index k = 0; k < n; ++k)
            x(k) = mid(k) + half(k) * (2.0 * idx[size_t(k)] / double(grid_per_dim - 1) - 1.0);
        Mat E = jacobian_e(spec, coefs, x);
        Eigen::SelfAdjointEigenSolver<Mat> es(E + E.transpose());
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
        Eigen::Index k = 0;
        while (k < n && ++idx[size_t(k)] == grid_per_dim) idx[size_t(k++)] = 0;
        if (k == n) break;
    }
    return min_eig;
}

double peak_to_peak(const Vec& y, Eigen::Index from, Eigen::Index to) {
    from = std::clamp<Eigen::Index>(from, 0, y.size());
    to = std::clamp<Eigen::Index>(to, from, y.size());
    if (to - from < 2) return 0.0;
    return y.segment(from, to - from).maxCoeff() - y.segment(from, to - from).minCoeff();
}

struct ComparisonFixture {
    bool ready = false;
    double train_T = 30.0, dt = 0.01;
    TrajectoryRecord train;      // built states from noisy outputs
    TrajectoryRecord ref3;       // clean built-state record over 3x the horizon
    double ref_energy_3T = 0.0;  // integral of the clean squared output
    sdp::FitResult fit_eq, fit_rie, fit_trie;
    SimResult sim_eq, sim_rie, sim_trie;
    double E_eq = 0.0, E_trie = 0.0;       // long-horizon same-time errors
    double Eperp_trie = 0.0;               // orbital error of the trie model
    double pp_ref = 0.0;
};

ComparisonFixture& comparison_fixture() {
    static ComparisonFixture f = [] {
        ComparisonFixture fx;
        const LaguerreBank bank{1.0, 2};
        const SmootherConfig smoother{21, 3};

        SyntheticConfig clean3;
        clean3.system = VanDerPol{1.0};
        clean3.duration = 3.0 * fx.train_T;
        clean3.dt = fx.dt;
        auto gen3 = gen_synthetic(clean3);
        fx.ref3 = build_state(gen3.raw, bank, smoother);

        // training record: first third with 1% output noise
        SyntheticConfig noisy = clean3;
        noisy.duration = fx.train_T;
        const double sig_std =
            std::sqrt(gen3.raw.outputs.col(0).squaredNorm() / double(gen3.raw.samples()));
        noisy.noise_std = 0.01 * sig_std;
        noisy.seed = 5;
        auto genn = gen_synthetic(noisy);
        fx.train = build_state(genn.raw, bank, smoother);

        double acc = 0.0;
        for (Eigen::Index i = 0; i + 1 < fx.ref3.samples(); ++i)
            acc += 0.5 *
                   (fx.ref3.y.row(i).squaredNorm() + fx.ref3.y.row(i + 1).squaredNorm()) *
                   fx.dt;
        fx.ref_energy_3T = acc;
        fx.pp_ref = peak_to_peak(gen3.raw.outputs.col(0), 0, gen3.raw.samples());

        auto spec = PolyModelSpec::dense(int(fx.train.state_dim()), int(fx.train.input_dim()),
                                         1, 3, 3, 0, 1);
        auto run = [&](sdp::FitKind kind) {
            sdp::FitOptions fo;
            fo.kind = kind;
            return sdp::fit(spec, fx.train, fo);
        };
        fx.fit_eq = run(sdp::FitKind::eq);
        fx.fit_rie = run(sdp::FitKind::rie);
        fx.fit_trie = run(sdp::FitKind::trie);

        auto sim3 = [&](const sdp::FitResult& r) {
            Mat u_ext = Mat::Zero(fx.ref3.samples(), fx.ref3.input_dim());
            return simulate(spec, r.coefs, fx.train.x.row(0).transpose(), u_ext, fx.dt);
        };
        if (fx.fit_eq.report.status == "optimal") fx.sim_eq = sim3(fx.fit_eq);
        if (fx.fit_rie.report.status == "optimal") fx.sim_rie = sim3(fx.fit_rie);
        if (fx.fit_trie.report.status == "optimal") fx.sim_trie = sim3(fx.fit_trie);

        if (fx.fit_trie.report.status == "optimal") {
            fx.E_trie = sim_error(fx.sim_trie, fx.ref3);
            fx.Eperp_trie = orbital_sim_error(fx.sim_trie, fx.ref3).orbital_err;
        }
        if (fx.fit_eq.report.status == "optimal") fx.E_eq = sim_error(fx.sim_eq, fx.ref3);
        fx.ready = true;
        return fx;
    }();
    return f;
}

}  // namespace

TEST_CASE("criterion 1: relaxation dominates the exact transverse bound") {
    const double t0 = now_seconds();
    auto r = verify::check_relaxation_inequality(1200, 11);
    const double dt = now_seconds() - t0;
    report(1, r.pass && dt < 10.0, r.detail, dt);
    CHECK(r.pass);
    CHECK(dt < 10.0);
}

TEST_CASE("criterion 2: splitting identity and scalar relaxation bound") {
    const double t0 = now_seconds();
    auto a = verify::check_split_identity(1000, 13);
    auto b = verify::check_scalar_relaxation(1000, 17);
    const double dt = now_seconds() - t0;
    report(2, a.pass && b.pass && dt < 1.0, a.detail + "; " + b.detail, dt);
    CHECK(a.pass);
    CHECK(b.pass);
    CHECK(dt < 1.0);
}

TEST_CASE("criterion 3: slack-LMI oracle gate (must pass before fits)") {
    const double t0 = now_seconds();
    auto r = verify::check_lmi_oracle(200, 7);
    const double dt = now_seconds() - t0;
    g_gate_passed = r.pass;
    report(3, r.pass && dt < 60.0, r.detail, dt);
    CHECK(r.pass);
    CHECK(dt < 60.0);
}

TEST_CASE("criterion 4: dissipation bound chain at desk scale") {
    REQUIRE_MESSAGE(g_gate_passed, "oracle gate must pass before any fit runs");
    const double t0 = now_seconds();
    auto& fx = chain_fixture();
    const double dt = now_seconds() - t0;
    const bool pass = fx.ready && fx.result.chain.pass && fx.result.pointwise.pass && dt < 600.0;
    report(4, pass, fx.result.chain.detail + "; " + fx.result.pointwise.detail, dt);
    REQUIRE(fx.ready);
    CHECK(fx.result.chain.pass);
    CHECK(fx.result.pointwise.pass);
    CHECK(dt < 600.0);
}

TEST_CASE("criterion 5: finite-theta oracle for the projected deviation") {
    const double t0 = now_seconds();
    auto r = verify::check_projected_deviation(20.0, 0.01, 1e-4);
    const double dt = now_seconds() - t0;
    report(5, r.pass, r.detail, dt);
    CHECK(r.pass);
}

TEST_CASE("criterion 6: three-method comparison on noisy oscillator data") {
    REQUIRE_MESSAGE(g_gate_passed, "oracle gate must pass before any fit runs");
    const double t0 = now_seconds();
    auto& fx = comparison_fixture();
    REQUIRE(fx.ready);
    REQUIRE_MESSAGE(fx.fit_trie.report.status == "optimal", "transverse fit must solve");

    // (a) transverse model: bounded, sustained oscillation, small orbital error
    const Eigen::Index N3 = fx.ref3.samples();
    const Eigen::Index lastT = N3 / 3;
    bool a_bounded = fx.sim_trie.status == SimStatus::completed;
    double pp_trie_tail = a_bounded
        ? peak_to_peak(fx.sim_trie.outputs.col(0), N3 - lastT, N3) : 0.0;
    bool a_oscillates = pp_trie_tail >= 0.5 * fx.pp_ref;
    bool a_orbital = fx.Eperp_trie <= 0.25 * fx.ref_energy_3T;
    const bool pass_a = a_bounded && a_oscillates && a_orbital;

    // (b) equation-error model: diverges or at least doubles the deviation
    bool pass_b = false;
    std::string b_note;
    if (fx.fit_eq.report.status != "optimal") {
        b_note = "eq fit failed to solve";
    } else if (fx.sim_eq.status != SimStatus::completed) {
        pass_b = true;
        b_note = "eq simulation diverges at t=" + std::to_string(fx.sim_eq.t_stop);
    } else {
        pass_b = fx.E_eq >= 2.0 * fx.E_trie;
        b_note = "E_eq=" + std::to_string(fx.E_eq) + " vs E_trie=" + std::to_string(fx.E_trie);
    }

    // (c) non-transverse robust model: infeasible local costs or decaying
    bool pass_c = false;
    std::string c_note;
    if (fx.fit_rie.report.status != "optimal") {
        c_note = "rie fit failed to solve (" + fx.fit_rie.report.status + ")";
    } else {
        auto samples = freeze_samples(
            PolyModelSpec::dense(int(fx.train.state_dim()), int(fx.train.input_dim()), 1, 3, 3,
                                 0, 1),
            fx.fit_rie.coefs, fx.train, fx.fit_rie.frames);
        Eigen::Index infinite = 0;
        for (const auto& s : samples)
            if (!std::isfinite(rie_local(s, fx.fit_rie.metric))) ++infinite;
        const double frac = double(infinite) / double(samples.size());
        bool decayed = false;
        if (fx.sim_rie.status == SimStatus::completed) {
            const Eigen::Index Ns = fx.sim_rie.samples();
            const double pp_head = peak_to_peak(fx.sim_rie.outputs.col(0), 0, Ns / 3);
            const double pp_tail = peak_to_peak(fx.sim_rie.outputs.col(0), Ns - Ns / 3, Ns);
            decayed = pp_tail <= 0.5 * pp_head;
            c_note = "infinite fraction " + std::to_string(frac) + ", tail/head amplitude " +
                     std::to_string(pp_head > 0 ? pp_tail / pp_head : 0.0);
        } else {
            c_note = "infinite fraction " + std::to_string(frac) + ", rie sim did not complete";
        }
        pass_c = frac >= 0.01 || decayed;
    }

    const double dt = now_seconds() - t0;
    std::ostringstream os;
    os << "(a) bounded=" << a_bounded << " oscillates=" << a_oscillates
       << " orbital=" << fx.Eperp_trie << "/" << 0.25 * fx.ref_energy_3T
       << "; (b) " << b_note << "; (c) " << c_note;
    const bool pass = pass_a && pass_b && pass_c && dt < 1800.0;
    report(6, pass, os.str(), dt);
    CHECK(pass_a);
    CHECK(pass_b);
    CHECK(pass_c);
    CHECK(dt < 1800.0);
}

TEST_CASE("criterion 7: projector algebra sweep") {
    const double t0 = now_seconds();
    auto r = verify::check_projectors(30.0, 0.01);
    const double dt = now_seconds() - t0;
    report(7, r.pass && dt < 5.0, r.detail, dt);
    CHECK(r.pass);
    CHECK(dt < 5.0);
}

TEST_CASE("criterion 8: well-posedness margin of every returned model") {
    REQUIRE_MESSAGE(g_gate_passed, "oracle gate must pass before any fit runs");
    const double t0 = now_seconds();
    auto& fx4 = chain_fixture();
    auto& fx6 = comparison_fixture();
    REQUIRE(fx4.ready);
    double worst = std::numeric_limits<double>::infinity();
    worst = std::min(worst, wellposedness_margin(fx4.spec, fx4.result.fit.coefs, fx4.record));
    auto spec6 = PolyModelSpec::dense(int(fx6.train.state_dim()), int(fx6.train.input_dim()), 1,
                                      3, 3, 0, 1);
    for (const auto* fr : {&fx6.fit_eq, &fx6.fit_rie, &fx6.fit_trie})
        if (fr->report.status == "optimal")
            worst = std::min(worst, wellposedness_margin(spec6, fr->coefs, fx6.train));
    const double dt = now_seconds() - t0;
    const bool pass = worst >= 1.0 - 1e-6;
    report(8, pass, "worst grid min-eig of E+E' = " + std::to_string(worst), dt);
    CHECK(pass);
}

TEST_CASE("criterion 9: self-identification on in-class data") {
    REQUIRE_MESSAGE(g_gate_passed, "oracle gate must pass before any fit runs");
    const double t0 = now_seconds();
    TrajectoryRecord rec = vdp_record(30.0, 0.01);
    auto spec = PolyModelSpec::dense(2, 0, 1, 3, 3, 0, 1);

    // generator expressed in the fit's coefficient layout
    SyntheticConfig cfg;
    cfg.system = VanDerPol{1.0};
    cfg.duration = 1.0;
    auto gen = gen_synthetic(cfg);
    auto truth = ModelCoefficients::zero(spec);
    truth.coef_e = ModelCoefficients::identity_e(spec).coef_e;
    for (size_t j = 0; j < gen.spec.basis_f.size(); ++j) {
        Exponents e = gen.spec.basis_f[j];  // over (x, u); strip the input slot
        if (e.back() != 0) continue;
        e.pop_back();
        for (size_t k = 0; k < spec.basis_f.size(); ++k)
            if (spec.basis_f[k] == e)
                truth.coef_f.col(Eigen::Index(k)) = gen.coefs.coef_f.col(Eigen::Index(j));
    }
    for (size_t j = 0; j < gen.spec.basis_g.size(); ++j) {
        Exponents e = gen.spec.basis_g[j];
        if (e.back() != 0) continue;
        e.pop_back();
        for (size_t k = 0; k < spec.basis_g.size(); ++k)
            if (spec.basis_g[k] == e)
                truth.coef_g.col(Eigen::Index(k)) = gen.coefs.coef_g.col(Eigen::Index(j));
    }

    // part 1: equation-error fit reproduces the outputs on held-out data
    sdp::FitOptions fo_eq;
    fo_eq.kind = sdp::FitKind::eq;
    fo_eq.solver.gap_tol = 1e-11;
    const Eigen::Index n_train = Eigen::Index(0.7 * double(rec.samples()));
    auto res_eq = sdp::fit(spec, cli::record_prefix(rec, n_train), fo_eq);
    REQUIRE(res_eq.report.status == "optimal");
    auto em = cli::evaluate_model(spec, res_eq.coefs, rec, 0.0, 0.7);
    const double T = rec.duration();
    const bool pass_val = em.completed && em.val_sim_err < 1e-6 * T;

    // part 2: transverse objective at the optimum does not exceed the value
    // pinned at the generator's coefficients
    sdp::FitOptions fo_trie;
    fo_trie.kind = sdp::FitKind::trie;
    auto res_trie = sdp::fit(spec, rec, fo_trie);
    REQUIRE(res_trie.report.status == "optimal");
    sdp::FitOptions fo_pin = fo_trie;
    Vec flat = flatten(spec, truth);
    for (Eigen::Index k = 0; k < flat.size(); ++k) fo_pin.pin_coefficients.emplace_back(k, flat(k));
    auto res_pin = sdp::fit(spec, rec, fo_pin);
    bool pass_obj;
    std::string obj_note;
    if (res_pin.report.status == "optimal") {
        pass_obj = res_trie.report.objective <= res_pin.report.objective + 1e-6;
        obj_note = "optimum " + std::to_string(res_trie.report.objective) +
                   " <= pinned " + std::to_string(res_pin.report.objective);
    } else {
        // the generator itself admits no feasible certificate: the optimum
        // trivially does not exceed it
        pass_obj = true;
        obj_note = "generator coefficients certify no finite bound (" +
                   res_pin.report.status + ")";
    }
    const double dt = now_seconds() - t0;
    std::ostringstream os;
    os << "val_sim_err=" << em.val_sim_err << " limit=" << 1e-6 * T << "; " << obj_note;
    report(9, pass_val && pass_obj, os.str(), dt);
    CHECK(pass_val);
    CHECK(pass_obj);
}

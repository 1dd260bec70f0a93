#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "orbid/sdp/program.hpp"
#include "orbid/types.hpp"

namespace orbid::sdp {

struct SolverOptions {
    int max_iters = 200;
    double gap_tol = 1e-8;     // relative duality gap
    double feas_tol = 1e-7;    // relative primal/dual residuals
    double step_frac = 0.9;    // fraction of the distance to the boundary
    bool verbose = false;
};

namespace detail {

// Internal dense view of one block and its variable list (deduplicated).
struct BlockData {
    Eigen::Index dim = 0;
    Mat C;
    std::vector<int> vars;
    std::vector<Mat> mats;
};

struct BlockWork {
    Mat X, S, Sinv, Rd, T, dX, dS, dXa, dSa;
    Eigen::LLT<Mat> sllt;
    std::vector<Mat> W;  // sym(X A_k S^{-1}) scratch, one per block variable
    // Schur pieces for this block's local variables
    Mat Hll, Hgl;
    Eigen::LLT<Mat> hll_llt;
    Vec rl, dl;
};

inline double sym_inner(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

// largest step alpha with M + alpha dM staying PSD
inline double max_step(const Mat& M, const Mat& dM) {
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success) return 0.0;
    Mat L = llt.matrixL();
    Mat W = L.triangularView<Eigen::Lower>().solve(dM);
    W = L.triangularView<Eigen::Lower>().solve(W.transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()));
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin >= -1e-14) return 1e30;
    return -1.0 / lmin;
}

// Core infeasible primal-dual path following (HKM direction, Mehrotra
// predictor-corrector) on min c'v s.t. C_b + sum_j v_j A_{b,j} >= 0.
class InteriorPoint {
  public:
    // blocks are only read; the caller keeps them alive for the solve
    InteriorPoint(const std::vector<BlockData>& blocks, Vec c, SolverOptions opts)
        : blocks_(blocks), c_(std::move(c)), opts_(opts), nv_(int(c_.size())) {
        analyze();
    }

    // start from a strictly dual-interior point: S = C + A(v0) must be PD
    void warm_start(const Vec& v0) { v_init_ = v0; }

    ConicSolution run() {
        ConicSolution sol;
        sol.x = Vec::Zero(nv_);
        if (blocks_.empty()) {
            // purely linear: bounded only if the objective vanishes
            if (nv_ == 0 || c_.cwiseAbs().maxCoeff() == 0.0) {
                sol.status = SolveStatus::optimal;
                sol.objective = 0.0;
            } else {
                sol.status = SolveStatus::unbounded;
                sol.message = "no conic constraints on a nonzero objective";
            }
            return sol;
        }
        for (int j : unused_vars_)
            if (c_(j) != 0.0) {
                sol.status = SolveStatus::unbounded;
                sol.message = "objective on a variable absent from all blocks";
                return sol;
            }
        if (nv_ == 0) {
            // pure feasibility of the constant blocks
            for (const auto& b : blocks_) {
                Eigen::SelfAdjointEigenSolver<Mat> es(b.C);
                if (es.eigenvalues().minCoeff() < -opts_.feas_tol * (1.0 + b.C.norm())) {
                    sol.status = SolveStatus::infeasible;
                    sol.message = "constant block is not positive semidefinite";
                    return sol;
                }
            }
            sol.status = SolveStatus::optimal;
            sol.objective = 0.0;
            return sol;
        }

        initialize();
        double best_err = std::numeric_limits<double>::infinity();
        Vec best_v = v_;
        int stall = 0;

        for (int iter = 0; iter < opts_.max_iters; ++iter) {
            compute_residuals();
            const double pobj = c_.dot(v_);
            const double dobj = -inner_CX();
            const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
            const double err = gap + prinf_ + dinf_;
            if (err < best_err) { best_err = err; best_v = v_; }
            if (opts_.verbose)
                std::fprintf(stderr, "it %3d mu %9.2e gap %9.2e pinf %9.2e dinf %9.2e\n",
                             iter, mu_, gap, prinf_, dinf_);

            if (gap < opts_.gap_tol && prinf_ < opts_.feas_tol && dinf_ < opts_.feas_tol) {
                sol.status = SolveStatus::optimal;
                sol.x = v_;
                sol.objective = pobj;
                sol.iterations = iter;
                return sol;
            }
            if (err > 1e4 * best_err && best_err < 1e-4) {
                // the end game is diverging numerically; the best iterate is
                // already much better than anything we will reach from here
                sol.status = SolveStatus::numerical_limit;
                sol.x = best_v;
                sol.objective = c_.dot(best_v);
                sol.iterations = iter;
                sol.message = "numerical divergence near the solution";
                return sol;
            }
            if (detect_infeasible()) {
                sol.status = SolveStatus::infeasible;
                sol.iterations = iter;
                sol.message = "primal improving ray certifies an empty feasible set";
                return sol;
            }
            if (detect_unbounded()) {
                sol.status = SolveStatus::unbounded;
                sol.iterations = iter;
                sol.message = "dual improving ray: objective unbounded below";
                return sol;
            }

            if (!build_schur()) {
                sol.status = SolveStatus::numerical_limit;
                sol.x = best_v;
                sol.objective = c_.dot(best_v);
                sol.iterations = iter;
                sol.message = "Schur complement factorization failed";
                return sol;
            }

            // predictor (sigma = 0)
            Vec dv;
            if (!direction(0.0, false, dv)) {
                sol.status = SolveStatus::numerical_limit;
                sol.x = best_v;
                sol.objective = c_.dot(best_v);
                sol.iterations = iter;
                sol.message = "predictor solve failed";
                return sol;
            }
            double ap = 1e30, ad = 1e30;
            for (auto& w : work_) {
                ap = std::min(ap, max_step(w.X, w.dX));
                ad = std::min(ad, max_step(w.S, w.dS));
            }
            ap = std::min(1.0, opts_.step_frac * ap);
            ad = std::min(1.0, opts_.step_frac * ad);
            double mu_aff = 0.0;
            for (auto& w : work_)
                mu_aff += ((w.X + ap * w.dX) * (w.S + ad * w.dS)).trace();
            mu_aff = std::max(mu_aff, 0.0) / double(total_dim_);
            double sigma = std::pow(mu_aff / std::max(mu_, 1e-300), 3.0);
            sigma = std::clamp(sigma, 1e-10, 1.0);
            // an unhealthy predictor poisons the second-order correction;
            // fall back to a plain recentering step instead
            const bool use_corrector = std::min(ap, ad) > 0.05;
            if (!use_corrector) sigma = 0.8;
            // keep complementarity from outrunning feasibility
            if (gap <= 1e-2 * std::min(prinf_, dinf_)) sigma = std::max(sigma, 0.5);
            for (auto& w : work_) { w.dXa = w.dX; w.dSa = w.dS; }

            // corrector
            if (!direction(sigma, use_corrector, dv)) {
                sol.status = SolveStatus::numerical_limit;
                sol.x = best_v;
                sol.objective = c_.dot(best_v);
                sol.iterations = iter;
                sol.message = "corrector solve failed";
                return sol;
            }
            ap = 1e30;
            ad = 1e30;
            for (auto& w : work_) {
                ap = std::min(ap, max_step(w.X, w.dX));
                ad = std::min(ad, max_step(w.S, w.dS));
            }
            ap = std::min(1.0, opts_.step_frac * ap);
            ad = std::min(1.0, opts_.step_frac * ad);
            if (opts_.verbose) {
                double ndx = 0.0, nds = 0.0, lminx = 1e300, lmins = 1e300, nx = 0.0;
                for (auto& w : work_) {
                    ndx = std::max(ndx, w.dX.norm());
                    nds = std::max(nds, w.dS.norm());
                    nx = std::max(nx, w.X.norm());
                    Eigen::SelfAdjointEigenSolver<Mat> ex(w.X), es2(w.S);
                    lminx = std::min(lminx, ex.eigenvalues().minCoeff());
                    lmins = std::min(lmins, es2.eigenvalues().minCoeff());
                }
                std::fprintf(stderr,
                             "      sigma %8.2e ap %8.2e ad %8.2e |dv| %8.2e |dX| %8.2e |dS| %8.2e lminX %8.2e lminS %8.2e |X| %8.2e\n",
                             sigma, ap, ad, dv.norm(), ndx, nds, lminx, lmins, nx);
            }
            if (ap < 1e-10 && ad < 1e-10) {
                if (++stall >= 3) {
                    sol.x = best_v;
                    sol.objective = c_.dot(best_v);
                    sol.iterations = iter;
                    if (detect_infeasible(1e-5)) {
                        sol.status = SolveStatus::infeasible;
                        sol.message = "improving-ray certificate at stall";
                    } else if (detect_unbounded()) {
                        sol.status = SolveStatus::unbounded;
                        sol.message = "dual improving ray at stall";
                    } else {
                        sol.status = SolveStatus::numerical_limit;
                        sol.message = "stalled steps";
                    }
                    return sol;
                }
            } else {
                stall = 0;
            }
            for (auto& w : work_) {
                w.X += ap * w.dX;
                w.S += ad * w.dS;
            }
            v_ += ad * dv;
        }
        compute_residuals();
        sol.status = SolveStatus::numerical_limit;
        sol.x = best_v;
        sol.objective = c_.dot(best_v);
        sol.iterations = opts_.max_iters;
        sol.message = "iteration limit reached";
        return sol;
    }

  private:
    void analyze() {
        std::vector<int> count(size_t(nv_), 0);
        for (const auto& b : blocks_)
            for (int j : b.vars) ++count[size_t(j)];
        global_index_.assign(size_t(nv_), -1);
        local_block_.assign(size_t(nv_), -1);
        for (int j = 0; j < nv_; ++j) {
            if (count[size_t(j)] == 0) unused_vars_.push_back(j);
            else if (count[size_t(j)] >= 2) global_index_[size_t(j)] = num_globals_++;
        }
        for (size_t b = 0; b < blocks_.size(); ++b)
            for (int j : blocks_[b].vars)
                if (count[size_t(j)] == 1) local_block_[size_t(j)] = int(b);
        // per-block positions
        block_gpos_.resize(blocks_.size());
        block_lpos_.resize(blocks_.size());
        local_index_.assign(size_t(nv_), -1);
        for (size_t b = 0; b < blocks_.size(); ++b) {
            int lc = 0;
            for (size_t k = 0; k < blocks_[b].vars.size(); ++k) {
                const int j = blocks_[b].vars[k];
                if (global_index_[size_t(j)] >= 0) block_gpos_[b].push_back(int(k));
                else {
                    block_lpos_[b].push_back(int(k));
                    local_index_[size_t(j)] = lc++;
                }
            }
        }
        total_dim_ = 0;
        norm_A_ = 0.0;
        norm_C_ = 0.0;
        for (const auto& b : blocks_) {
            total_dim_ += b.dim;
            norm_C_ = std::max(norm_C_, b.C.norm());
            for (const auto& m : b.mats) norm_A_ = std::max(norm_A_, m.norm());
        }
    }

    void initialize() {
        v_ = Vec::Zero(nv_);
        work_.resize(blocks_.size());
        bool warm = v_init_.size() == nv_;
        if (warm) {
            // accept the warm point only if every block is strictly interior
            double worst = 1e300;
            for (const auto& blk : blocks_) {
                Mat S = blk.C;
                for (size_t k = 0; k < blk.vars.size(); ++k)
                    S += v_init_(blk.vars[k]) * blk.mats[k];
                Eigen::SelfAdjointEigenSolver<Mat> es(S);
                worst = std::min(worst, es.eigenvalues().minCoeff());
            }
            if (worst <= 1e-10) warm = false;
            if (warm) v_ = v_init_;
        }
        double cmax = nv_ ? c_.cwiseAbs().maxCoeff() : 0.0;
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            double amax = 0.0;
            for (const auto& m : blk.mats) amax = std::max(amax, m.norm());
            const double sd = double(blk.dim);
            const double xs = std::max({10.0, std::sqrt(sd), sd * (1.0 + cmax) / (1.0 + amax)});
            const double ss = std::max({10.0, std::sqrt(sd), blk.C.norm(), amax});
            work_[b].X = xs * Mat::Identity(blk.dim, blk.dim);
            if (warm) {
                Mat S = blk.C;
                for (size_t k = 0; k < blk.vars.size(); ++k)
                    S += v_(blk.vars[k]) * blk.mats[k];
                work_[b].S = S;
            } else {
                work_[b].S = ss * Mat::Identity(blk.dim, blk.dim);
            }
        }
        init_normX_ = frob_X();
    }

    double frob_X() const {
        double acc = 0.0;
        for (const auto& w : work_) acc += w.X.squaredNorm();
        return std::sqrt(acc);
    }

    double inner_CX() const {
        double acc = 0.0;
        for (size_t b = 0; b < blocks_.size(); ++b) acc += sym_inner(blocks_[b].C, work_[b].X);
        return acc;
    }

    void compute_residuals() {
        rp_ = c_;
        mu_ = 0.0;
        double dres = 0.0;
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            auto& w = work_[b];
            w.Rd = blk.C - w.S;
            for (size_t k = 0; k < blk.vars.size(); ++k) {
                w.Rd += v_(blk.vars[k]) * blk.mats[k];
                rp_(blk.vars[k]) -= sym_inner(blk.mats[k], w.X);
            }
            mu_ += sym_inner(w.X, w.S);
            dres = std::max(dres, w.Rd.norm() / (1.0 + blk.C.norm()));
        }
        mu_ /= double(total_dim_);
        prinf_ = nv_ ? rp_.cwiseAbs().maxCoeff() / (1.0 + c_.cwiseAbs().maxCoeff()) : 0.0;
        dinf_ = dres;
    }

    bool detect_infeasible(double tol = 1e-8) const {
        const double nx = frob_X();
        if (nx < 1e4 * (1.0 + init_normX_)) return false;
        double ax = 0.0;
        for (int j = 0; j < nv_; ++j) ax = std::max(ax, std::abs(c_(j) - rp_(j)));
        const double cx = inner_CX();
        return ax <= tol * nx * (1.0 + norm_A_) && cx <= -tol * nx * (1.0 + norm_C_);
    }

    bool detect_unbounded() const {
        const double nvn = v_.norm();
        if (nvn < 1e6) return false;
        if (c_.dot(v_) > -1e5 * (1.0 + c_.norm())) return false;
        // direction must keep every block nonnegative in the limit
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            Mat dir = Mat::Zero(blk.dim, blk.dim);
            for (size_t k = 0; k < blk.vars.size(); ++k)
                dir += (v_(blk.vars[k]) / nvn) * blk.mats[k];
            Eigen::SelfAdjointEigenSolver<Mat> es(dir);
            if (es.eigenvalues().minCoeff() < -1e-7 * (1.0 + norm_A_)) return false;
        }
        return true;
    }

    // Schur complement H_jk = tr(A_j X A_k S^{-1}) in block-arrow form.
    bool build_schur() {
        Hgg_ = Mat::Zero(num_globals_, num_globals_);
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            auto& w = work_[b];
            w.sllt.compute(w.S);
            if (w.sllt.info() != Eigen::Success) return false;
            w.Sinv = w.sllt.solve(Mat::Identity(blk.dim, blk.dim));
            const size_t kv = blk.vars.size();
            const size_t nl = block_lpos_[b].size();
            w.Hll = Mat::Zero(Eigen::Index(nl), Eigen::Index(nl));
            w.Hgl = Mat::Zero(num_globals_, Eigen::Index(nl));
            if (w.W.size() != kv) w.W.resize(kv);
            auto& W = w.W;
            for (size_t k = 0; k < kv; ++k) {
                Mat t = w.X * blk.mats[k] * w.Sinv;
                W[k] = 0.5 * (t + t.transpose());
            }
            for (size_t kj = 0; kj < kv; ++kj) {
                const int j = blk.vars[kj];
                const int gj = global_index_[size_t(j)];
                const int lj = gj < 0 ? local_index_[size_t(j)] : -1;
                for (size_t kk = kj; kk < kv; ++kk) {
                    const int k = blk.vars[kk];
                    const int gk = global_index_[size_t(k)];
                    const int lk = gk < 0 ? local_index_[size_t(k)] : -1;
                    const double h = sym_inner(blk.mats[kj], W[kk]);
                    if (gj >= 0 && gk >= 0) {
                        Hgg_(gj, gk) += h;
                        if (gj != gk) Hgg_(gk, gj) += h;
                    } else if (gj >= 0) {
                        w.Hgl(gj, lk) += h;
                    } else if (gk >= 0) {
                        w.Hgl(gk, lj) += h;
                    } else {
                        w.Hll(lj, lk) += h;
                        if (lj != lk) w.Hll(lk, lj) += h;
                    }
                }
            }
        }
        // factor local cliques and fold them into the reduced global system
        Hred_ = Hgg_;
        for (auto& w : work_) {
            const Eigen::Index nl = w.Hll.rows();
            if (nl == 0) continue;
            double ridge = 1e-13 * std::max(w.Hll.trace() / double(nl), 1e-300);
            for (int attempt = 0; attempt < 6; ++attempt) {
                w.hll_llt.compute(w.Hll + ridge * Mat::Identity(nl, nl));
                if (w.hll_llt.info() == Eigen::Success) break;
                ridge *= 100.0;
            }
            if (w.hll_llt.info() != Eigen::Success) return false;
            if (num_globals_ > 0)
                Hred_ -= w.Hgl * w.hll_llt.solve(w.Hgl.transpose());
        }
        if (num_globals_ > 0) {
            // equilibrate, then factor with a proximal ridge; near-dependent
            // data columns make this system extremely ill-conditioned
            equil_ = Hred_.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
            Mat Heq = equil_.asDiagonal() * Hred_ * equil_.asDiagonal();
            double ridge = 1e-12;
            for (int attempt = 0; attempt < 8; ++attempt) {
                hred_llt_.compute(Heq + ridge * Mat::Identity(num_globals_, num_globals_));
                if (hred_llt_.info() == Eigen::Success) return true;
                ridge *= 100.0;
            }
            return false;
        }
        return true;
    }

    // solve with the equilibrated factorization of the reduced system
    Vec solve_reduced(const Vec& rhs) const {
        return equil_.asDiagonal() * (hred_llt_.solve((equil_.asDiagonal() * rhs).eval()));
    }

    // Solve H dv = rhs with the stored block-arrow factorization.
    bool solve_H(const Vec& rhs, Vec& dv) {
        Vec rg = Vec::Zero(num_globals_);
        for (int j = 0; j < nv_; ++j)
            if (global_index_[size_t(j)] >= 0) rg(global_index_[size_t(j)]) = rhs(j);
        for (size_t b = 0; b < blocks_.size(); ++b) {
            auto& w = work_[b];
            w.rl.resize(Eigen::Index(block_lpos_[b].size()));
            int lc = 0;
            for (int kpos : block_lpos_[b])
                w.rl(lc++) = rhs(blocks_[b].vars[size_t(kpos)]);
        }
        Vec dg;
        if (num_globals_ > 0) {
            Vec rg_red = rg;
            for (auto& w : work_)
                if (w.Hll.rows() > 0) rg_red -= w.Hgl * w.hll_llt.solve(w.rl);
            dg = solve_reduced(rg_red);
            dg += solve_reduced(rg_red - Hred_ * dg);
            if (!dg.allFinite()) return false;
        }
        dv = Vec::Zero(nv_);
        for (int j = 0; j < nv_; ++j)
            if (global_index_[size_t(j)] >= 0) dv(j) = dg(global_index_[size_t(j)]);
        for (size_t b = 0; b < blocks_.size(); ++b) {
            auto& w = work_[b];
            if (w.Hll.rows() == 0) continue;
            Vec r2 = w.rl;
            if (num_globals_ > 0) r2 -= w.Hgl.transpose() * dg;
            w.dl = w.hll_llt.solve(r2);
            if (!w.dl.allFinite()) return false;
            int lc = 0;
            for (int kpos : block_lpos_[b])
                dv(blocks_[b].vars[size_t(kpos)]) = w.dl(lc++);
        }
        return true;
    }

    // Solve for the search direction with centering sigma; corrector adds the
    // second-order Mehrotra term from (dXa, dSa). One or two refinement
    // passes against the exact primal-feasibility target absorb the error of
    // forming H in floating point.
    bool direction(double sigma, bool corrector, Vec& dv) {
        Vec rhs = -rp_;
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            auto& w = work_[b];
            w.T = sigma * mu_ * w.Sinv - w.X;
            Mat t = w.X * w.Rd * w.Sinv;
            w.T -= 0.5 * (t + t.transpose());
            if (corrector) {
                Mat t2 = w.dXa * w.dSa * w.Sinv;
                w.T -= 0.5 * (t2 + t2.transpose());
            }
            for (size_t k = 0; k < blk.vars.size(); ++k)
                rhs(blk.vars[k]) += sym_inner(blk.mats[k], w.T);
        }
        if (!solve_H(rhs, dv)) return false;

        auto recover = [&]() -> bool {
            for (size_t b = 0; b < blocks_.size(); ++b) {
                const auto& blk = blocks_[b];
                auto& w = work_[b];
                w.dS = w.Rd;
                for (size_t k = 0; k < blk.vars.size(); ++k)
                    w.dS += dv(blk.vars[k]) * blk.mats[k];
                Mat t = w.X * w.dS * w.Sinv;
                w.dX = w.T - 0.5 * (t + t.transpose());
                if (!w.dX.allFinite() || !w.dS.allFinite()) return false;
            }
            return true;
        };
        if (!recover()) return false;

        const double rp_scale = 1.0 + rp_.cwiseAbs().maxCoeff();
        for (int pass = 0; pass < 2; ++pass) {
            Vec rho = rp_;
            for (size_t b = 0; b < blocks_.size(); ++b) {
                const auto& blk = blocks_[b];
                for (size_t k = 0; k < blk.vars.size(); ++k)
                    rho(blk.vars[k]) -= sym_inner(blk.mats[k], work_[b].dX);
            }
            if (rho.cwiseAbs().maxCoeff() < 1e-14 * rp_scale) break;
            Vec ddv;
            if (!solve_H(-rho, ddv)) return false;
            dv += ddv;
            if (!recover()) return false;
        }
        return true;
    }

    const std::vector<BlockData>& blocks_;
    Vec c_;
    SolverOptions opts_;
    int nv_ = 0;

    std::vector<int> unused_vars_;
    std::vector<int> global_index_, local_index_, local_block_;
    std::vector<std::vector<int>> block_gpos_, block_lpos_;
    int num_globals_ = 0;
    Eigen::Index total_dim_ = 0;
    double norm_A_ = 0.0, norm_C_ = 0.0, init_normX_ = 0.0;

    Vec v_, rp_, v_init_;
    double mu_ = 0.0, prinf_ = 0.0, dinf_ = 0.0;
    std::vector<BlockWork> work_;
    Mat Hgg_, Hred_;
    Vec equil_;
    Eigen::LLT<Mat> hred_llt_;
};

// dedupe entries, split constants
inline std::vector<BlockData> flatten_blocks(const ConicProgram& prog,
                                             const std::vector<char>& pinned,
                                             const Vec& pin_value) {
    std::vector<BlockData> out;
    out.reserve(prog.blocks.size());
    for (const auto& b : prog.blocks) {
        BlockData d;
        d.dim = b.dim;
        d.C = Mat::Zero(b.dim, b.dim);
        for (const auto& [var, m] : b.entries) {
            if (var < 0 || pinned[size_t(var)]) {
                d.C += (var < 0 ? 1.0 : pin_value(var)) * m;
                continue;
            }
            auto it = std::find(d.vars.begin(), d.vars.end(), var);
            if (it == d.vars.end()) {
                d.vars.push_back(var);
                d.mats.push_back(m);
            } else {
                d.mats[size_t(it - d.vars.begin())] += m;
            }
        }
        // drop exact-zero entries
        for (size_t k = d.vars.size(); k-- > 0;) {
            if (d.mats[k].cwiseAbs().maxCoeff() == 0.0) {
                d.mats.erase(d.mats.begin() + long(k));
                d.vars.erase(d.vars.begin() + long(k));
            }
        }
        d.C = 0.5 * (d.C + d.C.transpose()).eval();
        for (auto& m : d.mats) m = 0.5 * (m + m.transpose()).eval();
        out.push_back(std::move(d));
    }
    return out;
}

// Phase-1 classification: minimize eta subject to C + A(v) + eta I >= 0 and
// eta >= -1. Strictly feasible by construction; a clearly positive optimum
// certifies an empty feasible set for the original LMI system, a clearly
// negative one yields a strictly interior point for a warm restart.
inline int phase1_feasibility(const std::vector<BlockData>& blocks, Eigen::Index nv,
                              const SolverOptions& base_opts, Vec* interior = nullptr) {
    std::vector<BlockData> aug = blocks;
    const int eta = int(nv);
    for (auto& b : aug) {
        b.vars.push_back(eta);
        b.mats.push_back(Mat::Identity(b.dim, b.dim));
    }
    BlockData lb;
    lb.dim = 1;
    lb.C = Mat::Ones(1, 1);
    lb.vars.push_back(eta);
    lb.mats.push_back(Mat::Ones(1, 1));
    aug.push_back(std::move(lb));
    Vec c = Vec::Zero(nv + 1);
    c(eta) = 1.0;
    SolverOptions opts = base_opts;
    opts.gap_tol = std::max(base_opts.gap_tol, 1e-7);
    opts.feas_tol = std::max(base_opts.feas_tol, 1e-6);
    opts.verbose = false;
    InteriorPoint ipm(aug, std::move(c), opts);
    ConicSolution s = ipm.run();
    if (s.status != SolveStatus::optimal) return 0;  // inconclusive
    double scale = 1.0;
    for (const auto& b : blocks) scale = std::max(scale, b.C.norm());
    if (s.objective > 1e-6 * scale) return -1;  // infeasible
    if (interior) *interior = s.x.head(nv);  // warm restart validates interiority
    return 1;  // a feasible point exists
}

// Jacobi scaling: normalize each variable's constraint matrices to unit peak
// Frobenius norm across blocks, run the interior-point method, and map the
// solution back. Falls back to the phase-1 classifier on a numerical limit.
inline ConicSolution run_scaled(std::vector<BlockData>& blocks, const Vec& c,
                                const SolverOptions& opts) {
    const Eigen::Index nv = c.size();
    Vec peak = Vec::Zero(nv);
    for (const auto& b : blocks)
        for (size_t k = 0; k < b.vars.size(); ++k)
            peak(b.vars[k]) = std::max(peak(b.vars[k]), b.mats[k].norm());
    Vec d(nv);
    for (Eigen::Index j = 0; j < nv; ++j) d(j) = 1.0 / std::max(peak(j), 1e-10);
    for (auto& b : blocks)
        for (size_t k = 0; k < b.vars.size(); ++k) b.mats[k] *= d(b.vars[k]);
    Vec c_scaled = c.cwiseProduct(d);

    InteriorPoint ipm(blocks, c_scaled, opts);
    ConicSolution sol = ipm.run();
    if (sol.status == SolveStatus::numerical_limit) {
        Vec interior;
        const int cls = phase1_feasibility(blocks, nv, opts, &interior);
        if (cls < 0) {
            sol.status = SolveStatus::infeasible;
            sol.message = "phase-1 certifies an empty feasible set";
        } else if (cls > 0 && interior.size() == nv) {
            // restart from the deepest-interior phase-1 point
            InteriorPoint warm(blocks, c_scaled, opts);
            warm.warm_start(interior);
            ConicSolution sol2 = warm.run();
            if (sol2.status == SolveStatus::optimal ||
                (sol2.status != SolveStatus::infeasible && sol.x.size() == 0)) {
                sol = sol2;
                sol.message += " (warm restart)";
            }
        }
    }
    if (sol.x.size() == nv) sol.x = sol.x.cwiseProduct(d);
    sol.objective = c.dot(sol.x);
    return sol;
}

}  // namespace detail

// recompute feasibility of the returned point from scratch
inline void finalize(const ConicProgram& prog, const SolverOptions& opts, ConicSolution& sol) {
    sol.block_min_eig.clear();
    sol.max_equality_residual = 0.0;
    if (sol.status == SolveStatus::infeasible || sol.status == SolveStatus::unbounded) return;
    bool ok = true;
    for (const auto& b : prog.blocks) {
        Mat S = b.at(sol.x);
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        const double me = es.eigenvalues().minCoeff();
        sol.block_min_eig.push_back(me);
        if (me < -100.0 * opts.feas_tol * (1.0 + S.norm())) ok = false;
    }
    for (const auto& eq : prog.equalities) {
        double scale = std::abs(eq.rhs);
        for (const auto& [var, c] : eq.coeffs) scale += std::abs(c * sol.x(var));
        const double r = std::abs(eq.residual(sol.x)) / (1.0 + scale);
        sol.max_equality_residual = std::max(sol.max_equality_residual, r);
        if (r > 100.0 * opts.feas_tol) ok = false;
    }
    if (sol.status == SolveStatus::optimal && !ok) {
        sol.status = SolveStatus::numerical_limit;
        sol.message = "a-posteriori feasibility check failed";
    }
}

// Solves the conic program. Equality constraints are eliminated first:
// single-variable equalities by direct substitution, the rest through a
// null-space reparametrization. A-posteriori feasibility (block minimum
// eigenvalues, equality residuals) is re-verified on the returned point
// independent of the interior-point iteration's own bookkeeping.
inline ConicSolution solve(const ConicProgram& prog, const SolverOptions& opts = {}) {
    prog.validate();
    const Eigen::Index nv = prog.num_vars;

    // pass 1: substitution of pinned variables
    std::vector<char> pinned(size_t(nv), 0);
    Vec pin_value = Vec::Zero(nv);
    std::vector<LinearEquality> general;
    {
        std::vector<LinearEquality> pending = prog.equalities;
        bool progress = true;
        while (progress) {
            progress = false;
            std::vector<LinearEquality> next;
            for (auto& eq : pending) {
                LinearEquality red;
                red.rhs = eq.rhs;
                for (const auto& [var, c] : eq.coeffs) {
                    if (c == 0.0) continue;
                    if (pinned[size_t(var)]) red.rhs -= c * pin_value(var);
                    else red.coeffs.emplace_back(var, c);
                }
                if (red.coeffs.empty()) {
                    if (std::abs(red.rhs) > 1e-9 * (1.0 + std::abs(eq.rhs))) {
                        ConicSolution sol;
                        sol.status = SolveStatus::infeasible;
                        sol.x = Vec::Zero(nv);
                        sol.message = "inconsistent equality constraints";
                        return sol;
                    }
                    continue;
                }
                if (red.coeffs.size() == 1) {
                    const auto [var, c] = red.coeffs[0];
                    const double val = red.rhs / c;
                    if (pinned[size_t(var)] && std::abs(pin_value(var) - val) >
                                                   1e-9 * (1.0 + std::abs(val))) {
                        ConicSolution sol;
                        sol.status = SolveStatus::infeasible;
                        sol.x = Vec::Zero(nv);
                        sol.message = "conflicting variable pins";
                        return sol;
                    }
                    pinned[size_t(var)] = 1;
                    pin_value(var) = val;
                    progress = true;
                } else {
                    next.push_back(std::move(red));
                }
            }
            pending = std::move(next);
        }
        general = std::move(pending);
    }

    // variable map: free variables surviving substitution
    std::vector<int> free_of_full;
    std::vector<int> full_of_free(size_t(nv), -1);
    for (int j = 0; j < nv; ++j)
        if (!pinned[size_t(j)]) {
            full_of_free[size_t(j)] = int(free_of_full.size());
            free_of_full.push_back(j);
        }
    const Eigen::Index nfree = Eigen::Index(free_of_full.size());

    auto blocks = detail::flatten_blocks(prog, pinned, pin_value);
    for (auto& b : blocks)
        for (auto& j : b.vars) j = full_of_free[size_t(j)];
    Vec c_free(nfree);
    double obj_shift = 0.0;
    for (int j = 0; j < nv; ++j) {
        if (pinned[size_t(j)]) obj_shift += prog.objective(j) * pin_value(j);
        else c_free(full_of_free[size_t(j)]) = prog.objective(j);
    }

    // pass 2: null-space elimination of the remaining equalities
    Mat Z;                 // nfree x nred
    Vec v0 = Vec::Zero(nfree);
    bool reduced = false;
    if (!general.empty()) {
        const Eigen::Index ne = Eigen::Index(general.size());
        Mat Emat = Mat::Zero(ne, nfree);
        Vec d(ne);
        for (Eigen::Index r = 0; r < ne; ++r) {
            d(r) = general[size_t(r)].rhs;
            for (const auto& [var, c] : general[size_t(r)].coeffs)
                Emat(r, full_of_free[size_t(var)]) += c;
        }
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(Emat);
        v0 = cod.solve(d);
        if ((Emat * v0 - d).norm() > 1e-8 * (1.0 + d.norm())) {
            ConicSolution sol;
            sol.status = SolveStatus::infeasible;
            sol.x = Vec::Zero(nv);
            sol.message = "inconsistent equality constraints";
            return sol;
        }
        // null-space basis from the full QR of Emat'
        Eigen::HouseholderQR<Mat> qr(Emat.transpose());
        Mat Q = qr.householderQ();
        const Eigen::Index rank = cod.rank();
        Z = Q.rightCols(nfree - rank);
        reduced = true;

        std::vector<detail::BlockData> red_blocks;
        red_blocks.reserve(blocks.size());
        for (const auto& b : blocks) {
            detail::BlockData rb;
            rb.dim = b.dim;
            rb.C = b.C;
            for (size_t k = 0; k < b.vars.size(); ++k) rb.C += v0(b.vars[k]) * b.mats[k];
            for (Eigen::Index q = 0; q < Z.cols(); ++q) {
                Mat a = Mat::Zero(b.dim, b.dim);
                for (size_t k = 0; k < b.vars.size(); ++k) a += Z(b.vars[k], q) * b.mats[k];
                if (a.cwiseAbs().maxCoeff() > 0.0) {
                    rb.vars.push_back(int(q));
                    rb.mats.push_back(std::move(a));
                }
            }
            red_blocks.push_back(std::move(rb));
        }
        obj_shift += c_free.dot(v0);
        Vec c_red = Z.transpose() * c_free;
        ConicSolution sol = detail::run_scaled(red_blocks, c_red, opts);
        Vec w = sol.x;
        Vec vfree = v0;
        if (w.size() == Z.cols()) vfree += Z * w;
        sol.x = Vec::Zero(nv);
        for (int j = 0; j < nv; ++j)
            sol.x(j) = pinned[size_t(j)] ? pin_value(j) : vfree(full_of_free[size_t(j)]);
        sol.objective = prog.objective.dot(sol.x);
        (void)reduced;
        (void)obj_shift;
        // a-posteriori verification below
        finalize(prog, opts, sol);
        return sol;
    }

    ConicSolution sol = detail::run_scaled(blocks, c_free, opts);
    Vec vfree = sol.x;
    sol.x = Vec::Zero(nv);
    for (int j = 0; j < nv; ++j)
        sol.x(j) = pinned[size_t(j)] ? pin_value(j) : vfree(full_of_free[size_t(j)]);
    sol.objective = prog.objective.dot(sol.x);
    finalize(prog, opts, sol);
    return sol;
}

}  // namespace orbid::sdp

#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "orbid/types.hpp"

namespace orbid::sdp {

// One affine symmetric-matrix-valued constraint C + sum_j v_j A_j >= 0.
// Entries with var == -1 contribute to the constant matrix C; duplicated
// variables accumulate.
struct PsdBlock {
    Eigen::Index dim = 0;
    std::vector<std::pair<int, Mat>> entries;

    void add(int var, Mat m) { entries.emplace_back(var, std::move(m)); }

    // evaluate the affine map at a variable assignment
    Mat at(const Vec& v) const {
        Mat s = Mat::Zero(dim, dim);
        for (const auto& [var, m] : entries)
            s += (var < 0 ? 1.0 : v(var)) * m;
        return s;
    }
};

struct LinearEquality {
    std::vector<std::pair<int, double>> coeffs;
    double rhs = 0.0;

    double residual(const Vec& v) const {
        double acc = -rhs;
        for (const auto& [var, c] : coeffs) acc += c * v(var);
        return acc;
    }
};

// Block-structured conic program: min c'v subject to every PSD block being
// positive semidefinite and the linear equalities holding.
struct ConicProgram {
    Eigen::Index num_vars = 0;
    Vec objective;                       // length num_vars
    std::vector<PsdBlock> blocks;
    std::vector<LinearEquality> equalities;

    void validate() const {
        if (objective.size() != num_vars)
            throw DataError("conic program: objective length mismatch");
        for (const auto& b : blocks) {
            if (b.dim < 1) throw DataError("conic program: empty block");
            for (const auto& [var, m] : b.entries) {
                if (var >= int(num_vars)) throw DataError("conic program: variable out of range");
                if (m.rows() != b.dim || m.cols() != b.dim)
                    throw DataError("conic program: entry shape mismatch");
                if ((m - m.transpose()).cwiseAbs().maxCoeff() >
                    1e-12 * (1.0 + m.cwiseAbs().maxCoeff()))
                    throw DataError("conic program: entry not symmetric");
            }
        }
        for (const auto& eq : equalities)
            for (const auto& [var, c] : eq.coeffs) {
                (void)c;
                if (var < 0 || var >= int(num_vars))
                    throw DataError("conic program: equality variable out of range");
            }
    }
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_limit };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::numerical_limit: return "numerical_limit";
    }
    return "unknown";
}

struct ConicSolution {
    SolveStatus status = SolveStatus::numerical_limit;
    Vec x;
    double objective = 0.0;
    std::vector<double> block_min_eig;  // a-posteriori feasibility per block
    double max_equality_residual = 0.0;
    int iterations = 0;
    std::string message;
};

// Sparse-block interchange export (SDPA format): the primal there reads
// min c'x s.t. sum_i x_i F_i - F0 >= 0, so F0 = -C and F_j = A_j. Upper
// triangle only; equalities become paired 1x1 blocks. Off-diagonal entries
// are written as stored (symmetric-matrix convention; consumers applying the
// vectorized form scale off-diagonals by sqrt(2)).
inline void write_sdpa(std::ostream& os, const ConicProgram& prog) {
    prog.validate();
    const size_t nb = prog.blocks.size() + 2 * prog.equalities.size();
    os << prog.num_vars << " = mdim\n";
    os << nb << " = nblocks\n";
    for (const auto& b : prog.blocks) os << b.dim << ' ';
    for (size_t i = 0; i < prog.equalities.size(); ++i) os << "1 1 ";
    os << '\n';
    os.precision(17);
    for (Eigen::Index j = 0; j < prog.num_vars; ++j)
        os << prog.objective(j) << (j + 1 == prog.num_vars ? '\n' : ' ');
    if (prog.num_vars == 0) os << '\n';
    // entries: <var> <block> <row> <col> <value>, var 0 is F0 = -C, 1-based otherwise
    for (size_t b = 0; b < prog.blocks.size(); ++b) {
        const auto& blk = prog.blocks[b];
        Mat C = Mat::Zero(blk.dim, blk.dim);
        std::vector<std::pair<int, Mat>> accum;
        for (const auto& [var, m] : blk.entries) {
            if (var < 0) { C += m; continue; }
            bool found = false;
            for (auto& [v2, m2] : accum)
                if (v2 == var) { m2 += m; found = true; break; }
            if (!found) accum.emplace_back(var, m);
        }
        auto dump = [&](int var, const Mat& m) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = r; c < m.cols(); ++c)
                    if (m(r, c) != 0.0)
                        os << var << ' ' << b + 1 << ' ' << r + 1 << ' ' << c + 1 << ' '
                           << m(r, c) << '\n';
        };
        dump(0, -C);
        for (const auto& [var, m] : accum) dump(var + 1, m);
    }
    for (size_t e = 0; e < prog.equalities.size(); ++e) {
        const auto& eq = prog.equalities[e];
        const size_t bp = prog.blocks.size() + 2 * e + 1;
        const size_t bm = bp + 1;
        // a'v - d >= 0 and d - a'v >= 0
        if (eq.rhs != 0.0) {
            os << 0 << ' ' << bp << " 1 1 " << eq.rhs << '\n';
            os << 0 << ' ' << bm << " 1 1 " << -eq.rhs << '\n';
        }
        for (const auto& [var, c] : eq.coeffs) {
            if (c == 0.0) continue;
            os << var + 1 << ' ' << bp << " 1 1 " << c << '\n';
            os << var + 1 << ' ' << bm << " 1 1 " << -c << '\n';
        }
    }
}

inline void write_sdpa(const std::string& path, const ConicProgram& prog) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open program export file: " + path);
    write_sdpa(os, prog);
}

}  // namespace orbid::sdp

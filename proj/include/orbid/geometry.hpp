#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <vector>

#include "orbid/types.hpp"

namespace orbid {

// Orthogonal decomposition of the state space at one trajectory sample into
// the span of xdot (rank-1, pi) and its complement (rank n-1, Pi). Pi_r holds
// an orthonormal basis of range(Pi); when the velocity is below threshold the
// frame is flagged degenerate and Pi_r widens to the full identity.
struct TransverseFrame {
    Mat pi;      // n x n, rank-1 projector onto span(xdot)
    Mat Pi;      // n x n, I - pi
    Mat Pi_r;    // n x (n-1) orthonormal columns; n x n identity if degenerate
    Mat Pi_dot;  // n x n, analytic d/dt of Pi
    bool degenerate = false;

    Eigen::Index dim() const { return Pi.rows(); }
    Eigen::Index reduced_dim() const { return Pi_r.cols(); }
};

namespace detail {

// Householder reflector sending v/|v| to +/- e1; columns 2..n form an
// orthonormal basis of the complement of v.
inline Mat householder_complement(const Vec& v) {
    const Eigen::Index n = v.size();
    Vec unit = v / v.norm();
    const double sign = unit(0) >= 0.0 ? 1.0 : -1.0;
    Vec w = unit;
    w(0) += sign;
    Mat H = Mat::Identity(n, n) - (2.0 / w.squaredNorm()) * (w * w.transpose());
    return H.rightCols(n - 1);
}

}  // namespace detail

inline TransverseFrame frame_at(const Vec& xdot, const Vec& xddot, double v_threshold) {
    const Eigen::Index n = xdot.size();
    if (!xdot.allFinite() || !xddot.allFinite())
        throw DataError("frame_at: non-finite velocity or acceleration");

    TransverseFrame f;
    const double speed = xdot.norm();
    if (speed < v_threshold) {
        f.degenerate = true;
        f.pi = Mat::Zero(n, n);
        f.Pi = Mat::Identity(n, n);
        f.Pi_r = Mat::Identity(n, n);
        f.Pi_dot = Mat::Zero(n, n);
        return f;
    }

    const double s2 = speed * speed;
    f.pi = (xdot * xdot.transpose()) / s2;
    f.Pi = Mat::Identity(n, n) - f.pi;
    // Pi_dot = -pi_dot, with pi = xdot xdot'/|xdot|^2 differentiated in t.
    Mat pidot = (xddot * xdot.transpose() + xdot * xddot.transpose()) / s2 -
                (2.0 * xdot.dot(xddot) / (s2 * s2)) * (xdot * xdot.transpose());
    f.Pi_dot = -pidot;
    f.Pi_r = detail::householder_complement(xdot);
    f.degenerate = false;
    return f;
}

// Auto rule for the degeneracy threshold: a small fraction of the median speed.
inline double default_v_threshold(const TrajectoryRecord& record) {
    std::vector<double> speeds(size_t(record.samples()));
    for (Eigen::Index i = 0; i < record.samples(); ++i)
        speeds[size_t(i)] = record.xdot.row(i).norm();
    std::nth_element(speeds.begin(), speeds.begin() + speeds.size() / 2, speeds.end());
    return 1e-6 * speeds[speeds.size() / 2];
}

// Frames along the whole record with Pi_r columns aligned for continuity:
// each basis is re-mixed orthogonally (Procrustes) to stay close to the
// previous non-degenerate frame. Pi_r Pi_r' = Pi is preserved exactly.
// v_threshold <= 0 selects the default rule.
inline std::vector<TransverseFrame> frames_along(const TrajectoryRecord& record,
                                                 double v_threshold = 0.0) {
    record.validate();
    if (v_threshold <= 0.0) v_threshold = default_v_threshold(record);

    std::vector<TransverseFrame> frames;
    frames.reserve(size_t(record.samples()));
    const Mat* prev = nullptr;
    for (Eigen::Index i = 0; i < record.samples(); ++i) {
        TransverseFrame f = frame_at(record.xdot.row(i).transpose(),
                                     record.xddot.row(i).transpose(), v_threshold);
        if (!f.degenerate && prev != nullptr) {
            // min ||Pi_r R - prev||_F over orthogonal R
            Eigen::JacobiSVD<Mat> svd(f.Pi_r.transpose() * (*prev),
                                      Eigen::ComputeFullU | Eigen::ComputeFullV);
            f.Pi_r = f.Pi_r * (svd.matrixU() * svd.matrixV().transpose());
        }
        frames.push_back(std::move(f));
        if (!frames.back().degenerate) prev = &frames.back().Pi_r;
    }
    return frames;
}

}  // namespace orbid

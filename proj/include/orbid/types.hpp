#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace orbid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Raised for malformed input data (CSV parse failures, invariant violations).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

// Raw sampled input/output data as recorded: times need not be uniform.
// Rows of `inputs` / `outputs` are samples.
struct RawSeries {
    Vec times;    // seconds, strictly increasing
    Mat inputs;   // N x m
    Mat outputs;  // N x p

    Eigen::Index samples() const { return times.size(); }
    Eigen::Index input_dim() const { return inputs.cols(); }
    Eigen::Index output_dim() const { return outputs.cols(); }

    void validate() const {
        const Eigen::Index n = times.size();
        if (inputs.rows() != n || outputs.rows() != n)
            throw DataError("raw series: row count mismatch between t, u, y");
        for (Eigen::Index i = 0; i + 1 < n; ++i)
            if (!(times(i + 1) > times(i)))
                throw DataError("non-monotone time at row " + std::to_string(i + 2));
        if (!times.allFinite() || !all_finite(inputs) || !all_finite(outputs))
            throw DataError("raw series contains non-finite values");
    }
};

// Uniformly sampled trajectory with state and derivative estimates.
// xddot is only consumed by the transverse-frame construction.
struct TrajectoryRecord {
    double dt = 0.0;
    Mat x;      // N x n
    Mat xdot;   // N x n
    Mat xddot;  // N x n
    Mat u;      // N x m
    Mat y;      // N x p

    Eigen::Index samples() const { return x.rows(); }
    Eigen::Index state_dim() const { return x.cols(); }
    Eigen::Index input_dim() const { return u.cols(); }
    Eigen::Index output_dim() const { return y.cols(); }
    double duration() const { return dt * double(samples() - 1); }
    double time_at(Eigen::Index i) const { return dt * double(i); }

    void validate() const {
        const Eigen::Index n = x.rows();
        if (n < 3) throw DataError("trajectory record needs at least 3 samples");
        if (!(dt > 0.0)) throw DataError("trajectory record needs dt > 0");
        if (xdot.rows() != n || xddot.rows() != n || u.rows() != n || y.rows() != n)
            throw DataError("trajectory record: sample count mismatch");
        if (xdot.cols() != x.cols() || xddot.cols() != x.cols())
            throw DataError("trajectory record: state dimension mismatch");
        if (!all_finite(x) || !all_finite(xdot) || !all_finite(xddot) ||
            !all_finite(u) || !all_finite(y))
            throw DataError("trajectory record contains non-finite values");
    }
};

// Continuous-time Laguerre filter cascade: `order` identical filters with
// pole at -pole.
struct LaguerreBank {
    double pole = 1.0;  // 1/seconds, a > 0
    int order = 1;      // k >= 1

    void validate() const {
        if (!(pole > 0.0)) throw DataError("laguerre bank: pole must be > 0");
        if (order < 1) throw DataError("laguerre bank: order must be >= 1");
    }
};

// Local least-squares polynomial smoother (noncausal, centered window).
struct SmootherConfig {
    int window = 11;     // odd, >= 5
    int poly_degree = 3; // >= 2, < window

    void validate() const {
        if (window < 5 || window % 2 == 0)
            throw DataError("smoother: window must be odd and >= 5");
        if (poly_degree < 2 || poly_degree >= window)
            throw DataError("smoother: degree must be >= 2 and < window");
    }
};

}  // namespace orbid

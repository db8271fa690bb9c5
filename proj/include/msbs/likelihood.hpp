#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "msbs/error.hpp"

namespace msbs {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double log_beta(double a, double b) {
    return boost::math::lgamma(a) + boost::math::lgamma(b) - boost::math::lgamma(a + b);
}

inline double log_choose(int n, int k) {
    return boost::math::lgamma(n + 1.0) - boost::math::lgamma(k + 1.0) - boost::math::lgamma(n - k + 1.0);
}

/// Relative pivot tolerance below which a selected design counts as rank deficient.
inline constexpr double rank_tolerance = 1e-10;

struct FitStats {
    double r_squared = 0.0;
    int dim = 0;
    bool valid = false;
};

/// Centered response and its total sum of squares.
struct CenteredResponse {
    VectorXd centered;
    double mean = 0.0;
    double total_ss = 0.0;

    explicit CenteredResponse(const VectorXd& y) {
        mean = y.mean();
        centered = y.array() - mean;
        total_ss = centered.squaredNorm();
        if (!(total_ss > 0.0)) throw Error(ErrorKind::ZeroResponseVariance, "response has zero variance");
    }

    int n() const { return static_cast<int>(centered.size()); }
};

/// R^2 of the projection of the centered response on span(W). W must have
/// mean-zero columns. Rank-deficient or oversized designs are flagged invalid.
inline FitStats r_squared(const MatrixXd& w, const CenteredResponse& resp) {
    FitStats s;
    s.dim = static_cast<int>(w.cols());
    const int n = resp.n();
    if (s.dim > n - 3) return s;
    if (s.dim == 0) {
        s.valid = true;
        return s;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
    qr.setThreshold(rank_tolerance);
    if (qr.rank() < s.dim) return s;
    VectorXd qty = resp.centered;
    qty.applyOnTheLeft(qr.householderQ().adjoint());
    s.r_squared = qty.head(s.dim).squaredNorm() / resp.total_ss;
    s.valid = s.r_squared < 1.0 - 1e-12;
    return s;
}

inline FitStats r_squared(const MatrixXd& w, const VectorXd& y) { return r_squared(w, CenteredResponse(y)); }

/// Closed-form log marginal likelihood under the hyper-g/n style beta-prime
/// prior with a = -3/4, excluding the data constant log K(n, y).
inline double log_marginal(const FitStats& stats, int n) {
    if (!stats.valid) throw Error(ErrorKind::InvalidModel, "log marginal requested for an inadmissible model");
    const double dim = stats.dim;
    const double shape = (n - dim - 3.0) / 2.0 + 0.75;
    return log_beta(dim / 2.0 + 0.25, shape) - log_beta(0.25, shape) - shape * std::log1p(-stats.r_squared);
}

/// Same as log_marginal but -inf for inadmissible models, for use in ratios.
inline double log_marginal_or_neg_inf(const FitStats& stats, int n) {
    return stats.valid ? log_marginal(stats, n) : -std::numeric_limits<double>::infinity();
}

inline double log_K(const VectorXd& y) {
    const int n = static_cast<int>(y.size());
    if (n < 2) throw Error(ErrorKind::InvalidInput, "need at least two observations");
    const double ss = (y.array() - y.mean()).matrix().squaredNorm();
    if (!(ss > 0.0)) throw Error(ErrorKind::ZeroResponseVariance, "response has zero variance");
    const double m = n - 1.0;
    return -m / 2.0 * std::log(std::numbers::pi) + 0.5 * std::log(static_cast<double>(n)) +
           boost::math::lgamma(m / 2.0) - m / 2.0 * std::log(ss);
}

inline double log_beta_prime_pdf(double g, double a, double b) {
    if (!(g > 0.0) || !(a > -1.0) || !(b > -1.0))
        throw Error(ErrorKind::DomainViolation, "beta-prime density needs g > 0, a > -1, b > -1");
    return b * std::log(g) - (a + b + 2.0) * std::log1p(g) - log_beta(a + 1.0, b + 1.0);
}

}  // namespace msbs

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbs/error.hpp"

namespace msbs {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Response plus the two predictor blocks. X holds the candidates for
/// nonlinear effects, Z the linear-only candidates (stored centered).
struct Dataset {
    VectorXd y;
    MatrixXd x;
    MatrixXd z;
    VectorXd z_means;  // original column means of Z, for intercept restoration
    std::string response_name = "y";
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;

    int n() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(x.cols()); }
    int q() const { return static_cast<int>(z.cols()); }
};

inline Dataset make_dataset(VectorXd y, MatrixXd x, MatrixXd z_raw,
                            std::vector<std::string> x_names = {},
                            std::vector<std::string> z_names = {},
                            std::string response_name = "y") {
    const auto n = y.size();
    if (n < 10) throw Error(ErrorKind::InvalidInput, "need at least 10 observations, got " + std::to_string(n));
    if (x.rows() != n && x.cols() > 0)
        throw Error(ErrorKind::DimensionMismatch, "X has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(n));
    if (z_raw.rows() != n && z_raw.cols() > 0)
        throw Error(ErrorKind::DimensionMismatch, "Z has " + std::to_string(z_raw.rows()) + " rows, expected " + std::to_string(n));
    if (x.cols() + z_raw.cols() < 1) throw Error(ErrorKind::InvalidInput, "no predictors supplied");
    if (x.cols() == 0) x.resize(n, 0);
    if (z_raw.cols() == 0) z_raw.resize(n, 0);
    if (!y.allFinite() || !x.allFinite() || !z_raw.allFinite())
        throw Error(ErrorKind::InvalidInput, "non-finite value in data");

    if (x_names.empty())
        for (Eigen::Index j = 0; j < x.cols(); ++j) x_names.push_back("x" + std::to_string(j + 1));
    if (z_names.empty())
        for (Eigen::Index k = 0; k < z_raw.cols(); ++k) z_names.push_back("z" + std::to_string(k + 1));
    if (std::ssize(x_names) != x.cols() || std::ssize(z_names) != z_raw.cols())
        throw Error(ErrorKind::DimensionMismatch, "predictor name count does not match columns");

    Dataset d;
    d.z_means = z_raw.colwise().mean().transpose();
    d.z = z_raw.rowwise() - d.z_means.transpose();
    d.y = std::move(y);
    d.x = std::move(x);
    d.x_names = std::move(x_names);
    d.z_names = std::move(z_names);
    d.response_name = std::move(response_name);
    return d;
}

// ---------------------------------------------------------------------------
// Knot grids and the centered cubic radial basis

enum class KnotStrategy { quantile, equispaced };

struct KnotGrid {
    std::vector<double> knots;
    int dropped = 0;  // tied or boundary quantiles removed from the request

    int size() const { return static_cast<int>(knots.size()); }
};

namespace detail {

inline std::vector<double> equispaced_knots(double lo, double hi, int count) {
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(count));
    for (int m = 1; m <= count; ++m) t.push_back(lo + (hi - lo) * m / (count + 1));
    return t;
}

}  // namespace detail

inline KnotGrid build_knot_grid(std::span<const double> x, int count, KnotStrategy strategy) {
    if (count < 2) throw Error(ErrorKind::InvalidInput, "knot count must be at least 2");
    if (x.empty()) throw Error(ErrorKind::InvalidInput, "empty predictor column");
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (!(hi > lo)) throw Error(ErrorKind::DegenerateRange, "predictor column is constant");
    const auto distinct = std::distance(sorted.begin(), std::unique(sorted.begin(), sorted.end()));
    if (distinct < count + 2)
        throw Error(ErrorKind::TooFewDistinctValues,
                    std::to_string(distinct) + " distinct values, need " + std::to_string(count + 2));

    KnotGrid grid;
    if (strategy == KnotStrategy::equispaced) {
        grid.knots = detail::equispaced_knots(lo, hi, count);
        return grid;
    }

    // empirical quantiles with linear interpolation between order statistics
    sorted.assign(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const auto last = static_cast<double>(sorted.size() - 1);
    for (int m = 1; m <= count; ++m) {
        const double h = last * m / (count + 1);
        const auto i = static_cast<std::size_t>(std::floor(h));
        const double frac = h - static_cast<double>(i);
        double t = sorted[i];
        if (frac > 0.0 && i + 1 < sorted.size()) t += frac * (sorted[i + 1] - sorted[i]);
        if (t <= lo || t >= hi) continue;
        if (!grid.knots.empty() && t <= grid.knots.back()) continue;
        grid.knots.push_back(t);
    }
    grid.dropped = count - grid.size();
    if (grid.size() < 2) {
        // heavily tied data: quantiles collapse onto a handful of values
        grid.knots = detail::equispaced_knots(lo, hi, count);
        grid.dropped = 0;
    }
    return grid;
}

/// Centered, unit-norm cubic radial basis for one continuous predictor.
/// Column 0 is the linear term, column m >= 1 is |u - t_m|^3.
class SplineBasis {
public:
    SplineBasis(std::span<const double> x, KnotGrid grid) : knots_(std::move(grid.knots)) {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        lo_ = *lo;
        hi_ = *hi;
        const auto n = static_cast<Eigen::Index>(x.size());
        const Eigen::Index cols = size();
        MatrixXd raw(n, cols);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index m = 0; m < cols; ++m) raw(i, m) = raw_value(x[static_cast<std::size_t>(i)], static_cast<int>(m));
        means_ = raw.colwise().mean().transpose();
        scales_.resize(cols);
        for (Eigen::Index m = 0; m < cols; ++m) {
            const double s = (raw.col(m).array() - means_(m)).matrix().norm();
            scales_(m) = s > 0.0 ? s : 1.0;
        }
        columns_.resize(n, cols);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index m = 0; m < cols; ++m)
                columns_(i, m) = value(x[static_cast<std::size_t>(i)], static_cast<int>(m));
    }

    /// Number of basis columns, L + 1.
    int size() const { return static_cast<int>(knots_.size()) + 1; }
    int knot_count() const { return static_cast<int>(knots_.size()); }

    double raw_value(double u, int m) const {
        if (m == 0) return u;
        const double d = std::fabs(u - knots_[static_cast<std::size_t>(m - 1)]);
        return d * d * d;
    }

    /// Basis function m at an arbitrary point, with the training centering and scaling.
    double value(double u, int m) const { return (raw_value(u, m) - means_(m)) / scales_(m); }

    const MatrixXd& columns() const { return columns_; }
    const std::vector<double>& knots() const { return knots_; }
    const VectorXd& means() const { return means_; }
    const VectorXd& scales() const { return scales_; }
    double lower() const { return lo_; }
    double upper() const { return hi_; }

private:
    std::vector<double> knots_;
    double lo_ = 0.0;
    double hi_ = 0.0;
    VectorXd means_;
    VectorXd scales_;
    MatrixXd columns_;
};

struct BasisLibrary {
    std::vector<SplineBasis> blocks;
    std::vector<int> dropped_knots;  // per predictor, for reporting

    int p() const { return static_cast<int>(blocks.size()); }

    std::vector<int> knot_counts() const {
        std::vector<int> out;
        out.reserve(blocks.size());
        for (const auto& b : blocks) out.push_back(b.knot_count());
        return out;
    }
};

inline BasisLibrary build_basis_library(const Dataset& data, int knots,
                                        KnotStrategy strategy = KnotStrategy::quantile) {
    BasisLibrary lib;
    for (int j = 0; j < data.p(); ++j) {
        const VectorXd col = data.x.col(j);
        const std::span<const double> xs(col.data(), static_cast<std::size_t>(col.size()));
        KnotGrid grid;
        try {
            grid = build_knot_grid(xs, knots, strategy);
        } catch (const Error& e) {
            throw Error(e.kind(), "predictor '" + data.x_names[static_cast<std::size_t>(j)] + "': " + e.what());
        }
        lib.dropped_knots.push_back(grid.dropped);
        lib.blocks.emplace_back(xs, std::move(grid));
    }
    return lib;
}

// ---------------------------------------------------------------------------
// Latent states

enum class Effect : std::uint8_t { none = 0, linear = 1, nonlinear = 2 };

inline int to_int(Effect e) { return static_cast<int>(e); }

struct GammaState {
    std::vector<Effect> x;
    std::vector<Effect> z;

    /// Number of included predictors.
    int size() const {
        int k = 0;
        for (Effect e : x) k += e != Effect::none;
        for (Effect e : z) k += e != Effect::none;
        return k;
    }

    friend bool operator==(const GammaState&, const GammaState&) = default;
};

inline GammaState full_model(int p, int q) {
    return {std::vector<Effect>(static_cast<std::size_t>(p), Effect::nonlinear),
            std::vector<Effect>(static_cast<std::size_t>(q), Effect::linear)};
}

inline GammaState null_model(int p, int q) {
    return {std::vector<Effect>(static_cast<std::size_t>(p), Effect::none),
            std::vector<Effect>(static_cast<std::size_t>(q), Effect::none)};
}

/// Knot indicators for one predictor: entry 0 is the linear term, entries
/// 1..L the cubic terms.
using KnotMask = std::vector<std::uint8_t>;
using DeltaState = std::vector<KnotMask>;

inline int knot_count(const KnotMask& mask) {
    int c = 0;
    for (std::size_t m = 1; m < mask.size(); ++m) c += mask[m] != 0;
    return c;
}

inline int active_count(const KnotMask& mask) { return knot_count(mask) + (mask[0] != 0); }

/// Linear term plus the middle knot for every predictor.
inline DeltaState minimal_delta(std::span<const int> knot_counts) {
    DeltaState d;
    for (int L : knot_counts) {
        KnotMask m(static_cast<std::size_t>(L + 1), 0);
        m[0] = 1;
        m[static_cast<std::size_t>((L + 1) / 2)] = 1;
        d.push_back(std::move(m));
    }
    return d;
}

inline void check_gamma(const GammaState& gamma, int p, int q) {
    if (std::ssize(gamma.x) != p || std::ssize(gamma.z) != q)
        throw Error(ErrorKind::DimensionMismatch, "gamma state has wrong length");
    for (Effect e : gamma.z)
        if (e == Effect::nonlinear) throw Error(ErrorKind::InvalidInput, "linear-only predictor marked nonlinear");
    for (Effect e : gamma.x)
        if (to_int(e) > 2) throw Error(ErrorKind::InvalidInput, "gamma value out of range");
}

/// Which basis columns of predictor j enter the model for effect `gx`.
inline KnotMask inclusion_vector(Effect gx, const KnotMask& delta) {
    KnotMask eta(delta.size(), 0);
    switch (gx) {
        case Effect::none:
            break;
        case Effect::linear:
            eta[0] = 1;
            break;
        case Effect::nonlinear:
            if (knot_count(delta) == 0)
                throw Error(ErrorKind::IdentifiabilityViolation, "nonlinear effect with no active knot");
            for (std::size_t m = 0; m < delta.size(); ++m) eta[m] = delta[m] != 0;
            break;
    }
    return eta;
}

inline int model_dimension(const GammaState& gamma, const DeltaState& delta) {
    int dim = 0;
    for (std::size_t j = 0; j < gamma.x.size(); ++j) {
        if (gamma.x[j] == Effect::linear) dim += 1;
        else if (gamma.x[j] == Effect::nonlinear) dim += active_count(delta[j]);
    }
    for (Effect e : gamma.z) dim += e == Effect::linear;
    return dim;
}

struct ColumnOrigin {
    enum class Block : std::uint8_t { x, z };
    Block block;
    int predictor;
    int basis_index;  // 0 for Z columns

    friend bool operator==(const ColumnOrigin&, const ColumnOrigin&) = default;
};

inline std::vector<ColumnOrigin> column_origins(const GammaState& gamma, const DeltaState& delta) {
    std::vector<ColumnOrigin> out;
    for (std::size_t j = 0; j < gamma.x.size(); ++j) {
        const KnotMask eta = inclusion_vector(gamma.x[j], delta[j]);
        for (std::size_t m = 0; m < eta.size(); ++m)
            if (eta[m]) out.push_back({ColumnOrigin::Block::x, static_cast<int>(j), static_cast<int>(m)});
    }
    for (std::size_t k = 0; k < gamma.z.size(); ++k)
        if (gamma.z[k] == Effect::linear) out.push_back({ColumnOrigin::Block::z, static_cast<int>(k), 0});
    return out;
}

struct Design {
    MatrixXd w;
    std::vector<ColumnOrigin> columns;
};

inline MatrixXd gather_columns(const BasisLibrary& basis, const MatrixXd& z, std::span<const ColumnOrigin> cols) {
    const Eigen::Index n = z.rows();
    MatrixXd w(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto& o = cols[c];
        if (o.block == ColumnOrigin::Block::x)
            w.col(static_cast<Eigen::Index>(c)) = basis.blocks[static_cast<std::size_t>(o.predictor)].columns().col(o.basis_index);
        else
            w.col(static_cast<Eigen::Index>(c)) = z.col(o.predictor);
    }
    return w;
}

/// Selected design W for a latent state: chosen basis columns, then chosen Z columns.
inline Design assemble_design(const BasisLibrary& basis, const MatrixXd& z, const GammaState& gamma,
                              const DeltaState& delta) {
    Design d;
    d.columns = column_origins(gamma, delta);
    d.w = gather_columns(basis, z, d.columns);
    return d;
}

}  // namespace msbs

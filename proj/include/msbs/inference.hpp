#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbs/csv.hpp"
#include "msbs/data_design.hpp"
#include "msbs/error.hpp"
#include "msbs/samplers.hpp"

namespace msbs {

// ---------------------------------------------------------------------------
// Model decision

struct SelectionResult {
    std::vector<std::array<double, 3>> px;  // Pr(gx_j = 0, 1, 2 | data)
    std::vector<std::array<double, 2>> pz;  // Pr(gz_k = 0, 1 | data)
    GammaState gamma_hat;
};

/// Per-coordinate posterior mode of the indicator chain; ties go to the
/// smaller label.
inline SelectionResult select_model(std::span<const GammaState> draws) {
    if (draws.empty()) throw Error(ErrorKind::EmptyTrace, "selection trace is empty");
    const std::size_t p = draws.front().x.size();
    const std::size_t q = draws.front().z.size();
    std::vector<std::array<std::size_t, 3>> cx(p, {0, 0, 0});
    std::vector<std::array<std::size_t, 2>> cz(q, {0, 0});
    for (const auto& g : draws) {
        for (std::size_t j = 0; j < p; ++j) ++cx[j][static_cast<std::size_t>(to_int(g.x[j]))];
        for (std::size_t k = 0; k < q; ++k) ++cz[k][static_cast<std::size_t>(to_int(g.z[k]))];
    }
    const auto T = static_cast<double>(draws.size());
    SelectionResult r;
    r.gamma_hat = null_model(static_cast<int>(p), static_cast<int>(q));
    for (std::size_t j = 0; j < p; ++j) {
        r.px.push_back({cx[j][0] / T, cx[j][1] / T, cx[j][2] / T});
        const auto best = std::max_element(cx[j].begin(), cx[j].end()) - cx[j].begin();
        r.gamma_hat.x[j] = static_cast<Effect>(best);
    }
    for (std::size_t k = 0; k < q; ++k) {
        r.pz.push_back({cz[k][0] / T, cz[k][1] / T});
        r.gamma_hat.z[k] = cz[k][1] > cz[k][0] ? Effect::linear : Effect::none;
    }
    return r;
}

inline SelectionResult select_model(const SelectionTrace& trace) { return select_model(std::span(trace.gamma)); }

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// predictor,P_zero,P_linear,P_nonlinear,gamma_hat; linear-only rows carry "-".
inline void write_selection_result(std::ostream& out, const SelectionResult& r, const Dataset& data) {
    out << "predictor,P_zero,P_linear,P_nonlinear,gamma_hat\n";
    for (std::size_t j = 0; j < r.px.size(); ++j)
        out << data.x_names[j] << ',' << fixed(r.px[j][0]) << ',' << fixed(r.px[j][1]) << ',' << fixed(r.px[j][2])
            << ',' << to_int(r.gamma_hat.x[j]) << '\n';
    for (std::size_t k = 0; k < r.pz.size(); ++k)
        out << data.z_names[k] << ',' << fixed(r.pz[k][0]) << ',' << fixed(r.pz[k][1]) << ",-,"
            << to_int(r.gamma_hat.z[k]) << '\n';
}

// ---------------------------------------------------------------------------
// Posterior summaries

/// Type-7 empirical quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double prob) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Summary {
    double mean = 0.0;
    double median = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
};

inline Summary summarize(std::span<const double> draws) {
    if (draws.empty()) throw Error(ErrorKind::EmptyTrace, "no draws to summarise");
    std::vector<double> s(draws.begin(), draws.end());
    std::sort(s.begin(), s.end());
    Summary out;
    double total = 0.0;
    for (double v : draws) total += v;
    out.mean = total / static_cast<double>(draws.size());
    out.median = quantile_sorted(s, 0.5);
    out.lo95 = quantile_sorted(s, 0.025);
    out.hi95 = quantile_sorted(s, 0.975);
    return out;
}

/// Intercept on the original (uncentered) Z scale: alpha - zbar' beta.
inline std::vector<double> restore_intercept(const EstimationTrace& trace, const VectorXd& z_means) {
    std::vector<double> out;
    out.reserve(trace.size());
    for (const auto& d : trace.draws) {
        double a = d.alpha;
        for (std::size_t c = 0; c < d.columns.size(); ++c)
            if (d.columns[c].block == ColumnOrigin::Block::z)
                a -= z_means(d.columns[c].predictor) * d.theta(static_cast<Eigen::Index>(c));
        out.push_back(a);
    }
    return out;
}

struct ParameterSummary {
    std::string name;
    Summary summary;
};

/// Intercept (restored), every linear effect, and sigma^2. Slopes of linear X
/// effects are reported per unit of the original predictor.
inline std::vector<ParameterSummary> posterior_summaries(const EstimationTrace& trace, const Dataset& data,
                                                         const BasisLibrary& basis) {
    if (trace.draws.empty()) throw Error(ErrorKind::EmptyTrace, "estimation trace is empty");
    std::vector<ParameterSummary> out;
    out.push_back({"Intercept", summarize(restore_intercept(trace, data.z_means))});

    auto coefficient = [&](ColumnOrigin::Block block, int index) {
        std::vector<double> v;
        v.reserve(trace.size());
        for (const auto& d : trace.draws) {
            for (std::size_t c = 0; c < d.columns.size(); ++c) {
                const auto& o = d.columns[c];
                if (o.block == block && o.predictor == index) {
                    double th = d.theta(static_cast<Eigen::Index>(c));
                    if (block == ColumnOrigin::Block::x) th /= basis.blocks[static_cast<std::size_t>(index)].scales()(0);
                    v.push_back(th);
                    break;
                }
            }
        }
        return v;
    };
    for (std::size_t j = 0; j < trace.gamma.x.size(); ++j)
        if (trace.gamma.x[j] == Effect::linear)
            out.push_back({data.x_names[j], summarize(coefficient(ColumnOrigin::Block::x, static_cast<int>(j)))});
    for (std::size_t k = 0; k < trace.gamma.z.size(); ++k)
        if (trace.gamma.z[k] == Effect::linear)
            out.push_back({data.z_names[k], summarize(coefficient(ColumnOrigin::Block::z, static_cast<int>(k)))});

    std::vector<double> s2;
    s2.reserve(trace.size());
    for (const auto& d : trace.draws) s2.push_back(d.sigma2);
    out.push_back({"sigma2", summarize(s2)});
    return out;
}

inline void write_summaries(std::ostream& out, std::span<const ParameterSummary> rows) {
    out << "parameter,mean,median,lo95,hi95\n";
    for (const auto& r : rows)
        out << r.name << ',' << format_double(r.summary.mean) << ',' << format_double(r.summary.median) << ','
            << format_double(r.summary.lo95) << ',' << format_double(r.summary.hi95) << '\n';
}

// ---------------------------------------------------------------------------
// Smooth function estimates

/// Per-iteration values of f_j at the given points (rows: iterations).
inline MatrixXd function_draws(const EstimationTrace& trace, const BasisLibrary& basis, int j,
                               std::span<const double> points) {
    if (trace.gamma.x[static_cast<std::size_t>(j)] != Effect::nonlinear)
        throw Error(ErrorKind::NoNonlinearComponents, "predictor is not selected as nonlinear");
    const auto& b = basis.blocks[static_cast<std::size_t>(j)];
    MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(trace.size()), static_cast<Eigen::Index>(points.size()));
    for (std::size_t t = 0; t < trace.size(); ++t) {
        const auto& d = trace.draws[t];
        for (std::size_t c = 0; c < d.columns.size(); ++c) {
            const auto& o = d.columns[c];
            if (o.block != ColumnOrigin::Block::x || o.predictor != j) continue;
            const double coef = d.theta(static_cast<Eigen::Index>(c));
            for (std::size_t g = 0; g < points.size(); ++g)
                out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(g)) += coef * b.value(points[g], o.basis_index);
        }
    }
    return out;
}

struct FunctionEstimate {
    int predictor = 0;
    std::vector<double> grid;
    std::vector<double> mean;
    std::vector<double> median;
    std::vector<double> lo95;
    std::vector<double> hi95;
};

inline FunctionEstimate estimate_function(const EstimationTrace& trace, const BasisLibrary& basis, int j,
                                          int grid_size = 200) {
    if (trace.draws.empty()) throw Error(ErrorKind::EmptyTrace, "estimation trace is empty");
    if (grid_size < 2) throw Error(ErrorKind::InvalidInput, "grid needs at least two points");
    const auto& b = basis.blocks[static_cast<std::size_t>(j)];
    FunctionEstimate f;
    f.predictor = j;
    for (int i = 0; i < grid_size; ++i)
        f.grid.push_back(b.lower() + (b.upper() - b.lower()) * i / (grid_size - 1));
    const MatrixXd draws = function_draws(trace, basis, j, f.grid);
    std::vector<double> col(static_cast<std::size_t>(draws.rows()));
    for (Eigen::Index g = 0; g < draws.cols(); ++g) {
        for (Eigen::Index t = 0; t < draws.rows(); ++t) col[static_cast<std::size_t>(t)] = draws(t, g);
        const Summary s = summarize(col);
        f.mean.push_back(s.mean);
        f.median.push_back(s.median);
        f.lo95.push_back(s.lo95);
        f.hi95.push_back(s.hi95);
    }
    return f;
}

/// Estimates for every predictor selected as nonlinear.
inline std::vector<FunctionEstimate> estimate_functions(const EstimationTrace& trace, const BasisLibrary& basis,
                                                        int grid_size = 200) {
    std::vector<FunctionEstimate> out;
    for (std::size_t j = 0; j < trace.gamma.x.size(); ++j)
        if (trace.gamma.x[j] == Effect::nonlinear)
            out.push_back(estimate_function(trace, basis, static_cast<int>(j), grid_size));
    if (out.empty()) throw Error(ErrorKind::NoNonlinearComponents, "no predictor selected as nonlinear");
    return out;
}

inline void write_function_estimate(std::ostream& out, const FunctionEstimate& f) {
    out << "u,mean,median,lo95,hi95\n";
    for (std::size_t i = 0; i < f.grid.size(); ++i)
        out << format_double(f.grid[i]) << ',' << format_double(f.mean[i]) << ',' << format_double(f.median[i]) << ','
            << format_double(f.lo95[i]) << ',' << format_double(f.hi95[i]) << '\n';
}

}  // namespace msbs

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbs/csv.hpp"
#include "msbs/data_design.hpp"
#include "msbs/error.hpp"
#include "msbs/likelihood.hpp"
#include "msbs/random.hpp"

namespace msbs {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Model prior over gamma

/// Hierarchical-uniform prior generalised to ternary X indicators: uniform
/// on model size, nonzero X effects split evenly between linear and nonlinear.
inline double log_prior_gamma(const GammaState& gamma) {
    const int total = static_cast<int>(gamma.x.size() + gamma.z.size());
    const int k = gamma.size();
    int nonzero_x = 0;
    for (Effect e : gamma.x) nonzero_x += e != Effect::none;
    return log_beta(k + 1.0, total - k + 1.0) - nonzero_x * std::log(2.0);
}

// ---------------------------------------------------------------------------
// Knot prior given a nonlinear effect

struct KnotPriorConfig {
    std::vector<double> success;  // p_j, one per predictor

    static KnotPriorConfig uniform(int p, double pj = 0.4) {
        if (!(pj > 0.0 && pj < 1.0)) throw Error(ErrorKind::InvalidInput, "knot prior p_j must lie in (0, 1)");
        return {std::vector<double>(static_cast<std::size_t>(p), pj)};
    }
};

/// log pi(delta_j | gamma_j = nonlinear): Bernoulli(1/2) on the linear term times a
/// zero-truncated geometric on the knot count, uniform across equal-count masks.
inline double log_prior_delta_given_nonlinear(const KnotMask& mask, double pj) {
    const int L = static_cast<int>(mask.size()) - 1;
    const int l = knot_count(mask);
    if (l == 0) throw Error(ErrorKind::IdentifiabilityViolation, "nonlinear effect with no active knot");
    return -std::log(2.0) - log_choose(L, l) + (l - 1) * std::log1p(-pj) + std::log(pj) -
           std::log1p(-std::pow(1.0 - pj, L));
}

/// Redraw the entries of `mask` listed in `block` from their conditional prior
/// given the remaining entries, by enumerating all 2^|block| configurations.
inline KnotMask sample_block_from_conditional_prior(const KnotMask& mask, std::span<const int> block, double pj,
                                                    Rng& rng) {
    const auto size = block.size();
    if (size == 0 || size > 4) throw Error(ErrorKind::InvalidInput, "block size must be in 1..4");
    const std::size_t configs = std::size_t{1} << size;
    std::array<double, 16> logw{};
    KnotMask work = mask;
    bool any = false;
    for (std::size_t c = 0; c < configs; ++c) {
        for (std::size_t b = 0; b < size; ++b) work[static_cast<std::size_t>(block[b])] = (c >> b) & 1U;
        logw[c] = knot_count(work) == 0 ? neg_inf : log_prior_delta_given_nonlinear(work, pj);
        any = any || logw[c] > neg_inf;
    }
    if (!any) throw Error(ErrorKind::IdentifiabilityViolation, "all block configurations inadmissible");
    const std::size_t pick = rng.categorical_log(std::span<const double>(logw.data(), configs));
    for (std::size_t b = 0; b < size; ++b) work[static_cast<std::size_t>(block[b])] = (pick >> b) & 1U;
    return work;
}

// ---------------------------------------------------------------------------
// Pseudo-prior for delta_j when gamma_j is not nonlinear

struct PseudoPriorEntry {
    double w0 = 0.5;   // Pr(linear term active)
    double xi = 1.0;   // location of the Gaussian kernel on the knot count
    double nu2 = 1.0;  // squared scale of the kernel
    int knots = 0;     // L_j

    /// Normalised log pmf of the knot count l = 1..L (index l - 1).
    std::vector<double> log_count_pmf() const {
        std::vector<double> lw(static_cast<std::size_t>(knots));
        for (int l = 1; l <= knots; ++l) lw[static_cast<std::size_t>(l - 1)] = -(l - xi) * (l - xi) / (2.0 * nu2);
        const double top = *std::max_element(lw.begin(), lw.end());
        double total = 0.0;
        for (double v : lw) total += std::exp(v - top);
        const double lognorm = top + std::log(total);
        for (double& v : lw) v -= lognorm;
        return lw;
    }
};

struct PseudoPrior {
    std::vector<PseudoPriorEntry> entries;
};

inline constexpr double pseudo_w0_min = 0.025;
inline constexpr double pseudo_w0_max = 0.975;
inline constexpr double pilot_variance_floor = 0.05;

/// Mean and variance of the knot count under the Gaussian-kernel pmf on 1..L.
inline std::array<double, 2> count_moments(double xi, double nu2, int L) {
    const PseudoPriorEntry e{0.5, xi, nu2, L};
    const auto lp = e.log_count_pmf();
    double mean = 0.0;
    double second = 0.0;
    for (int l = 1; l <= L; ++l) {
        const double w = std::exp(lp[static_cast<std::size_t>(l - 1)]);
        mean += w * l;
        second += w * l * l;
    }
    return {mean, std::max(0.0, second - mean * mean)};
}

namespace detail {

struct KernelFit {
    double xi;
    double nu2;
    double residual;
};

// Solve mean(xi, nu) = target_mean, var(xi, nu) = target_var in the
// coordinates (xi, log nu) by damped Newton with a central-difference Jacobian.
inline KernelFit newton_kernel_fit(double target_mean, double target_var, int L, double xi0, double log_nu0) {
    auto resid = [&](double xi, double lnu) {
        const auto m = count_moments(xi, std::exp(2.0 * lnu), L);
        return Eigen::Vector2d(m[0] - target_mean, m[1] - target_var);
    };
    Eigen::Vector2d x(xi0, log_nu0);
    Eigen::Vector2d f = resid(x(0), x(1));
    for (int it = 0; it < 100 && f.cwiseAbs().maxCoeff() > 1e-12; ++it) {
        const double h = 1e-6;
        Eigen::Matrix2d jac;
        jac.col(0) = (resid(x(0) + h, x(1)) - resid(x(0) - h, x(1))) / (2 * h);
        jac.col(1) = (resid(x(0), x(1) + h) - resid(x(0), x(1) - h)) / (2 * h);
        const Eigen::Vector2d step = jac.fullPivLu().solve(-f);
        if (!step.allFinite()) break;
        double t = 1.0;
        bool improved = false;
        for (int k = 0; k < 40; ++k, t *= 0.5) {
            const Eigen::Vector2d cand = x + t * step;
            const Eigen::Vector2d fc = resid(cand(0), cand(1));
            if (fc.allFinite() && fc.norm() < f.norm()) {
                x = cand;
                f = fc;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    return {x(0), std::exp(2.0 * x(1)), f.cwiseAbs().maxCoeff()};
}

}  // namespace detail

/// Fit one pseudo-prior entry from pilot knot counts and linear-term indicators.
inline PseudoPriorEntry fit_pseudo_prior_entry(std::span<const int> counts, std::span<const std::uint8_t> linear,
                                               int L) {
    if (counts.empty()) throw Error(ErrorKind::EmptyPilot, "pilot trace is empty");
    const auto T = static_cast<double>(counts.size());
    double on = 0.0;
    for (auto v : linear) on += v != 0;
    PseudoPriorEntry e;
    e.knots = L;
    e.w0 = std::clamp(on / T, pseudo_w0_min, pseudo_w0_max);

    double mean = 0.0;
    for (int c : counts) mean += c;
    mean /= T;
    double var = 0.0;
    for (int c : counts) var += (c - mean) * (c - mean);
    var = std::max(var / T, pilot_variance_floor);

    auto fit = detail::newton_kernel_fit(mean, var, L, mean, 0.5 * std::log(var));
    if (!(fit.residual < 1e-8)) {
        // grid fallback over xi in [1, L], nu in [0.1, L], then polish
        double best = std::numeric_limits<double>::infinity();
        double best_xi = mean;
        double best_nu = std::sqrt(var);
        const int steps = 200;
        for (int a = 0; a <= steps; ++a) {
            const double xi = 1.0 + (L - 1.0) * a / steps;
            for (int b = 0; b <= steps; ++b) {
                const double nu = 0.1 + (L - 0.1) * b / steps;
                const auto m = count_moments(xi, nu * nu, L);
                const double r = std::max(std::fabs(m[0] - mean), std::fabs(m[1] - var));
                if (r < best) {
                    best = r;
                    best_xi = xi;
                    best_nu = nu;
                }
            }
        }
        fit = {best_xi, best_nu * best_nu, best};
        const auto polished = detail::newton_kernel_fit(mean, var, L, best_xi, std::log(best_nu));
        if (polished.residual < fit.residual) fit = polished;
    }
    e.xi = fit.xi;
    e.nu2 = fit.nu2;
    return e;
}

inline PseudoPrior fit_pseudo_prior(std::span<const DeltaState> pilot, std::span<const int> knot_counts) {
    if (pilot.empty()) throw Error(ErrorKind::EmptyPilot, "pilot trace is empty");
    PseudoPrior pp;
    for (std::size_t j = 0; j < knot_counts.size(); ++j) {
        std::vector<int> counts;
        std::vector<std::uint8_t> linear;
        counts.reserve(pilot.size());
        linear.reserve(pilot.size());
        for (const auto& d : pilot) {
            counts.push_back(knot_count(d[j]));
            linear.push_back(d[j][0]);
        }
        pp.entries.push_back(fit_pseudo_prior_entry(counts, linear, knot_counts[j]));
    }
    return pp;
}

inline double log_pseudo_prior(const KnotMask& mask, const PseudoPriorEntry& e) {
    const int l = knot_count(mask);
    if (l == 0 || l > e.knots || std::ssize(mask) != e.knots + 1)
        throw Error(ErrorKind::DomainViolation, "knot mask outside pseudo-prior support");
    const double lin = mask[0] ? std::log(e.w0) : std::log1p(-e.w0);
    return lin + e.log_count_pmf()[static_cast<std::size_t>(l - 1)] - log_choose(e.knots, l);
}

inline KnotMask sample_pseudo_prior(const PseudoPriorEntry& e, Rng& rng) {
    KnotMask mask(static_cast<std::size_t>(e.knots + 1), 0);
    mask[0] = rng.bernoulli(e.w0);
    const auto lp = e.log_count_pmf();
    const int l = static_cast<int>(rng.categorical_log(lp)) + 1;
    for (int m : rng.subset(e.knots, l)) mask[static_cast<std::size_t>(m)] = 1;
    return mask;
}

// ---------------------------------------------------------------------------
// Plain-text table: predictor,w0,xi,nu2,knots

inline void write_pseudo_prior(std::ostream& out, const PseudoPrior& pp, const std::vector<std::string>& names) {
    out << "predictor,w0,xi,nu2,knots\n";
    for (std::size_t j = 0; j < pp.entries.size(); ++j) {
        const auto& e = pp.entries[j];
        out << (j < names.size() ? names[j] : "x" + std::to_string(j + 1)) << ',' << format_double(e.w0) << ','
            << format_double(e.xi) << ',' << format_double(e.nu2) << ',' << e.knots << '\n';
    }
}

inline PseudoPrior read_pseudo_prior(std::istream& in, const std::vector<std::string>& names) {
    const CsvTable t = parse_csv(in);
    for (const char* col : {"predictor", "w0", "xi", "nu2", "knots"})
        if (t.find(col) < 0) throw Error(ErrorKind::InvalidInput, std::string("pseudo-prior table lacks column '") + col + "'");
    const auto w0 = t.numeric_column("w0");
    const auto xi = t.numeric_column("xi");
    const auto nu2 = t.numeric_column("nu2");
    const auto knots = t.numeric_column("knots");
    const auto pcol = static_cast<std::size_t>(t.find("predictor"));
    PseudoPrior pp;
    for (std::size_t j = 0; j < names.size(); ++j) {
        std::size_t r = 0;
        while (r < t.rows.size() && t.rows[r][pcol] != names[j]) ++r;
        if (r == t.rows.size()) throw Error(ErrorKind::InvalidInput, "pseudo-prior has no row for '" + names[j] + "'");
        PseudoPriorEntry e{w0[r], xi[r], nu2[r], static_cast<int>(knots[r])};
        if (!(e.w0 > 0.0 && e.w0 < 1.0) || !(e.nu2 > 0.0) || e.knots < 1)
            throw Error(ErrorKind::InvalidInput, "invalid pseudo-prior row for '" + names[j] + "'");
        pp.entries.push_back(e);
    }
    return pp;
}

}  // namespace msbs

#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "msbs/msbs.hpp"

namespace oracle {

using namespace msbs;

inline double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

/// log of  integral_0^inf exp(h(log g)) d(log g)  by adaptive Gauss-Kronrod
/// on a finite window around the mode, after rescaling by the maximum.
inline double log_integrate_over_log_g(const std::function<double(double)>& h) {
    double smax = 0.0, hmax = -INFINITY;
    for (double s = -60.0; s <= 400.0; s += 0.05) {
        const double v = h(s);
        if (v > hmax) {
            hmax = v;
            smax = s;
        }
    }
    double lo = smax, hi = smax;
    while (h(lo) - hmax > -80.0) lo -= 1.0;
    while (h(hi) - hmax > -80.0) hi += 1.0;
    auto f = [&](double s) { return std::exp(h(s) - hmax); };
    double err = 0.0;
    double total = 0.0;
    // split to keep each panel smooth
    const int panels = 16;
    for (int k = 0; k < panels; ++k) {
        const double a = lo + (hi - lo) * k / panels;
        const double b = lo + (hi - lo) * (k + 1) / panels;
        total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 8, 1e-13, &err);
    }
    return hmax + std::log(total);
}

/// log of the beta-prime density written out with std::lgamma.
inline double beta_prime_log_density(double g, double a, double b) {
    const double lb = std::lgamma(a + 1) + std::lgamma(b + 1) - std::lgamma(a + b + 2);
    return b * std::log(g) - (a + b + 2) * std::log1p(g) - lb;
}

/// log( integral L(y|g) pi(g) dg ) - log K(n,y), with
/// L(y|g)/K = (1+g)^{(n-1-J)/2} (1+g(1-R^2))^{-(n-1)/2}.
inline double log_marginal_by_quadrature(int n, int J, double r2) {
    const double a = -0.75;
    const double b = (n - J - 5) / 2.0 + 0.75;
    const double lb = std::lgamma(a + 1) + std::lgamma(b + 1) - std::lgamma(a + b + 2);
    auto h = [&](double s) {
        const double log1pg = softplus(s);
        const double log1pgr = softplus(s + std::log1p(-r2));
        const double like = (n - 1.0 - J) / 2.0 * log1pg - (n - 1.0) / 2.0 * log1pgr;
        const double prior = b * s - (a + b + 2) * log1pg - lb;
        return like + prior + s;
    };
    return log_integrate_over_log_g(h);
}

// ---------------------------------------------------------------------------
// Monte Carlo checks

/// Pearson test of observed counts against expected probabilities; true if
/// the test does not reject at `level`. Zero-probability cells must be empty.
inline bool chi_square_ok(const std::vector<double>& observed, const std::vector<double>& prob, double level = 0.01) {
    double total = 0.0;
    for (double o : observed) total += o;
    double stat = 0.0;
    int df = -1;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (prob[i] <= 0.0) {
            if (observed[i] > 0) return false;
            continue;
        }
        const double e = total * prob[i];
        stat += (observed[i] - e) * (observed[i] - e) / e;
        ++df;
    }
    if (df < 1) return true;
    const boost::math::chi_squared dist(df);
    return stat < boost::math::quantile(dist, 1.0 - level);
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
inline double batch_means_se(const std::vector<double>& x, int batches = 50) {
    const auto n = x.size();
    const std::size_t b = n / static_cast<std::size_t>(batches);
    double grand = 0.0;
    std::vector<double> means;
    for (int k = 0; k < batches; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < b; ++i) s += x[static_cast<std::size_t>(k) * b + i];
        means.push_back(s / static_cast<double>(b));
        grand += means.back();
    }
    grand /= batches;
    double v = 0.0;
    for (double m : means) v += (m - grand) * (m - grand);
    return std::sqrt(v / (batches - 1) / batches);
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of small problems

/// Every gamma state for (p, q), in odometer order.
inline std::vector<GammaState> all_gammas(int p, int q) {
    std::vector<GammaState> out;
    GammaState g = null_model(p, q);
    while (true) {
        out.push_back(g);
        int i = 0;
        for (; i < p + q; ++i) {
            if (i < p) {
                auto& e = g.x[static_cast<std::size_t>(i)];
                if (e != Effect::nonlinear) {
                    e = static_cast<Effect>(to_int(e) + 1);
                    break;
                }
                e = Effect::none;
            } else {
                auto& e = g.z[static_cast<std::size_t>(i - p)];
                if (e == Effect::none) {
                    e = Effect::linear;
                    break;
                }
                e = Effect::none;
            }
        }
        if (i == p + q) break;
    }
    return out;
}

/// Every knot mask of length L+1 with at least one knot.
inline std::vector<KnotMask> all_masks(int L) {
    std::vector<KnotMask> out;
    for (int bits = 0; bits < (1 << (L + 1)); ++bits) {
        KnotMask m(static_cast<std::size_t>(L + 1));
        for (int b = 0; b <= L; ++b) m[static_cast<std::size_t>(b)] = (bits >> b) & 1;
        if (knot_count(m) > 0) out.push_back(std::move(m));
    }
    return out;
}

/// Direct evaluation of the knot prior: half for the linear term, then a
/// truncated geometric count spread uniformly over subsets of that size.
inline double knot_prior(const KnotMask& m, double pj) {
    const int L = static_cast<int>(m.size()) - 1;
    const int l = knot_count(m);
    if (l == 0) return 0.0;
    double choose = 1.0;
    for (int i = 0; i < l; ++i) choose = choose * (L - i) / (i + 1);
    return 0.5 / choose * std::pow(1 - pj, l - 1) * pj / (1 - std::pow(1 - pj, L));
}

/// Model prior by counting: uniform over |gamma|, uniform over subsets of
/// that size, and a fair coin between linear and nonlinear for each X.
inline double model_prior(const GammaState& g) {
    const int p = static_cast<int>(g.x.size());
    const int q = static_cast<int>(g.z.size());
    int k = 0, kx = 0;
    for (Effect e : g.x)
        if (e != Effect::none) ++k, ++kx;
    for (Effect e : g.z)
        if (e != Effect::none) ++k;
    double choose = 1.0;
    for (int i = 0; i < k; ++i) choose = choose * (p + q - i) / (i + 1);
    return 1.0 / (p + q + 1) / choose * std::pow(0.5, kx);
}

inline std::vector<int> gamma_key(const GammaState& g) {
    std::vector<int> k;
    for (Effect e : g.x) k.push_back(to_int(e));
    for (Effect e : g.z) k.push_back(to_int(e));
    return k;
}

/// Exact posterior of gamma with delta marginalised under the knot prior.
inline std::map<std::vector<int>, double> gamma_posterior(const Dataset& data, const BasisLibrary& basis, double pj) {
    const int p = data.p(), q = data.q();
    const CenteredResponse resp(data.y);
    const auto counts = basis.knot_counts();
    std::vector<std::vector<KnotMask>> masks;
    for (int L : counts) masks.push_back(all_masks(L));

    std::map<std::vector<int>, double> logpost;
    for (const auto& g : all_gammas(p, q)) {
        // iterate over deltas of nonlinear predictors only
        std::vector<int> nl;
        for (int j = 0; j < p; ++j)
            if (g.x[static_cast<std::size_t>(j)] == Effect::nonlinear) nl.push_back(j);
        DeltaState d = minimal_delta(counts);
        std::vector<std::size_t> idx(nl.size(), 0);
        std::vector<double> terms;
        while (true) {
            double lp = std::log(model_prior(g));
            for (std::size_t i = 0; i < nl.size(); ++i) {
                const auto& m = masks[static_cast<std::size_t>(nl[i])][idx[i]];
                d[static_cast<std::size_t>(nl[i])] = m;
                lp += std::log(knot_prior(m, pj));
            }
            const auto w = assemble_design(basis, data.z, g, d).w;
            const auto fs = r_squared(w, resp);
            if (fs.valid) terms.push_back(lp + log_marginal(fs, resp.n()));
            std::size_t i = 0;
            for (; i < nl.size(); ++i) {
                if (++idx[i] < masks[static_cast<std::size_t>(nl[i])].size()) break;
                idx[i] = 0;
            }
            if (i == nl.size()) break;
        }
        if (terms.empty()) continue;
        const double mx = *std::max_element(terms.begin(), terms.end());
        double s = 0.0;
        for (double t : terms) s += std::exp(t - mx);
        logpost[gamma_key(g)] = mx + std::log(s);
    }
    double mx = -INFINITY;
    for (const auto& [k, v] : logpost) mx = std::max(mx, v);
    double total = 0.0;
    for (const auto& [k, v] : logpost) total += std::exp(v - mx);
    std::map<std::vector<int>, double> post;
    for (const auto& [k, v] : logpost) post[k] = std::exp(v - mx) / total;
    return post;
}

/// Exact posterior of one predictor's knot mask for a fixed gamma, with the
/// other predictors' masks held fixed.
inline std::map<KnotMask, double> delta_posterior(const Dataset& data, const BasisLibrary& basis, const GammaState& g,
                                                  int j, const DeltaState& others, double pj) {
    const CenteredResponse resp(data.y);
    DeltaState d = others;
    std::map<KnotMask, double> logpost;
    for (const auto& m : all_masks(basis.knot_counts()[static_cast<std::size_t>(j)])) {
        d[static_cast<std::size_t>(j)] = m;
        const auto fs = r_squared(assemble_design(basis, data.z, g, d).w, resp);
        if (fs.valid) logpost[m] = std::log(knot_prior(m, pj)) + log_marginal(fs, resp.n());
    }
    double mx = -INFINITY;
    for (const auto& [k, v] : logpost) mx = std::max(mx, v);
    double total = 0.0;
    for (const auto& [k, v] : logpost) total += std::exp(v - mx);
    std::map<KnotMask, double> post;
    for (const auto& [k, v] : logpost) post[k] = std::exp(v - mx) / total;
    return post;
}

/// Posterior expectation of f(g) given (n, J, R^2), where log_f is log f as a
/// function of s = log g, by quadrature against the collapsed g posterior.
inline double g_posterior_expectation(int n, int J, double r2, const std::function<double(double)>& log_f) {
    const double a = -0.75;
    const double b = (n - J - 5) / 2.0 + 0.75;
    auto h = [&](double s) {
        const double log1pg = softplus(s);
        const double log1pgr = softplus(s + std::log1p(-r2));
        return (n - 1.0 - J) / 2.0 * log1pg - (n - 1.0) / 2.0 * log1pgr + b * s - (a + b + 2) * log1pg + s;
    };
    const double denom = log_integrate_over_log_g(h);
    const double num = log_integrate_over_log_g([&](double s) { return h(s) + log_f(s); });
    return std::exp(num - denom);
}

}  // namespace oracle

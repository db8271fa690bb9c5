#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbs/csv.hpp"
#include "msbs/data_design.hpp"
#include "msbs/error.hpp"
#include "msbs/likelihood.hpp"
#include "msbs/priors.hpp"
#include "msbs/random.hpp"

namespace msbs {

struct ChainConfig {
    int iterations = 11000;  // total, burn-in included
    int burn_in = 1000;
    std::uint64_t seed = 1;
    int pilot_iterations = 200;

    void validate() const {
        if (burn_in < 0 || iterations <= burn_in)
            throw Error(ErrorKind::InvalidInput, "iterations must exceed burn_in >= 0");
        if (pilot_iterations < 1) throw Error(ErrorKind::InvalidInput, "pilot_iterations must be positive");
    }
};

/// K-excluded log marginal likelihood of latent states for one dataset.
/// Counts decompositions so callers can verify skipped evaluations.
class ModelEvaluator {
public:
    ModelEvaluator(const Dataset& data, const BasisLibrary& basis)
        : data_(data), basis_(basis), resp_(data.y) {}

    FitStats fit(const GammaState& gamma, const DeltaState& delta) {
        ++evaluations_;
        const auto cols = column_origins(gamma, delta);
        return r_squared(gather_columns(basis_, data_.z, cols), resp_);
    }

    double log_marginal(const GammaState& gamma, const DeltaState& delta) {
        return log_marginal_or_neg_inf(fit(gamma, delta), resp_.n());
    }

    std::size_t evaluations() const { return evaluations_; }
    const CenteredResponse& response() const { return resp_; }
    const Dataset& data() const { return data_; }
    const BasisLibrary& basis() const { return basis_; }
    int n() const { return resp_.n(); }

private:
    const Dataset& data_;
    const BasisLibrary& basis_;
    CenteredResponse resp_;
    std::size_t evaluations_ = 0;
};

// ---------------------------------------------------------------------------
// Block partitions

/// Contiguous run of knot indicators [first, first + size) of one predictor.
struct Block {
    int predictor;
    int first;
    int size;

    friend bool operator==(const Block&, const Block&) = default;
};

/// The linear indicator alone, then knots 1..L cut left to right into runs
/// of size drawn uniformly from {2, 3, 4}; the last run takes what is left.
inline void partition_predictor(int predictor, int knots, Rng& rng, std::vector<Block>& out) {
    out.push_back({predictor, 0, 1});
    int m = 1;
    while (m <= knots) {
        const int want = rng.uniform_int(2, 4);
        const int size = std::min(want, knots - m + 1);
        out.push_back({predictor, m, size});
        m += size;
    }
}

inline std::vector<Block> partition_blocks(std::span<const int> knot_counts, Rng& rng) {
    std::vector<Block> out;
    for (std::size_t j = 0; j < knot_counts.size(); ++j)
        partition_predictor(static_cast<int>(j), knot_counts[j], rng, out);
    return out;
}

/// One Metropolis step on a block of delta_j. The proposal is the block's
/// conditional prior given gamma_j = nonlinear, so the acceptance ratio is
/// the marginal likelihood ratio. `current` holds the log marginal of the
/// current state and is updated on acceptance. Returns true if accepted.
inline bool mh_block_update(ModelEvaluator& eval, const GammaState& gamma, DeltaState& delta, const Block& block,
                            double pj, double& current, Rng& rng) {
    std::array<int, 4> idx{};
    for (int b = 0; b < block.size; ++b) idx[static_cast<std::size_t>(b)] = block.first + b;
    auto& mask = delta[static_cast<std::size_t>(block.predictor)];
    KnotMask proposal = sample_block_from_conditional_prior(
        mask, std::span<const int>(idx.data(), static_cast<std::size_t>(block.size)), pj, rng);
    if (proposal == mask) return true;
    const double u = rng.uniform_open();
    std::swap(mask, proposal);
    const double lm = eval.log_marginal(gamma, delta);
    if (lm > neg_inf && std::log(u) < lm - current) {
        current = lm;
        return true;
    }
    std::swap(mask, proposal);
    return false;
}

namespace detail {

inline void check_delta_shape(const DeltaState& delta, std::span<const int> counts) {
    bool ok = delta.size() == counts.size();
    for (std::size_t j = 0; ok && j < counts.size(); ++j) ok = std::ssize(delta[j]) == counts[j] + 1;
    if (!ok) throw Error(ErrorKind::DimensionMismatch, "initial knot state does not match the basis");
}

inline double check_admissible_full_model(ModelEvaluator& eval, const GammaState& gamma, const DeltaState& delta) {
    const FitStats s = eval.fit(gamma, delta);
    if (!s.valid)
        throw Error(ErrorKind::InadmissibleFullModel,
                    "full model with minimal knots has J=" + std::to_string(s.dim) + " with n=" +
                        std::to_string(eval.n()) + " (needs J <= n-3 and full column rank)");
    return log_marginal(s, eval.n());
}

inline void sweep_blocks(ModelEvaluator& eval, const GammaState& gamma, DeltaState& delta, const KnotPriorConfig& prior,
                         double& current, Rng& rng, std::vector<Block>& scratch) {
    const auto counts = eval.basis().knot_counts();
    scratch.clear();
    for (std::size_t j = 0; j < gamma.x.size(); ++j)
        if (gamma.x[j] == Effect::nonlinear) partition_predictor(static_cast<int>(j), counts[j], rng, scratch);
    for (const Block& b : scratch)
        mh_block_update(eval, gamma, delta, b, prior.success[static_cast<std::size_t>(b.predictor)], current, rng);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pilot sampler: chain on delta under the full model

inline std::vector<DeltaState> run_pilot(const Dataset& data, const BasisLibrary& basis,
                                         const KnotPriorConfig& prior, const ChainConfig& config) {
    config.validate();
    ModelEvaluator eval(data, basis);
    Rng rng(config.seed);
    const GammaState gamma = full_model(data.p(), data.q());
    const auto counts = basis.knot_counts();
    DeltaState delta = minimal_delta(counts);
    double current = detail::check_admissible_full_model(eval, gamma, delta);

    std::vector<DeltaState> trace;
    trace.reserve(static_cast<std::size_t>(config.pilot_iterations));
    std::vector<Block> blocks;
    for (int t = 0; t < config.pilot_iterations; ++t) {
        detail::sweep_blocks(eval, gamma, delta, prior, current, rng, blocks);
        trace.push_back(delta);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Selection sampler: chain over (gamma, delta)

struct SelectionTrace {
    std::vector<GammaState> gamma;
    std::vector<DeltaState> delta;
    std::vector<double> log_marginal;

    std::size_t size() const { return gamma.size(); }
};

namespace detail {

inline double log_delta_weight(Effect level, const KnotMask& mask, double pj, const PseudoPriorEntry& pseudo) {
    return level == Effect::nonlinear ? log_prior_delta_given_nonlinear(mask, pj) : log_pseudo_prior(mask, pseudo);
}

}  // namespace detail

inline SelectionTrace run_model_selection(const Dataset& data, const BasisLibrary& basis, const PseudoPrior& pseudo,
                                          const KnotPriorConfig& prior, const ChainConfig& config,
                                          std::optional<DeltaState> initial_delta = std::nullopt) {
    config.validate();
    const auto counts = basis.knot_counts();
    if (std::ssize(pseudo.entries) != data.p())
        throw Error(ErrorKind::DimensionMismatch, "pseudo-prior has wrong number of predictors");
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (pseudo.entries[j].knots != counts[j])
            throw Error(ErrorKind::DimensionMismatch, "pseudo-prior knot count does not match basis");

    ModelEvaluator eval(data, basis);
    Rng rng(config.seed);
    DeltaState delta = initial_delta ? std::move(*initial_delta) : minimal_delta(counts);
    detail::check_delta_shape(delta, counts);

    // start at the full model, falling back to all-linear and then the null model
    GammaState gamma = full_model(data.p(), data.q());
    double current = eval.log_marginal(gamma, delta);
    if (current == neg_inf) {
        for (auto& e : gamma.x) e = Effect::linear;
        current = eval.log_marginal(gamma, delta);
    }
    if (current == neg_inf) {
        gamma = null_model(data.p(), data.q());
        current = eval.log_marginal(gamma, delta);
    }

    SelectionTrace trace;
    const auto kept = static_cast<std::size_t>(config.iterations - config.burn_in);
    trace.gamma.reserve(kept);
    trace.delta.reserve(kept);
    trace.log_marginal.reserve(kept);

    std::vector<Block> blocks;
    std::array<double, 3> logw{};
    std::array<double, 3> lm{};
    for (int t = 0; t < config.iterations; ++t) {
        // pseudo-prior redraw for predictors not currently nonlinear; these
        // do not enter the likelihood, so `current` is unchanged
        for (std::size_t j = 0; j < gamma.x.size(); ++j)
            if (gamma.x[j] != Effect::nonlinear) delta[j] = sample_pseudo_prior(pseudo.entries[j], rng);

        detail::sweep_blocks(eval, gamma, delta, prior, current, rng, blocks);

        for (std::size_t j = 0; j < gamma.x.size(); ++j) {
            const Effect was = gamma.x[j];
            for (int l = 0; l < 3; ++l) {
                const auto level = static_cast<Effect>(l);
                gamma.x[j] = level;
                lm[static_cast<std::size_t>(l)] = level == was ? current : eval.log_marginal(gamma, delta);
                logw[static_cast<std::size_t>(l)] =
                    lm[static_cast<std::size_t>(l)] == neg_inf
                        ? neg_inf
                        : lm[static_cast<std::size_t>(l)] + log_prior_gamma(gamma) +
                              detail::log_delta_weight(level, delta[j], prior.success[j], pseudo.entries[j]);
            }
            const auto pick = rng.categorical_log(logw);
            gamma.x[j] = static_cast<Effect>(pick);
            current = lm[pick];
        }

        for (std::size_t k = 0; k < gamma.z.size(); ++k) {
            const Effect was = gamma.z[k];
            for (int l = 0; l < 2; ++l) {
                const auto level = static_cast<Effect>(l);
                gamma.z[k] = level;
                lm[static_cast<std::size_t>(l)] = level == was ? current : eval.log_marginal(gamma, delta);
                logw[static_cast<std::size_t>(l)] = lm[static_cast<std::size_t>(l)] == neg_inf
                                                        ? neg_inf
                                                        : lm[static_cast<std::size_t>(l)] + log_prior_gamma(gamma);
            }
            const auto pick = rng.categorical_log(std::span<const double>(logw.data(), 2));
            gamma.z[k] = static_cast<Effect>(pick);
            current = lm[pick];
        }

        if (t >= config.burn_in) {
            trace.gamma.push_back(gamma);
            trace.delta.push_back(delta);
            trace.log_marginal.push_back(current);
        }
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Estimation sampler conditionals

/// g from its collapsed conditional: g* ~ Beta(J/2 + 1/4, (n-J-3)/2 + 3/4),
/// g = (1/g* - 1) / (1 - R^2).
inline double draw_g(int dim, int n, double r2, Rng& rng) {
    for (;;) {
        const double gs = rng.beta(dim / 2.0 + 0.25, (n - dim - 3.0) / 2.0 + 0.75);
        const double g = (1.0 / gs - 1.0) / (1.0 - r2);
        if (g > 0.0 && std::isfinite(g)) return g;
    }
}

/// sigma^2 ~ IG((n-1)/2, S [1 + g(1-R^2)] / (2(1+g))) with S the centered sum of squares.
inline double draw_sigma2(int n, double g, double r2, double centered_ss, Rng& rng) {
    const double shape = (n - 1.0) / 2.0;
    const double scale = centered_ss * (1.0 + g * (1.0 - r2)) / (2.0 * (1.0 + g));
    for (;;) {
        const double x = rng.gamma(shape);
        if (x > 0.0) return scale / x;
    }
}

struct Coefficients {
    double alpha = 0.0;
    VectorXd theta;
};

/// alpha ~ N(ybar, sigma^2/n) and theta ~ N(g/(1+g) theta_ols, g sigma^2/(1+g) (W'W)^-1).
inline Coefficients draw_coefficients(const MatrixXd& w, const CenteredResponse& resp, double g, double sigma2,
                                      Rng& rng) {
    Coefficients c;
    const int n = resp.n();
    c.alpha = resp.mean + std::sqrt(sigma2 / n) * rng.normal();
    const auto dim = w.cols();
    c.theta.resize(dim);
    if (dim == 0) return c;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
    qr.setThreshold(rank_tolerance);
    if (qr.rank() < dim) throw Error(ErrorKind::RankDeficient, "selected design is rank deficient");
    const VectorXd ols = qr.solve(resp.centered);
    VectorXd std_normal(dim);
    for (Eigen::Index i = 0; i < dim; ++i) std_normal(i) = rng.normal();
    // W P = Q R  =>  (W'W)^-1 = P R^-1 R^-T P'
    const auto r = qr.matrixR().topLeftCorner(dim, dim).template triangularView<Eigen::Upper>();
    const VectorXd noise = qr.colsPermutation() * r.solve(std_normal);
    const double shrink = g / (1.0 + g);
    c.theta = shrink * ols + std::sqrt(shrink * sigma2) * noise;
    return c;
}

struct EstimationDraw {
    double alpha = 0.0;
    double sigma2 = 0.0;
    double g = 0.0;
    VectorXd theta;
    std::vector<ColumnOrigin> columns;
    DeltaState delta;
};

struct EstimationTrace {
    GammaState gamma;
    std::vector<EstimationDraw> draws;

    std::size_t size() const { return draws.size(); }
};

/// Estimation sampler: partially collapsed Gibbs for a fixed model. The step order
/// (delta, g, sigma^2, coefficients) is part of the kernel and must not change.
inline EstimationTrace run_estimation(const Dataset& data, const BasisLibrary& basis, const GammaState& gamma_hat,
                                      const KnotPriorConfig& prior, const ChainConfig& config,
                                      std::optional<DeltaState> initial_delta = std::nullopt) {
    config.validate();
    check_gamma(gamma_hat, data.p(), data.q());
    const auto counts = basis.knot_counts();
    ModelEvaluator eval(data, basis);
    Rng rng(config.seed);

    DeltaState delta = initial_delta ? std::move(*initial_delta) : minimal_delta(counts);
    detail::check_delta_shape(delta, counts);
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (gamma_hat.x[j] == Effect::nonlinear && knot_count(delta[j]) == 0)
            delta[j][static_cast<std::size_t>((counts[j] + 1) / 2)] = 1;
    double current = eval.log_marginal(gamma_hat, delta);
    if (current == neg_inf && initial_delta) {
        delta = minimal_delta(counts);
        current = eval.log_marginal(gamma_hat, delta);
    }
    if (current == neg_inf)
        throw Error(ErrorKind::InvalidModel, "selected model is inadmissible (J=" +
                                                 std::to_string(model_dimension(gamma_hat, delta)) +
                                                 ", n=" + std::to_string(data.n()) + ")");

    const auto& resp = eval.response();
    EstimationTrace trace;
    trace.gamma = gamma_hat;
    trace.draws.reserve(static_cast<std::size_t>(config.iterations - config.burn_in));
    std::vector<Block> blocks;
    for (int t = 0; t < config.iterations; ++t) {
        detail::sweep_blocks(eval, gamma_hat, delta, prior, current, rng, blocks);

        EstimationDraw d;
        d.columns = column_origins(gamma_hat, delta);
        const MatrixXd w = gather_columns(basis, data.z, d.columns);
        const FitStats stats = r_squared(w, resp);
        d.g = draw_g(stats.dim, resp.n(), stats.r_squared, rng);
        d.sigma2 = draw_sigma2(resp.n(), d.g, stats.r_squared, resp.total_ss, rng);
        auto coef = draw_coefficients(w, resp, d.g, d.sigma2, rng);
        d.alpha = coef.alpha;
        d.theta = std::move(coef.theta);
        if (t >= config.burn_in) {
            d.delta = delta;
            trace.draws.push_back(std::move(d));
        }
    }
    return trace;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_selection_trace(std::ostream& out, const SelectionTrace& trace, int p, int q) {
    for (int j = 0; j < p; ++j) out << "gx_" << j + 1 << ',';
    for (int k = 0; k < q; ++k) out << "gz_" << k + 1 << ',';
    out << "log_marginal\n";
    for (std::size_t t = 0; t < trace.size(); ++t) {
        for (Effect e : trace.gamma[t].x) out << to_int(e) << ',';
        for (Effect e : trace.gamma[t].z) out << to_int(e) << ',';
        out << format_double(trace.log_marginal[t]) << '\n';
    }
}

/// Names of every coefficient slot the selected model can use.
inline std::vector<ColumnOrigin> coefficient_slots(const GammaState& gamma, std::span<const int> knot_counts) {
    std::vector<ColumnOrigin> slots;
    for (std::size_t j = 0; j < gamma.x.size(); ++j) {
        const int last = gamma.x[j] == Effect::nonlinear ? knot_counts[j] : (gamma.x[j] == Effect::linear ? 0 : -1);
        for (int m = 0; m <= last; ++m) slots.push_back({ColumnOrigin::Block::x, static_cast<int>(j), m});
    }
    for (std::size_t k = 0; k < gamma.z.size(); ++k)
        if (gamma.z[k] == Effect::linear) slots.push_back({ColumnOrigin::Block::z, static_cast<int>(k), 0});
    return slots;
}

inline std::string slot_name(const ColumnOrigin& o, const Dataset& data) {
    if (o.block == ColumnOrigin::Block::z) return "z_" + data.z_names[static_cast<std::size_t>(o.predictor)];
    return "x_" + data.x_names[static_cast<std::size_t>(o.predictor)] + "_b" + std::to_string(o.basis_index);
}

/// One row per kept iteration: alpha, sigma2, g, then one column per
/// coefficient slot (zero when the slot is not selected in that iteration).
inline void write_estimation_trace(std::ostream& out, const EstimationTrace& trace, const Dataset& data,
                                   const BasisLibrary& basis) {
    const auto counts = basis.knot_counts();
    const auto slots = coefficient_slots(trace.gamma, counts);
    out << "alpha,sigma2,g";
    for (const auto& s : slots) out << ',' << slot_name(s, data);
    out << '\n';
    for (const auto& d : trace.draws) {
        out << format_double(d.alpha) << ',' << format_double(d.sigma2) << ',' << format_double(d.g);
        std::size_t c = 0;
        for (const auto& s : slots) {
            double v = 0.0;
            if (c < d.columns.size() && d.columns[c] == s) v = d.theta(static_cast<Eigen::Index>(c++));
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

}  // namespace msbs

#pragma once

#include <array>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <mutex>
#include <thread>
#include <exception>
#include <vector>

#include <Eigen/Dense>

#include "msbs/csv.hpp"
#include "msbs/data_design.hpp"
#include "msbs/error.hpp"
#include "msbs/inference.hpp"
#include "msbs/priors.hpp"
#include "msbs/random.hpp"
#include "msbs/samplers.hpp"

namespace msbs {

/// Synthetic additive partial linear design with a fixed truth: three
/// nonlinear, three linear and the rest null X effects; three nonzero Z
/// coefficients (0.25, 0.5, 0.75); intercept 1.
struct SimDesign {
    int p = 10;
    int q = 10;
    int n = 500;
    double rho = 0.5;
    double sigma2 = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (p < 6 || q < 3) throw Error(ErrorKind::InvalidInput, "simulation design needs p >= 6 and q >= 3");
        if (n < 10) throw Error(ErrorKind::InvalidInput, "simulation design needs n >= 10");
        if (!(sigma2 > 0.0)) throw Error(ErrorKind::InvalidInput, "noise variance must be positive");
        const int dim = std::max(p, q);
        if (!(rho < 1.0) || !(rho > -1.0 / (dim - 1)))
            throw Error(ErrorKind::InvalidCorrelation, "equicorrelation rho=" + format_double(rho) +
                                                           " is not positive definite for dimension " +
                                                           std::to_string(dim));
    }
};

inline double true_function(double x, int index) {
    switch (index) {
        case 1: return 4.0 * x * x;
        case 2: return std::sin(2.0 * std::numbers::pi * x);
        case 3: return 3.0 * std::exp(-200.0 * (x - 0.2) * (x - 0.2)) + 0.5 * std::exp(-50.0 * (x - 0.6) * (x - 0.6));
        case 4: return x;
        case 5: return 1.5 * x;
        case 6: return 2.0 * x;
        default: return 0.0;
    }
}

inline GammaState true_gamma(int p, int q) {
    GammaState g = null_model(p, q);
    for (int j = 0; j < std::min(p, 6); ++j) g.x[static_cast<std::size_t>(j)] = j < 3 ? Effect::nonlinear : Effect::linear;
    for (int k = 0; k < std::min(q, 3); ++k) g.z[static_cast<std::size_t>(k)] = Effect::linear;
    return g;
}

inline double true_beta(int k) { return k < 3 ? 0.25 * (k + 1) : 0.0; }

struct SimulatedData {
    Dataset data;
    GammaState truth;
};

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Rows of an n x dim matrix of equicorrelated standard normals.
inline MatrixXd equicorrelated_normals(int n, int dim, double rho, Rng& rng) {
    MatrixXd corr = MatrixXd::Constant(dim, dim, rho);
    corr.diagonal().setOnes();
    Eigen::LLT<MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::InvalidCorrelation, "equicorrelation matrix is not positive definite");
    MatrixXd e(n, dim);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < dim; ++c) e(i, c) = rng.normal();
    return e * llt.matrixL().transpose();
}

inline SimulatedData generate_dataset(const SimDesign& design) {
    design.validate();
    Rng rng(design.seed);
    const MatrixXd latent = equicorrelated_normals(design.n, design.p, design.rho, rng);
    MatrixXd x(design.n, design.p);
    for (int i = 0; i < design.n; ++i)
        for (int j = 0; j < design.p; ++j)
            x(i, j) = std::clamp(standard_normal_cdf(latent(i, j)), std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
    const MatrixXd z = equicorrelated_normals(design.n, design.q, design.rho, rng);

    VectorXd y(design.n);
    const double sd = std::sqrt(design.sigma2);
    for (int i = 0; i < design.n; ++i) {
        double v = 1.0;
        for (int j = 0; j < design.p; ++j) v += true_function(x(i, j), j + 1);
        for (int k = 0; k < design.q; ++k) v += true_beta(k) * z(i, k);
        y(i) = v + sd * rng.normal();
    }
    return {make_dataset(std::move(y), std::move(x), z), true_gamma(design.p, design.q)};
}

// ---------------------------------------------------------------------------
// Misclassification rates

struct MetricsReport {
    std::array<std::optional<double>, 3> mr_x;  // MR_0^x, MR_1^x, MR_2^x
    std::array<std::optional<double>, 2> mr_z;  // MR_0^z, MR_1^z
    std::optional<double> mr_x_all;
    std::optional<double> mr_z_all;
    double mr_total = 0.0;
    std::optional<double> mess;
    std::optional<int> mess_dims;
    std::optional<double> runtime_seconds;
};

inline MetricsReport misclassification(const GammaState& estimate, const GammaState& truth) {
    if (estimate.x.size() != truth.x.size() || estimate.z.size() != truth.z.size())
        throw Error(ErrorKind::DimensionMismatch, "estimate and truth have different dimensions");
    MetricsReport r;
    std::array<int, 3> wrong_x{}, total_x{};
    std::array<int, 2> wrong_z{}, total_z{};
    int miss_x = 0, miss_z = 0;
    for (std::size_t j = 0; j < truth.x.size(); ++j) {
        const auto l = static_cast<std::size_t>(to_int(truth.x[j]));
        ++total_x[l];
        if (estimate.x[j] != truth.x[j]) {
            ++wrong_x[l];
            ++miss_x;
        }
    }
    for (std::size_t k = 0; k < truth.z.size(); ++k) {
        const auto l = static_cast<std::size_t>(to_int(truth.z[k]));
        ++total_z[l];
        if (estimate.z[k] != truth.z[k]) {
            ++wrong_z[l];
            ++miss_z;
        }
    }
    for (std::size_t l = 0; l < 3; ++l)
        if (total_x[l] > 0) r.mr_x[l] = static_cast<double>(wrong_x[l]) / total_x[l];
    for (std::size_t l = 0; l < 2; ++l)
        if (total_z[l] > 0) r.mr_z[l] = static_cast<double>(wrong_z[l]) / total_z[l];
    const auto p = static_cast<double>(truth.x.size());
    const auto q = static_cast<double>(truth.z.size());
    if (p > 0) r.mr_x_all = miss_x / p;
    if (q > 0) r.mr_z_all = miss_z / q;
    r.mr_total = (miss_x + miss_z) / (p + q);
    return r;
}

// ---------------------------------------------------------------------------
// Multivariate effective sample size

struct MessResult {
    double value = 0.0;
    int dims = 0;  // coordinates retained after dropping degenerate ones
};

/// mESS = T (det Lambda / det Sigma)^(1/d) with Lambda the sample covariance
/// and Sigma the non-overlapping batch-means estimate, batch size floor(sqrt(T)).
inline MessResult multivariate_ess(const MatrixXd& chain) {
    const auto T = chain.rows();
    if (T < 100) throw Error(ErrorKind::InvalidInput, "mESS needs at least 100 iterations");
    const VectorXd mean = chain.colwise().mean().transpose();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < chain.cols(); ++c) {
        const double var = (chain.col(c).array() - mean(c)).square().sum() / static_cast<double>(T - 1);
        if (var >= 1e-12) keep.push_back(c);
    }
    if (keep.empty()) throw Error(ErrorKind::AllCoordinatesDegenerate, "every coordinate of the chain is constant");
    const auto d = static_cast<Eigen::Index>(keep.size());
    MatrixXd centered(T, d);
    for (Eigen::Index c = 0; c < d; ++c) centered.col(c) = chain.col(keep[static_cast<std::size_t>(c)]).array() - mean(keep[static_cast<std::size_t>(c)]);

    const MatrixXd lambda = centered.transpose() * centered / static_cast<double>(T - 1);
    const auto b = static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(T))));
    const Eigen::Index a = T / b;
    MatrixXd batch(a, d);
    for (Eigen::Index k = 0; k < a; ++k) batch.row(k) = centered.middleRows(k * b, b).colwise().mean();
    const MatrixXd sigma = static_cast<double>(b) * batch.transpose() * batch / static_cast<double>(a - 1);

    auto logdet = [](const MatrixXd& m) {
        Eigen::PartialPivLU<MatrixXd> lu(m);
        return lu.matrixLU().diagonal().array().abs().log().sum();
    };
    const double ld = (logdet(lambda) - logdet(sigma)) / static_cast<double>(d);
    return {static_cast<double>(T) * std::exp(ld), static_cast<int>(d)};
}

/// Indicator chain as a numeric matrix (gx as 0/1/2, gz as 0/1).
inline MatrixXd gamma_chain_matrix(const SelectionTrace& trace) {
    if (trace.size() == 0) return {};
    const auto p = static_cast<Eigen::Index>(trace.gamma.front().x.size());
    const auto q = static_cast<Eigen::Index>(trace.gamma.front().z.size());
    MatrixXd m(static_cast<Eigen::Index>(trace.size()), p + q);
    for (std::size_t t = 0; t < trace.size(); ++t) {
        for (Eigen::Index j = 0; j < p; ++j) m(static_cast<Eigen::Index>(t), j) = to_int(trace.gamma[t].x[static_cast<std::size_t>(j)]);
        for (Eigen::Index k = 0; k < q; ++k) m(static_cast<Eigen::Index>(t), p + k) = to_int(trace.gamma[t].z[static_cast<std::size_t>(k)]);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Pipeline and benchmark

struct PipelineConfig {
    int knots = 20;
    KnotStrategy strategy = KnotStrategy::quantile;
    double pj = 0.4;
    ChainConfig chain;
};

struct PipelineResult {
    PseudoPrior pseudo;
    SelectionTrace trace;
    SelectionResult selection;
    double selection_seconds = 0.0;
};

/// Stage seeds derived from one master seed.
inline std::uint64_t pilot_seed(std::uint64_t s) { return derive_seed(s, 0); }
inline std::uint64_t selection_seed(std::uint64_t s) { return derive_seed(s, 1); }
inline std::uint64_t estimation_seed(std::uint64_t s) { return derive_seed(s, 2); }

/// Pilot chain, pseudo-prior fit, selection chain, decision.
inline PipelineResult run_selection_pipeline(const Dataset& data, const BasisLibrary& basis,
                                             const PipelineConfig& cfg) {
    const auto prior = KnotPriorConfig::uniform(data.p(), cfg.pj);
    ChainConfig pilot_cfg = cfg.chain;
    pilot_cfg.seed = pilot_seed(cfg.chain.seed);
    const auto pilot = run_pilot(data, basis, prior, pilot_cfg);
    PipelineResult r;
    const auto counts = basis.knot_counts();
    r.pseudo = fit_pseudo_prior(pilot, counts);

    ChainConfig sel_cfg = cfg.chain;
    sel_cfg.seed = selection_seed(cfg.chain.seed);
    const auto start = std::chrono::steady_clock::now();
    r.trace = run_model_selection(data, basis, r.pseudo, prior, sel_cfg, pilot.back());
    r.selection_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.selection = select_model(r.trace);
    return r;
}

struct BenchmarkConfig {
    int replications = 20;
    int jobs = 1;
    PipelineConfig pipeline;
};

struct BenchmarkRow {
    int replication = 0;
    std::uint64_t seed = 0;
    MetricsReport metrics;
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    MetricsReport aggregate;
    std::optional<double> mess_per_second;
};

/// Average of each rate over the reports that define it.
inline MetricsReport aggregate_reports(std::span<const MetricsReport> reports) {
    MetricsReport agg;
    auto average = [&](auto get) -> std::optional<double> {
        double s = 0.0;
        int c = 0;
        for (const auto& r : reports)
            if (auto v = get(r)) {
                s += *v;
                ++c;
            }
        return c > 0 ? std::optional<double>(s / c) : std::nullopt;
    };
    for (std::size_t l = 0; l < 3; ++l) agg.mr_x[l] = average([l](const MetricsReport& r) { return r.mr_x[l]; });
    for (std::size_t l = 0; l < 2; ++l) agg.mr_z[l] = average([l](const MetricsReport& r) { return r.mr_z[l]; });
    agg.mr_x_all = average([](const MetricsReport& r) { return r.mr_x_all; });
    agg.mr_z_all = average([](const MetricsReport& r) { return r.mr_z_all; });
    agg.mr_total = average([](const MetricsReport& r) { return std::optional<double>(r.mr_total); }).value_or(0.0);
    agg.mess = average([](const MetricsReport& r) { return r.mess; });
    agg.runtime_seconds = average([](const MetricsReport& r) { return r.runtime_seconds; });
    return agg;
}

inline BenchmarkRow benchmark_replication(const SimDesign& design, const BenchmarkConfig& cfg, int r) {
    SimDesign d = design;
    d.seed = derive_seed(design.seed, static_cast<std::uint64_t>(r));
    const auto sim = generate_dataset(d);
    const auto basis = build_basis_library(sim.data, cfg.pipeline.knots, cfg.pipeline.strategy);
    PipelineConfig pc = cfg.pipeline;
    pc.chain.seed = derive_seed(d.seed, 99);
    const auto res = run_selection_pipeline(sim.data, basis, pc);

    BenchmarkRow row;
    row.replication = r;
    row.seed = d.seed;
    row.metrics = misclassification(res.selection.gamma_hat, sim.truth);
    row.metrics.runtime_seconds = res.selection_seconds;
    try {
        const auto m = multivariate_ess(gamma_chain_matrix(res.trace));
        row.metrics.mess = m.value;
        row.metrics.mess_dims = m.dims;
    } catch (const Error&) {
        // chain too short or frozen: mESS not reported
    }
    return row;
}

/// Full pilot -> select -> decide pipeline per replication, fanned out over
/// `jobs` worker threads. Rows come back in replication order.
inline BenchmarkResult benchmark_run(const SimDesign& design, const BenchmarkConfig& cfg) {
    design.validate();
    cfg.pipeline.chain.validate();
    if (cfg.replications < 1) throw Error(ErrorKind::InvalidInput, "replications must be positive");
    BenchmarkResult out;
    out.rows.resize(static_cast<std::size_t>(cfg.replications));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int r = next++; r < cfg.replications; r = next++) {
            try {
                out.rows[static_cast<std::size_t>(r)] = benchmark_replication(design, cfg, r);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int jobs = std::max(1, std::min(cfg.jobs, cfg.replications));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<MetricsReport> reports;
    for (const auto& row : out.rows) reports.push_back(row.metrics);
    out.aggregate = aggregate_reports(reports);
    double rate = 0.0;
    int c = 0;
    for (const auto& row : out.rows)
        if (row.metrics.mess && row.metrics.runtime_seconds && *row.metrics.runtime_seconds > 0.0) {
            rate += *row.metrics.mess / *row.metrics.runtime_seconds;
            ++c;
        }
    if (c > 0) out.mess_per_second = rate / c;
    return out;
}

inline void write_benchmark(std::ostream& out, const BenchmarkResult& res) {
    auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string("NA"); };
    out << "replication,seed,MR_2^x,MR_1^x,MR_0^x,MR^x,MR_1^z,MR_0^z,MR^z,MR_T,mESS,mESS_dims,runtime_s,mESS_per_s\n";
    auto row = [&](const std::string& label, const std::string& seed, const MetricsReport& m,
                   const std::optional<double>& per_second) {
        out << label << ',' << seed << ',' << opt(m.mr_x[2]) << ',' << opt(m.mr_x[1]) << ',' << opt(m.mr_x[0]) << ','
            << opt(m.mr_x_all) << ',' << opt(m.mr_z[1]) << ',' << opt(m.mr_z[0]) << ',' << opt(m.mr_z_all) << ','
            << fixed(m.mr_total, 6) << ',' << opt(m.mess) << ','
            << (m.mess_dims ? std::to_string(*m.mess_dims) : std::string("NA")) << ',' << opt(m.runtime_seconds)
            << ',' << opt(per_second) << '\n';
    };
    for (const auto& r : res.rows) {
        std::optional<double> ps;
        if (r.metrics.mess && r.metrics.runtime_seconds && *r.metrics.runtime_seconds > 0.0)
            ps = *r.metrics.mess / *r.metrics.runtime_seconds;
        row(std::to_string(r.replication), std::to_string(r.seed), r.metrics, ps);
    }
    row("mean", "-", res.aggregate, res.mess_per_second);
}

}  // namespace msbs

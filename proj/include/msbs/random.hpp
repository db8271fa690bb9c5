#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace msbs {

/// Random stream owned by a single chain. All draws go through this type so
/// that a fixed seed reproduces a chain bit for bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return unif_(engine_); }

    /// Uniform on the open interval (0, 1).
    double uniform_open() {
        double u = 0.0;
        do {
            u = unif_(engine_);
        } while (u <= 0.0);
        return u;
    }

    double normal() { return norm_(engine_); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer on [lo, hi].
    int uniform_int(int lo, int hi) {
        std::uniform_int_distribution<int> d(lo, hi);
        return d(engine_);
    }

    double gamma(double shape) {
        std::gamma_distribution<double> d(shape, 1.0);
        return d(engine_);
    }

    double beta(double a, double b) {
        for (;;) {
            const double x = gamma(a);
            const double y = gamma(b);
            const double s = x + y;
            if (s > 0.0) {
                const double v = x / s;
                if (v > 0.0 && v < 1.0) return v;
            }
        }
    }

    /// Draw an index with probability proportional to exp(log_weights[i]).
    /// Entries equal to -inf carry zero mass.
    std::size_t categorical_log(std::span<const double> log_weights) {
        const double top = *std::max_element(log_weights.begin(), log_weights.end());
        double total = 0.0;
        for (double lw : log_weights) total += std::exp(lw - top);
        double u = uniform() * total;
        std::size_t last = 0;
        for (std::size_t i = 0; i < log_weights.size(); ++i) {
            const double w = std::exp(log_weights[i] - top);
            if (w <= 0.0) continue;
            last = i;
            if (u < w) return i;
            u -= w;
        }
        return last;
    }

    /// Uniformly random subset of {1..n} of size k, returned sorted.
    std::vector<int> subset(int n, int k) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 1);
        for (int i = 0; i < k; ++i) {
            const int j = uniform_int(i, n - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        std::sort(idx.begin(), idx.end());
        return idx;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

/// Deterministic seed derivation for replication `index` of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace msbs

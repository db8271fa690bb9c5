#pragma once

#include <cmath>
#include <numbers>

#include "msbs/msbs.hpp"

namespace fixture {

using namespace msbs;

/// One smooth X effect, optional linear Z effects, unit noise.
inline Dataset toy_dataset(int n, int p, int q, std::uint64_t seed, double signal = 1.0) {
    Rng rng(seed);
    VectorXd y(n);
    MatrixXd x(n, p), z(n, q);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) x(i, j) = rng.uniform();
        for (int k = 0; k < q; ++k) z(i, k) = rng.normal();
        double v = signal * std::sin(2.0 * std::numbers::pi * x(i, 0));
        for (int k = 0; k < q; ++k) v += 0.5 * z(i, k) / (k + 1);
        y(i) = v + rng.normal();
    }
    return make_dataset(y, x, z);
}

/// Basis library with the given knot grid for a single predictor.
inline BasisLibrary single_basis(const Dataset& data, std::vector<double> knots) {
    BasisLibrary lib;
    const VectorXd col = data.x.col(0);
    lib.blocks.emplace_back(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                            KnotGrid{std::move(knots), 0});
    lib.dropped_knots.push_back(0);
    return lib;
}

inline ChainConfig chain(int iterations, int burn_in, std::uint64_t seed, int pilot = 200) {
    ChainConfig c;
    c.iterations = iterations;
    c.burn_in = burn_in;
    c.seed = seed;
    c.pilot_iterations = pilot;
    return c;
}

}  // namespace fixture

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "msbs/csv.hpp"
#include "msbs/data_design.hpp"
#include "msbs/random.hpp"

using namespace msbs;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
    return v;
}

Dataset small_dataset(int n, int p, int q, std::uint64_t seed) {
    Rng rng(seed);
    VectorXd y(n);
    MatrixXd x(n, p), z(n, q);
    for (int i = 0; i < n; ++i) {
        y(i) = rng.normal();
        for (int j = 0; j < p; ++j) x(i, j) = rng.uniform();
        for (int k = 0; k < q; ++k) z(i, k) = 3.0 + rng.normal();
    }
    return make_dataset(y, x, z);
}

KnotMask mask(std::initializer_list<int> v) {
    KnotMask m;
    for (int b : v) m.push_back(static_cast<std::uint8_t>(b));
    return m;
}

}  // namespace

TEST(KnotGrid, EquispacedFiveRegularPoints) {
    const std::vector<double> x{0, .25, .5, .75, 1};
    const auto g = build_knot_grid(x, 3, KnotStrategy::equispaced);
    ASSERT_EQ(g.size(), 3);
    EXPECT_DOUBLE_EQ(g.knots[0], 0.25);
    EXPECT_DOUBLE_EQ(g.knots[1], 0.5);
    EXPECT_DOUBLE_EQ(g.knots[2], 0.75);
}

TEST(KnotGrid, ConstantColumnIsDegenerate) {
    const std::vector<double> x(20, 1.5);
    try {
        build_knot_grid(x, 3, KnotStrategy::quantile);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateRange);
    }
}

TEST(KnotGrid, TooFewDistinctValues) {
    const std::vector<double> x{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
    try {
        build_knot_grid(x, 4, KnotStrategy::quantile);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TooFewDistinctValues);
    }
    EXPECT_NO_THROW(build_knot_grid(x, 3, KnotStrategy::quantile));
}

TEST(KnotGrid, RejectsFewerThanTwoKnots) {
    const auto x = linspace(0, 1, 30);
    EXPECT_THROW(build_knot_grid(x, 1, KnotStrategy::quantile), Error);
}

TEST(KnotGrid, QuantilesOnRegularGridMatchOrderStatistics) {
    const auto x = linspace(0, 1, 101);
    const auto g = build_knot_grid(x, 20, KnotStrategy::quantile);
    ASSERT_EQ(g.size(), 20);
    EXPECT_EQ(g.dropped, 0);
    for (int m = 0; m < 20; ++m) {
        // type-7 quantile of k/100 at level (m+1)/21 is (m+1)/21 itself
        EXPECT_NEAR(g.knots[static_cast<std::size_t>(m)], (m + 1) / 21.0, 1e-14);
        EXPECT_GT(g.knots[static_cast<std::size_t>(m)], 0.0);
        EXPECT_LT(g.knots[static_cast<std::size_t>(m)], 1.0);
        if (m > 0) EXPECT_GT(g.knots[static_cast<std::size_t>(m)], g.knots[static_cast<std::size_t>(m - 1)]);
    }
}

TEST(KnotGrid, TiedQuantilesCollapse) {
    std::vector<double> x(40, 0.0);
    for (int i = 0; i < 20; ++i) x[static_cast<std::size_t>(20 + i)] = 1.0 + i;
    const auto g = build_knot_grid(x, 5, KnotStrategy::quantile);
    EXPECT_EQ(g.size(), 3);
    EXPECT_EQ(g.dropped, 2);
    EXPECT_DOUBLE_EQ(g.knots[0], 0.5);
    EXPECT_DOUBLE_EQ(g.knots[1], 7.0);
    EXPECT_DOUBLE_EQ(g.knots[2], 13.5);
    for (std::size_t m = 1; m < g.knots.size(); ++m) EXPECT_GT(g.knots[m], g.knots[m - 1]);
}

TEST(KnotGrid, PermutationInvariant) {
    Rng rng(11);
    std::vector<double> x;
    for (int i = 0; i < 57; ++i) x.push_back(rng.normal());
    for (auto strategy : {KnotStrategy::quantile, KnotStrategy::equispaced}) {
        const auto a = build_knot_grid(x, 7, strategy);
        auto shuffled = x;
        std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
        const auto b = build_knot_grid(shuffled, 7, strategy);
        EXPECT_EQ(a.knots, b.knots);
    }
}

TEST(SplineBasis, HandEvaluatedCubicColumn) {
    const std::vector<double> x{1, 2, 3};
    SplineBasis b(x, KnotGrid{{2.0}, 0});
    ASSERT_EQ(b.size(), 2);
    EXPECT_DOUBLE_EQ(b.raw_value(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(b.raw_value(2, 1), 0.0);
    EXPECT_DOUBLE_EQ(b.raw_value(3, 1), 1.0);
    EXPECT_NEAR(b.means()(1), 2.0 / 3.0, 1e-15);
    const double s = b.scales()(1);
    EXPECT_NEAR(s, std::sqrt(6.0) / 3.0, 1e-15);
    EXPECT_NEAR(b.columns()(0, 1) * s, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(b.columns()(1, 1) * s, -2.0 / 3.0, 1e-15);
    EXPECT_NEAR(b.columns()(2, 1) * s, 1.0 / 3.0, 1e-15);
    // centered linear term
    EXPECT_NEAR(b.columns()(0, 0) * b.scales()(0), -1.0, 1e-15);
}

TEST(SplineBasis, ColumnsCenteredUnitNormAndReproducible) {
    Rng rng(3);
    std::vector<double> x;
    for (int i = 0; i < 80; ++i) x.push_back(rng.gamma(2.0));
    SplineBasis b(x, build_knot_grid(x, 10, KnotStrategy::quantile));
    const MatrixXd& w = b.columns();
    for (Eigen::Index m = 0; m < w.cols(); ++m) {
        EXPECT_LE(std::fabs(w.col(m).sum()), 1e-10 * w.col(m).norm());
        EXPECT_NEAR(w.col(m).norm(), 1.0, 1e-12);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            EXPECT_EQ(b.value(x[static_cast<std::size_t>(i)], static_cast<int>(m)), w(i, m));
    }
}

TEST(SplineBasis, NewPointUsesTrainingCentering) {
    const auto x = linspace(0, 2, 25);
    SplineBasis b(x, build_knot_grid(x, 4, KnotStrategy::equispaced));
    const double u = 0.77;
    for (int m = 0; m < b.size(); ++m)
        EXPECT_NEAR(b.value(u, m), (b.raw_value(u, m) - b.means()(m)) / b.scales()(m), 1e-15);
}

TEST(InclusionVector, LinearIgnoresKnots) {
    EXPECT_EQ(inclusion_vector(Effect::linear, mask({0, 1, 0, 1})), mask({1, 0, 0, 0}));
}

TEST(InclusionVector, NoneIsEmpty) {
    EXPECT_EQ(inclusion_vector(Effect::none, mask({1, 1, 0, 1})), mask({0, 0, 0, 0}));
    EXPECT_EQ(inclusion_vector(Effect::none, mask({0, 0, 0, 0})), mask({0, 0, 0, 0}));
}

TEST(InclusionVector, NonlinearCopiesMask) {
    EXPECT_EQ(inclusion_vector(Effect::nonlinear, mask({1, 0, 1, 1})), mask({1, 0, 1, 1}));
    EXPECT_EQ(inclusion_vector(Effect::nonlinear, mask({0, 0, 1, 0})), mask({0, 0, 1, 0}));
}

TEST(InclusionVector, NonlinearWithoutKnotsIsError) {
    try {
        inclusion_vector(Effect::nonlinear, mask({1, 0, 0, 0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IdentifiabilityViolation);
    }
}

TEST(InclusionVector, IndependentOfKnotsBelowNonlinear) {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        KnotMask a(6), b(6);
        for (auto& v : a) v = rng.bernoulli(0.5);
        for (auto& v : b) v = rng.bernoulli(0.5);
        EXPECT_EQ(inclusion_vector(Effect::none, a), inclusion_vector(Effect::none, b));
        EXPECT_EQ(inclusion_vector(Effect::linear, a), inclusion_vector(Effect::linear, b));
    }
}

TEST(ModelDimension, WorkedExample) {
    GammaState g{{Effect::linear, Effect::nonlinear}, {Effect::linear, Effect::none}};
    DeltaState d{mask({0, 1, 0, 1}), mask({1, 1, 1, 0})};
    EXPECT_EQ(model_dimension(g, d), 5);
    EXPECT_EQ(model_dimension(null_model(2, 2), d), 0);
}

TEST(AssembleDesign, WorkedExampleAndNullModel) {
    const auto data = small_dataset(30, 2, 2, 1);
    const auto basis = build_basis_library(data, 3);
    GammaState g{{Effect::linear, Effect::nonlinear}, {Effect::linear, Effect::none}};
    DeltaState d{mask({0, 1, 0, 1}), mask({1, 0, 1, 1})};
    const auto design = assemble_design(basis, data.z, g, d);
    ASSERT_EQ(design.w.cols(), 5);
    EXPECT_EQ(design.columns.front(), (ColumnOrigin{ColumnOrigin::Block::x, 0, 0}));
    EXPECT_EQ(design.columns.back(), (ColumnOrigin{ColumnOrigin::Block::z, 0, 0}));
    EXPECT_TRUE(design.w.col(4).isApprox(data.z.col(0)));
    EXPECT_TRUE(design.w.col(2).isApprox(basis.blocks[1].columns().col(2)));

    const auto empty = assemble_design(basis, data.z, null_model(2, 2), d);
    EXPECT_EQ(empty.w.cols(), 0);
    EXPECT_EQ(empty.w.rows(), 30);
}

TEST(AssembleDesign, FullModelAllKnots) {
    const auto data = small_dataset(40, 3, 2, 2);
    const auto basis = build_basis_library(data, 5);
    DeltaState d;
    for (int L : basis.knot_counts()) d.emplace_back(static_cast<std::size_t>(L + 1), 1);
    const auto design = assemble_design(basis, data.z, full_model(3, 2), d);
    EXPECT_EQ(design.w.cols(), 3 * 6 + 2);
}

TEST(AssembleDesign, ColumnsMatchDimensionForRandomStates) {
    const auto data = small_dataset(35, 3, 3, 4);
    const auto basis = build_basis_library(data, 4);
    Rng rng(8);
    for (int rep = 0; rep < 300; ++rep) {
        GammaState g = null_model(3, 3);
        DeltaState d;
        for (int j = 0; j < 3; ++j) {
            g.x[static_cast<std::size_t>(j)] = static_cast<Effect>(rng.uniform_int(0, 2));
            KnotMask m(5);
            for (auto& v : m) v = rng.bernoulli(0.5);
            m[static_cast<std::size_t>(rng.uniform_int(1, 4))] = 1;
            d.push_back(m);
        }
        for (auto& e : g.z) e = rng.bernoulli(0.5) ? Effect::linear : Effect::none;
        const auto design = assemble_design(basis, data.z, g, d);
        EXPECT_EQ(design.w.cols(), model_dimension(g, d));
        for (Eigen::Index c = 0; c < design.w.cols(); ++c) EXPECT_NEAR(design.w.col(c).mean(), 0.0, 1e-12);
    }
}

TEST(Dataset, CentersZAndKeepsMeans) {
    const auto data = small_dataset(50, 1, 3, 6);
    for (int k = 0; k < 3; ++k) {
        EXPECT_LE(std::fabs(data.z.col(k).sum()), 1e-12 * data.z.col(k).norm());
        EXPECT_GT(data.z_means(k), 2.0);
    }
}

TEST(Dataset, Validation) {
    EXPECT_THROW(make_dataset(VectorXd::Zero(9), MatrixXd::Zero(9, 1), MatrixXd(9, 0)), Error);
    EXPECT_THROW(make_dataset(VectorXd::Zero(12), MatrixXd(12, 0), MatrixXd(12, 0)), Error);
    EXPECT_THROW(make_dataset(VectorXd::Zero(12), MatrixXd::Zero(11, 1), MatrixXd(12, 0)), Error);
    VectorXd y = VectorXd::Zero(12);
    y(3) = std::nan("");
    EXPECT_THROW(make_dataset(y, MatrixXd::Zero(12, 1), MatrixXd(12, 0)), Error);
}

TEST(Csv, ParsesRolesAndQuotes) {
    std::istringstream in("y,\"a\",b,c\n1,0.1,5,x\n2,0.2,6,x\n3,0.3,7,x\n4,0.4,8,x\n5,0.5,9,x\n"
                          "6,0.6,1,x\n7,0.7,2,x\n8,0.8,3,x\n9,0.9,4,x\n10,1.0,0,x\n");
    const auto t = parse_csv(in);
    const auto d = dataset_from_table(t, "y", {"a"}, {"b"});
    EXPECT_EQ(d.n(), 10);
    EXPECT_EQ(d.x_names, std::vector<std::string>{"a"});
    EXPECT_DOUBLE_EQ(d.x(2, 0), 0.3);
    EXPECT_DOUBLE_EQ(d.z_means(0), 4.5);
}

TEST(Csv, MissingColumnNamed) {
    std::istringstream in("y,a\n1,2\n");
    const auto t = parse_csv(in);
    try {
        dataset_from_table(t, "resp", {"a"}, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
        EXPECT_NE(std::string(e.what()).find("resp"), std::string::npos);
    }
}

TEST(Csv, MissingValueIsError) {
    std::istringstream in("y,a\n1,2\n2,\n");
    const auto t = parse_csv(in);
    EXPECT_THROW(t.numeric_column("a"), Error);
}

TEST(Csv, EmptyDataset) {
    std::istringstream in("y,a\n");
    const auto t = parse_csv(in);
    EXPECT_THROW(dataset_from_table(t, "y", {"a"}, {}), Error);
}

TEST(Csv, RoundTripFormatting) {
    for (double v : {0.1, -3.25e-7, 1.0 / 3.0, 12345.678}) {
        double back = 0.0;
        std::istringstream(format_double(v)) >> back;
        EXPECT_EQ(back, v);
    }
}

#include "fblab/fluctuation.hpp"
#include "fblab/spectral.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace fblab;

namespace {

LatticeOperator free_op(int dim, int side, double h = 1.0) {
    const Box b{dim, side, h};
    return assemble_hamiltonian(b, GridFunction(b));
}

LatticeOperator random_op(int dim, int side, std::uint64_t seed, double amp = 3.0) {
    const Box b{dim, side, 1.0};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, amp);
    GridFunction v(b);
    for (auto& x : v.values) x = u(rng);
    return assemble_hamiltonian(b, v);
}

std::vector<double> dense_spectrum(const LatticeOperator& op) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.dense(), Eigen::EigenvaluesOnly);
    return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

SolverOptions lanczos() {
    SolverOptions o;
    o.method = SolverMethod::Lanczos;
    return o;
}

}  // namespace

TEST(Assemble, OneDimensionalStencil) {
    const auto op = free_op(1, 3);
    const Eigen::MatrixXd m = op.dense();
    Eigen::MatrixXd expect(3, 3);
    expect << 2, -1, 0, -1, 2, -1, 0, -1, 2;
    EXPECT_EQ(m, expect);
}

TEST(Assemble, SymmetricNearestNeighbourPattern) {
    const auto op = random_op(2, 5, 3);
    const Eigen::MatrixXd m = op.dense();
    EXPECT_EQ(m, m.transpose());
    for (std::size_t i = 0; i < op.size(); ++i)
        for (std::size_t j = 0; j < op.size(); ++j) {
            if (i == j) continue;
            const bool nn = l1_distance(op.box.site(i), op.box.site(j), 2) == 1;
            EXPECT_EQ(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), nn ? -1.0 : 0.0);
        }
}

TEST(Assemble, SpacingScalesKinetic) {
    const auto op = free_op(1, 4, 0.5);
    EXPECT_EQ(op.dense()(0, 0), 8.0);
    EXPECT_EQ(op.dense()(0, 1), -4.0);
}

TEST(Assemble, RejectsMismatchedPotential) {
    EXPECT_THROW(assemble_hamiltonian(Box{1, 4, 1.0}, GridFunction(Box{1, 5, 1.0})), ConfigError);
}

TEST(Eigen, ClosedFormDirichletSpectrum) {
    const auto vals = all_eigenvalues(free_op(1, 3));
    EXPECT_NEAR(vals[0], 2 - std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(vals[1], 2, 1e-12);
    EXPECT_NEAR(vals[2], 2 + std::sqrt(2.0), 1e-12);
    const int n = 40;
    const auto v40 = all_eigenvalues(free_op(1, n));
    for (int k = 1; k <= n; ++k) {
        const double s = std::sin(k * std::numbers::pi / (2.0 * (n + 1)));
        EXPECT_NEAR(v40[static_cast<std::size_t>(k - 1)], 4 * s * s, 1e-12);
    }
}

TEST(Eigen, KroneckerSum2x2) {
    EXPECT_NEAR(ground_state_energy(free_op(2, 2)), 2.0, 1e-12);
}

TEST(Eigen, GroundStateOfThreeSites) {
    EXPECT_NEAR(ground_state_energy(free_op(1, 3)), 2 - std::sqrt(2.0), 1e-10);
}

TEST(Eigen, FullSpectrumEqualsDense) {
    const auto op = random_op(2, 6, 11);
    const auto vals = lowest_eigenvalues(op, op.size()).values;
    const auto ref = dense_spectrum(op);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(vals[i], ref[i], 1e-10);
}

TEST(Eigen, IdentityShift) {
    const auto op = random_op(1, 30, 2);
    GridFunction c(op.box, 1.75);
    const auto shifted = add_potential(op, c, 1.0);
    const auto a = all_eigenvalues(op), b = all_eigenvalues(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], a[i] + 1.75, 1e-12);
}

TEST(Eigen, GershgorinLowerBoundIsMinPotential) {
    const auto op = random_op(2, 8, 5);
    EXPECT_GE(ground_state_energy(op), op.potential.min() - 1e-12);
}

TEST(Eigen, RejectsBadCount) {
    EXPECT_THROW(lowest_eigenvalues(free_op(1, 4), 0), ConfigError);
    EXPECT_THROW(lowest_eigenvalues(free_op(1, 4), 5), ConfigError);
}

TEST(Lanczos, MatchesDenseOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto op = random_op(seed % 2 ? 2 : 1, seed % 2 ? 14 : 150, seed);
        const auto ref = dense_spectrum(op);
        const auto sol = lowest_eigenvalues(op, 6, lanczos());
        const double scale = op.spectral_scale();
        for (std::size_t i = 0; i < 6; ++i) EXPECT_LE(std::abs(sol.values[i] - ref[i]), 1e-8 * scale);
        const Eigen::MatrixXd gram = sol.vectors.transpose() * sol.vectors;
        EXPECT_LE((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-10);
        for (double r : sol.residuals) EXPECT_LE(r, 1e-10 * scale);
    }
}

TEST(Lanczos, HandlesDegenerateSpectrum) {
    const auto op = free_op(2, 12);
    const auto ref = dense_spectrum(op);
    const auto sol = lowest_eigenvalues(op, 8, lanczos());
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(sol.values[i], ref[i], 1e-8 * op.spectral_scale());
}

TEST(Lanczos, AutoSwitchesAboveCrossover) {
    const auto op = free_op(1, 600);
    const double e0 = ground_state_energy(op);
    const double s = std::sin(std::numbers::pi / (2.0 * 601));
    EXPECT_NEAR(e0, 4 * s * s, 1e-10);
}

TEST(Window, FreeThreeSiteWindow) {
    const auto op = free_op(1, 3);
    const auto w = make_window(0.0, 2.5, op);
    const auto ws = eigenpairs_in_window(op, w);
    ASSERT_EQ(ws.rank(), 2u);
    EXPECT_NEAR(ws.pairs.values[0], 2 - std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(ws.pairs.values[1], 2.0, 1e-12);
    EXPECT_EQ(trace_projector(op, w).count, 2u);
}

TEST(Window, BelowSpectrumIsEmpty) {
    const auto op = free_op(1, 8);
    EXPECT_EQ(eigenpairs_in_window(op, make_window(-2, -1, op)).rank(), 0u);
    EXPECT_EQ(trace_projector(op, make_window(-2, -1, op)).count, 0u);
}

TEST(Window, WholeRangeIsCompleteBasis) {
    const auto op = random_op(2, 4, 8);
    const auto g = op.gershgorin();
    const auto ws = eigenpairs_in_window(op, make_window(g.lo, g.hi, op));
    ASSERT_EQ(ws.rank(), op.size());
    const Eigen::MatrixXd p = ws.pairs.vectors * ws.pairs.vectors.transpose();
    EXPECT_LE((p - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Window, TraceMatchesDenseCount) {
    const auto op = random_op(2, 8, 21);
    const auto ref = dense_spectrum(op);
    const auto w = make_window(2.0, 4.0, op);
    std::size_t expect = 0;
    for (double e : ref) expect += (e >= 2.0 && e <= 4.0);
    EXPECT_EQ(trace_projector(op, w).count, expect);
}

TEST(Window, EndpointTiesAreFlagged) {
    const auto op = free_op(1, 3);
    const auto w = make_window(0.0, 2.0, op);
    const auto c = trace_projector(op, w);
    EXPECT_EQ(c.count, 2u);
    EXPECT_EQ(c.ambiguous, 1u);
}

namespace {

LatticeOperator decoupled(std::vector<double> diag) {
    const Box b{1, static_cast<int>(diag.size()), 1.0};
    LatticeOperator op;
    op.box = b;
    op.potential = GridFunction(b, diag);
    op.matrix.resize(static_cast<Eigen::Index>(diag.size()), static_cast<Eigen::Index>(diag.size()));
    for (std::size_t i = 0; i < diag.size(); ++i)
        op.matrix.insert(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag[i];
    op.matrix.makeCompressed();
    return op;
}

}  // namespace

TEST(Curve, TwoSiteClosedForm) {
    const auto h0 = decoupled({0.0, 1.0});
    const GridFunction w(h0.box, std::vector<double>{1.0, 0.0});
    const std::vector<double> grid{0.25, 0.5, 1.0, 1.5, 3.0};
    const auto c = ground_state_energy_curve(h0, w, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(c.lambda[i], std::min(grid[i], 1.0), 1e-12);
    EXPECT_TRUE(curve_violations(c, 1.0, 1e-12).empty());
}

TEST(Curve, IdentityAndZeroPerturbation) {
    const auto h0 = random_op(1, 40, 4);
    const auto grid = default_t_grid(2.0);
    const auto one = ground_state_energy_curve(h0, GridFunction(h0.box, 1.0), grid);
    const auto zero = ground_state_energy_curve(h0, GridFunction(h0.box, 0.0), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        EXPECT_NEAR(one.lambda[i], one.lambda0 + grid[i], 1e-12);
        EXPECT_NEAR(zero.lambda[i], zero.lambda0, 1e-12);
    }
}

TEST(Curve, DefaultGridShape) {
    const auto g = default_t_grid(3.0);
    ASSERT_EQ(g.size(), 32u);
    EXPECT_NEAR(g.front(), 0.03, 1e-15);
    EXPECT_EQ(g.back(), 3.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
}

TEST(Curve, InvariantsOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto h0 = random_op(seed % 2 + 1, seed % 2 ? 7 : 40, seed, 1.0);
        GridFunction w(h0.box);
        std::mt19937_64 rng(seed + 100);
        for (auto& x : w.values) x = (rng() % 3 == 0) ? 1.0 : 0.0;
        const auto c = ground_state_energy_curve(h0, w, default_t_grid(5.0));
        EXPECT_TRUE(curve_violations(c, w.max(), 1e-9 * h0.spectral_scale()).empty()) << seed;
    }
}

TEST(Curve, RejectsNegativePerturbation) {
    const auto h0 = free_op(1, 4);
    EXPECT_THROW(ground_state_energy_curve(h0, GridFunction(h0.box, -1.0), default_t_grid(1.0)), ConfigError);
}

TEST(Properties, DirichletMonotonicity) {
    const auto big = random_op(1, 60, 31);
    const Box small{1, 30, 1.0};
    GridFunction v(small);
    for (std::size_t i = 0; i < 30; ++i) v[i] = big.potential[i + 10];
    EXPECT_GE(ground_state_energy(assemble_hamiltonian(small, v)), ground_state_energy(big) - 1e-12);
}

TEST(Properties, CouplingMonotonicityEveryLevel) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto a = random_op(2, 5, seed);
        GridFunction bump(a.box);
        std::mt19937_64 rng(seed);
        for (auto& x : bump.values) x = (rng() % 2) * 0.5;
        const auto b = add_potential(a, bump, 1.0);
        const auto ea = all_eigenvalues(a), eb = all_eigenvalues(b);
        for (std::size_t k = 0; k < ea.size(); ++k) EXPECT_LE(ea[k], eb[k] + 1e-12);
    }
}

TEST(Gap, FullLatticePointMassIsExactShift) {
    const auto h0 = free_op(1, 32);
    const auto g = fluctuation_boundary_gap(h0, GridFunction(h0.box, 1.0), 1.0);
    EXPECT_NEAR(g.gap(), 1.0, 1e-12);
    EXPECT_EQ(fluctuation_boundary_gap(h0, GridFunction(h0.box, 1.0), 0.0).gap(), 0.0);
}

TEST(Gap, SparseImpuritiesMatchDense) {
    ModelConfig c;
    c.dim = 1;
    c.box_side = 64;
    c.geometry = ImpurityGeometry::sublattice(4);
    c.profile = {1, 1, 1, 1, ProfileShape::Plateau};
    c.eta_max = 1.0;
    c.law = CouplingDistribution::uniform(1.0);
    const auto g = fluctuation_boundary_gap(c, 64);
    EXPECT_GT(g.gap(), 0.0);
    const auto m = instantiate(c);
    const auto ref = dense_spectrum(full_coupling_operator(m));
    EXPECT_NEAR(g.EF, ref[0], 1e-10);
}

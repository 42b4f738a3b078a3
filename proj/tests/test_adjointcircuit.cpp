#include <gtest/gtest.h>

#include "suites.hpp"

using namespace pffa;
using namespace testing_support;

namespace {

Eigen::MatrixXd block_of(const StampSet& s, std::size_t row0, std::size_t col0, std::size_t n) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& t : s.triplets)
        if (t.row >= row0 && t.row < row0 + n && t.col >= col0 && t.col < col0 + n)
            m(static_cast<Eigen::Index>(t.row - row0), static_cast<Eigen::Index>(t.col - col0)) += t.value;
    return m;
}

}  // namespace

TEST(AdjointCircuit, LinearBlockIsTransposeOfPowerFlowBlock) {
    const auto c = load_data_case("case14.m");
    const auto idx = build_index_map(c, SystemMode::Coupled);
    StampSet pf;
    for (const auto& br : c.branches) pf.append(stamp_branch(br, idx));
    for (const auto& sh : c.shunts) pf.append(stamp_shunt(sh, idx));
    pf.append(stamp_slack(c.buses[idx.slack_bus], idx));
    const auto adj = adjoint_stamp_linear(pf, idx);
    const Eigen::MatrixXd a = block_of(pf, 0, 0, idx.pf_dim);
    const Eigen::MatrixXd b = block_of(adj, idx.pf_dim, idx.pf_dim, idx.pf_dim);
    EXPECT_EQ((b - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(adj.rhs.empty());
}

TEST(AdjointCircuit, TellegenReciprocityOnLinearNetwork) {
    // lambda^T (G x) = x^T (G^T lambda) for the branch network with a phase shifter.
    auto c = load_data_case("case14.m");
    c.branches[find_branch(c, 4, 7)].phase_shift = 0.05;
    const auto idx = build_index_map(c, SystemMode::Coupled);
    StampSet pf;
    for (const auto& br : c.branches) pf.append(stamp_branch(br, idx));
    const auto adj = adjoint_stamp_linear(pf, idx);
    std::mt19937 rng(4);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x(idx.pf_dim), l(idx.pf_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = nd(rng);
        l(i) = nd(rng);
    }
    const Eigen::MatrixXd g = block_of(pf, 0, 0, idx.pf_dim);
    const Eigen::MatrixXd gt = block_of(adj, idx.pf_dim, idx.pf_dim, idx.pf_dim);
    EXPECT_NEAR(l.dot(g * x), x.dot(gt * l), 1e-10 * std::abs(l.dot(g * x)) + 1e-12);
    // With a phase shifter the network is not symmetric, so the adjoint differs.
    EXPECT_GT((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(AdjointCircuit, PqBlockLinearizationReproducesCurrent) {
    std::mt19937 rng(8);
    const Load load{1, 0.6, 0.25};
    for (int k = 0; k < 20; ++k) {
        const cd v = random_phasor(rng), lam = random_phasor(rng, 0.1, 1.0);
        const auto a = adjoint_pq_block(load, v, lam);
        const double x[2] = {v.real(), v.imag()}, l[2] = {lam.real(), lam.imag()};
        for (int i = 0; i < 2; ++i) {
            double lin = a.beta[i];
            for (int j = 0; j < 2; ++j) lin += a.hessian_block[i][j] * x[j] + a.transpose_block[i][j] * l[j];
            EXPECT_NEAR(lin, a.current[i], 1e-12);
        }
        // Complex form of J^T lambda for I = conj(S / V).
        const cd d = -std::conj(cd(load.p, load.q)) / (std::conj(v) * std::conj(v));
        EXPECT_NEAR(a.current[0], d.real() * l[0] + d.imag() * l[1], 1e-12);
        EXPECT_NEAR(a.current[1], d.imag() * l[0] - d.real() * l[1], 1e-12);
    }
}

TEST(AdjointCircuit, PinnedGeneratorDropsMagnitudeCurvature) {
    const Generator gen = generator(1, 0.4, 1.02, -0.2, 0.2);
    const cd v = std::polar(1.0, 0.1), lam(0.3, -0.2);
    const auto reg = pv_pq_switch_adjoint(gen, {v, 0.2, lam, 0.7, GeneratorMode::Regulating});
    const auto pin = pv_pq_switch_adjoint(gen, {v, 0.2, lam, 0.7, GeneratorMode::AtQmax});
    EXPECT_NEAR(reg.hessian_block[0][0] - pin.hessian_block[0][0], 1.4, 1e-12);
    EXPECT_NEAR(reg.hessian_block[1][1] - pin.hessian_block[1][1], 1.4, 1e-12);
    // The control row only reaches the Q_G adjoint row once pinned.
    EXPECT_EQ(pin.transpose_block[0][2], 0.0);
    EXPECT_EQ(pin.transpose_block[1][2], 0.0);
    EXPECT_EQ(pin.transpose_block[2][2], 1.0);
    const auto direct = adjoint_pv_block(gen, v, 0.2, lam, 0.7);
    EXPECT_EQ(direct.hessian_block, reg.hessian_block);
}

TEST(AdjointCircuit, ElementAdjointCurrentsMatchDifferencedJacobians) {
    const auto r = run_derivative_suite(25, 99);
    for (const auto& [name, e] : r.worst)
        if (name.find("adjoint current") != std::string::npos) EXPECT_LT(e, 1e-6) << name;
}

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"

using namespace freeway;

namespace {

FreewayModel toy_model() {
    std::vector<CellParams> cells;
    for (int i = 0; i < 3; ++i) {
        cells.push_back({10, 1.0, 4, 0.0, PiecewiseLinearDemand({{0, 0}, {5, 4}, {10, 4}}, 5, 5)});
    }
    return FreewayModel(cells);
}

}  // namespace

TEST(EstimateC, ToyChainMatchesHandRecursion) {
    const auto model = toy_model();
    ASSERT_NEAR(model.demand_constants(0).theta_lower, 0.4, 1e-15);
    const std::vector<double> r{0, 0};
    EXPECT_NEAR(estimate_C(model, r), oracle::toy_drainage_constant(10, 1, 4, 0.4, 4), 1e-12);
}

TEST(EstimateC, RecursionStartsAtLastTheta) {
    const auto model = oracle::ramp_model();
    const std::vector<double> r{0, 1, 0};
    const auto Y = drainage_recursion(model, r);
    EXPECT_NEAR(Y.back(), 7.0 / 16.0, 1e-15);
    for (std::size_t k = 1; k < Y.size(); ++k) EXPECT_LE(Y[k - 1], Y[k]);
}

TEST(EstimateC, RampModelGivesSmallPositiveConstant) {
    const auto model = oracle::ramp_model();
    const std::vector<double> r{0, 1, 0};
    const double C = estimate_C(model, r);
    EXPECT_GT(C, 0.0);
    EXPECT_LE(C, 0.05);
}

TEST(EstimateC, RejectsBoundsAtCapacity) {
    const auto model = oracle::ramp_model();
    EXPECT_THROW((void)estimate_C(model, std::vector<double>{0, 36, 0}), PreconditionError);
    EXPECT_THROW((void)estimate_C(model, std::vector<double>{-1, 0, 0}), PreconditionError);
    EXPECT_THROW((void)estimate_C(model, std::vector<double>{0, 0}), PreconditionError);
}

TEST(EstimateC, NonIncreasingInEveryBound) {
    const auto model = oracle::ramp_model();
    const std::vector<double> levels{0, 0.5, 2, 8, 20, 35};
    for (double r2 : levels) {
        for (double r3 : levels) {
            for (double r4 : levels) {
                const double base = estimate_C(model, std::vector<double>{r2, r3, r4});
                for (double step : {0.25, 1.0}) {
                    EXPECT_LE(estimate_C(model, std::vector<double>{std::min(35.9, r2 + step), r3, r4}), base);
                    EXPECT_LE(estimate_C(model, std::vector<double>{r2, std::min(35.9, r3 + step), r4}), base);
                    EXPECT_LE(estimate_C(model, std::vector<double>{r2, r3, std::min(35.9, r4 + step)}), base);
                }
            }
        }
    }
}

TEST(FreeFlowBox, BottleneckValues) {
    const auto model = oracle::bottleneck_model();
    const auto u = oracle::bottleneck_inflows();
    const auto eq = equilibrium_from_inflows(model, u);
    const auto box = compute_beta_mu(model, u, eq);
    const std::vector<double> beta{55, 55, 55, 44, 55};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(box.beta[i], beta[i], 1e-12);
    EXPECT_NEAR(box.omega[4], 20.0 / 115.0 * (170 - 54.9725) - 19.99, 1e-12);
    EXPECT_NEAR(box.omega[4], 0.0148, 1e-4);
    EXPECT_NEAR(box.mu[3], 43.9854, 1e-4);
    EXPECT_NEAR(box.mu[3], eq.x[3] + box.omega[4] / 2.0, 1e-12);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_GT(box.mu[i], eq.x[i]);
}

TEST(FreeFlowBox, RejectsZeroMargin) {
    const auto model = oracle::bottleneck_model();
    const auto eq = equilibrium_from_inflows(model, oracle::bottleneck_inflows());
    EXPECT_THROW((void)compute_beta_mu(model, Inflows{19.99, 25, 0, 0, 0}, eq), PreconditionError);
}

TEST(SelectR, SmallRampNeedsOnlyMainInflow) {
    const auto model = oracle::ramp_model();
    const auto u = oracle::ramp_inflows(0.05);
    const auto eq = equilibrium_from_inflows(model, u);
    const double C = estimate_C(model, std::vector<double>{0, 1, 0});
    const auto box = compute_beta_mu(model, u, eq);
    ControlSetOptions opt;
    opt.candidate = std::vector<std::size_t>{0};
    const auto cs = select_R(model, u, eq, C, box, opt);
    EXPECT_EQ(cs.members, std::vector<std::size_t>{0});
    EXPECT_LT(cs.epsilon, 1.0);
    EXPECT_LE(cs.flow_residual, 0.0);
    EXPECT_LE(cs.drainage_residual, 1e-12);
    EXPECT_GT(cs.floor[0], 0.0);
    EXPECT_LT(cs.floor[0], u[0]);
    EXPECT_EQ(select_R(model, u, eq, C, box).members, std::vector<std::size_t>{0});
}

TEST(SelectR, LargeRampMustAlsoBeControlled) {
    const auto model = oracle::ramp_model();
    const auto u = oracle::ramp_inflows(0.3);
    const auto eq = equilibrium_from_inflows(model, u);
    const double C = estimate_C(model, std::vector<double>{0, 1, 0});
    const auto box = compute_beta_mu(model, u, eq);
    ControlSetOptions only_main;
    only_main.candidate = std::vector<std::size_t>{0};
    try {
        (void)select_R(model, u, eq, C, box, only_main);
        FAIL() << "expected InfeasibleControlSetError";
    } catch (const InfeasibleControlSetError& e) {
        EXPECT_GT(e.drainage_residual(), 0.0);
        EXPECT_LT(e.flow_residual(), 0.0);
    }
    EXPECT_EQ(select_R(model, u, eq, C, box).members, (std::vector<std::size_t>{0, 2}));
}

TEST(SelectR, SinglePositiveInflow) {
    const auto model = oracle::bottleneck_model();
    const auto cert = synthesize(model, oracle::bottleneck_inflows());
    EXPECT_EQ(cert.R, std::vector<std::size_t>{0});
}

TEST(SelectR, ExplicitFloorsAreUsedAsGiven) {
    const auto model = oracle::ramp_model();
    const auto u = oracle::ramp_inflows(0.3);
    const auto eq = equilibrium_from_inflows(model, u);
    const double C = estimate_C(model, std::vector<double>{0, 1, 0});
    const auto box = compute_beta_mu(model, u, eq);
    ControlSetOptions opt;
    opt.floors[2] = 0.01;
    const auto cs = select_R(model, u, eq, C, box, opt);
    EXPECT_EQ(cs.floor[2], 0.01);
    opt.floors[0] = 35.0;
    EXPECT_THROW((void)select_R(model, u, eq, C, box, opt), InfeasibleControlSetError);
    opt.floors[0] = 40.0;
    EXPECT_THROW((void)select_R(model, u, eq, C, box, opt), PreconditionError);
}

TEST(ContractionRate, BottleneckAtSevenTenths) {
    const auto model = oracle::bottleneck_model();
    EXPECT_NEAR(contraction_rate(model, 0.7), 9.5 / 11.0, 1e-12);
    double prev = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double L = contraction_rate(model, k / 100.0);
        EXPECT_GE(L, prev);
        prev = L;
    }
}

TEST(Synthesize, BoxMarginAtSevenTenths) {
    const auto model = oracle::bottleneck_model();
    SynthesisOptions opt;
    opt.sigma = 0.7;
    const auto cert = synthesize(model, oracle::bottleneck_inflows(), opt);
    EXPECT_NEAR(cert.L, 9.5 / 11.0, 1e-12);
    EXPECT_NEAR(cert.h, std::pow(0.7, 4) * (cert.mu[3] - cert.x_star[3]), 1e-15);
    EXPECT_NEAR(cert.h, 0.00178, 2e-5);
}

TEST(Synthesize, DefaultSigmaKeepsMargin) {
    for (const auto& model : {oracle::bottleneck_model(), oracle::ramp_model()}) {
        const double sigma = 0.9 * sigma_supremum(model);
        EXPECT_LT(contraction_rate(model, sigma), 1.0);
        EXPECT_GE(1.0 - contraction_rate(model, sigma), 0.1 * (1.0 - contraction_rate(model, 0.0)) - 1e-12);
    }
}

TEST(Synthesize, CertificatePostconditions) {
    const auto bottleneck = synthesize(oracle::bottleneck_model(), oracle::bottleneck_inflows());
    const auto ramp = synthesize(oracle::ramp_model(), oracle::ramp_inflows(0.05));
    for (const auto& c : {bottleneck, ramp}) {
        EXPECT_GT(c.tau_star, 0.0);
        EXPECT_LE(c.tau_star, c.h);
        EXPECT_LT(c.tau, c.tau_star);
        EXPECT_GT(c.weight_A, 1.0);
        EXPECT_GT(c.weight_K, 0.0);
        EXPECT_GT(c.contraction_gap, 0.0);
        EXPECT_LT(c.contraction_gap, 1.0);
        EXPECT_LE(c.L_tilde(), 1.0);
        EXPECT_LT(c.epsilon, 1.0);
        EXPECT_GE(c.Q, sum_of_prefix_sums(c.x_star.view()));
        for (std::size_t i : c.R) {
            EXPECT_GT(c.b[i], 0.0);
            EXPECT_LT(c.b[i], c.u_star[i]);
            EXPECT_NEAR(c.gamma[i], (c.u_star[i] - c.b[i]) / c.tau, 1e-9 * c.gamma[i]);
        }
    }
}

TEST(Synthesize, RejectsSigmaOutsideRange) {
    SynthesisOptions opt;
    opt.sigma = 1.5;
    EXPECT_THROW((void)synthesize(oracle::bottleneck_model(), oracle::bottleneck_inflows(), opt), SynthesisError);
    opt.sigma = 1.0;  // L(1) = 1 for the bottleneck
    EXPECT_THROW((void)synthesize(oracle::bottleneck_model(), oracle::bottleneck_inflows(), opt), SynthesisError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "oracles.hpp"

using namespace freeway;

namespace {

PiecewiseLinearDemand upstream_demand() { return oracle::bottleneck_model().cell(0).demand; }
PiecewiseLinearDemand bottleneck_demand() { return oracle::bottleneck_model().cell(4).demand; }
PiecewiseLinearDemand ramp_demand() { return oracle::ramp_model().cell(0).demand; }

std::string validation_message(const PiecewiseLinearDemand& fd) {
    try {
        (void)validate_H(fd);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(EvalDemand, ExactAtBreakpoints) {
    EXPECT_DOUBLE_EQ(eval_demand(bottleneck_demand(), 55.0), 20.0);
    EXPECT_DOUBLE_EQ(eval_demand(ramp_demand(), 40.0), 36.0);
    EXPECT_EQ(eval_demand(upstream_demand(), 0.0), 0.0);
}

TEST(EvalDemand, InterpolatesInsideSegments) {
    EXPECT_NEAR(eval_demand(bottleneck_demand(), 27.5), 10.0, 1e-12);
    EXPECT_NEAR(eval_demand(upstream_demand(), 120.0), 18.0, 1e-12);
}

TEST(EvalDemand, RejectsDensitiesOutsideDomain) {
    EXPECT_THROW((void)eval_demand(upstream_demand(), -1e-9), DomainError);
    EXPECT_THROW((void)eval_demand(upstream_demand(), 170.0001), DomainError);
    EXPECT_THROW((void)eval_demand(upstream_demand(), std::nan("")), DomainError);
}

TEST(InvertDemand, SolvesOnIncreasingBranch) {
    EXPECT_NEAR(invert_demand_increasing(upstream_demand(), 19.99), 43.978, 1e-9);
    EXPECT_NEAR(invert_demand_increasing(bottleneck_demand(), 19.99), 54.9725, 1e-9);
    EXPECT_EQ(invert_demand_increasing(upstream_demand(), 0.0), 0.0);
    EXPECT_EQ(invert_demand_increasing(upstream_demand(), 25.0), 55.0);
}

TEST(InvertDemand, RejectsUnreachableFlow) {
    EXPECT_THROW((void)invert_demand_increasing(bottleneck_demand(), 20.0001), InfeasibleFlowError);
    EXPECT_THROW((void)invert_demand_increasing(bottleneck_demand(), -1.0), InfeasibleFlowError);
}

TEST(InvertDemand, InvertsEvaluationOnIncreasingBranch) {
    for (const auto& fd : {upstream_demand(), bottleneck_demand(), ramp_demand()}) {
        for (int k = 0; k <= 1000; ++k) {
            const double z = fd.critical_density() * k / 1000.0;
            const double back = invert_demand_increasing(fd, eval_demand(fd, z));
            EXPECT_LE(std::abs(back - z), 1e-12 * std::max(1.0, z)) << "z = " << z;
        }
    }
}

TEST(ValidateH, BottleneckConstants) {
    const auto up = validate_H(upstream_demand());
    EXPECT_NEAR(up.lambda, 6.0 / 11.0, 1e-12);
    EXPECT_NEAR(up.L, 6.0 / 11.0, 1e-12);
    EXPECT_NEAR(up.G, 5.0 / 11.0, 1e-12);
    const auto last = validate_H(bottleneck_demand());
    EXPECT_NEAR(last.lambda, 7.0 / 11.0, 1e-12);
    EXPECT_NEAR(last.G, 4.0 / 11.0, 1e-12);
}

TEST(ValidateH, RampThetaLower) {
    EXPECT_NEAR(validate_H(ramp_demand()).theta_lower, 7.0 / 16.0, 1e-12);
}

TEST(ValidateH, RejectsSlopeAboveOne) {
    PiecewiseLinearDemand steep({{0, 0}, {10, 12}, {40, 12}, {60, 12}}, 10, 10);
    const auto msg = validation_message(steep);
    EXPECT_NE(msg.find("slope"), std::string::npos) << msg;
    EXPECT_NE(msg.find("exceeds 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(H)"), std::string::npos) << msg;
}

TEST(ValidateH, RejectsIncreaseBeyondCritical) {
    PiecewiseLinearDemand bad({{0, 0}, {10, 8}, {20, 9}, {40, 9}}, 10, 10);
    EXPECT_NE(validation_message(bad).find("non-increasing"), std::string::npos);
}

TEST(ValidateH, RejectsFlowReachingDensity) {
    PiecewiseLinearDemand flat_start({{0, 0}, {10, 10}, {40, 5}}, 10, 10);
    EXPECT_NE(validation_message(flat_start).find("f(z) < z"), std::string::npos);
}

TEST(ValidateH, RejectsNonIncreasingBelowCritical) {
    PiecewiseLinearDemand plateau({{0, 0}, {10, 8}, {20, 8}, {30, 8}}, 20, 10);
    EXPECT_NE(validation_message(plateau).find("strictly increasing"), std::string::npos);
}

TEST(DemandConstruction, StructuralChecks) {
    EXPECT_THROW(PiecewiseLinearDemand({{0, 0}}, 1, 1), ValidationError);
    EXPECT_THROW(PiecewiseLinearDemand({{1, 0}, {10, 5}}, 5, 5), ValidationError);
    EXPECT_THROW(PiecewiseLinearDemand({{0, 0}, {10, 5}, {10, 5}}, 5, 5), ValidationError);
    EXPECT_THROW(PiecewiseLinearDemand({{0, 0}, {10, 5}}, 5, 6), ValidationError);
    EXPECT_THROW(PiecewiseLinearDemand({{0, 0}, {10, 5}}, 11, 5), ValidationError);
}

TEST(DemandProperties, ExcessIsMonotoneAndBoundsHold) {
    for (const auto& fd : {upstream_demand(), bottleneck_demand(), ramp_demand()}) {
        const auto dc = validate_H(fd);
        double prev = 0.0;
        for (int k = 0; k <= 4000; ++k) {
            const double z = fd.jam_density() * k / 4000.0;
            const double f = eval_demand(fd, z);
            EXPECT_GE(z - f, prev - 1e-12);
            prev = z - f;
            EXPECT_GE(f, dc.theta_lower * z - 1e-12);
        }
        for (int k = 0; k < 400; ++k) {
            const double z1 = fd.smooth_bound() * k / 400.0;
            const double z2 = fd.smooth_bound() * (k + 1) / 400.0;
            EXPECT_LE(std::abs(eval_demand(fd, z2) - eval_demand(fd, z1)), dc.G * (z2 - z1) + 1e-12);
        }
    }
}

#pragma once

// Test-only fixtures and independent reference computations.

#include <algorithm>
#include <cmath>
#include <vector>

#include "freeway/freeway.hpp"

namespace oracle {

using namespace freeway;

// Five identical-length cells, the last one with a 20 veh/step bottleneck and a
// capacity drop after the critical density 55.
inline FreewayModel bottleneck_model() {
    std::vector<CellParams> cells;
    for (int i = 0; i < 5; ++i) {
        const bool last = i == 4;
        PiecewiseLinearDemand fd(last ? std::vector<Breakpoint>{{0, 0}, {55, 20}, {72.25, 17}, {170, 17}}
                                      : std::vector<Breakpoint>{{0, 0}, {55, 25}, {87.2, 18}, {170, 18}},
                                 55, 55);
        cells.push_back({170, last ? 20.0 / 115 : 25.0 / 115, last ? 20.0 : 25.0, 0.0, fd});
    }
    return FreewayModel(cells);
}

inline Inflows bottleneck_inflows(double u1 = 19.99) { return Inflows{u1, 0, 0, 0, 0}; }

// Four cells with a triangular-like diagram, on-ramps at cells 1 and 3.
inline FreewayModel ramp_model() {
    std::vector<CellParams> cells;
    for (int i = 0; i < 4; ++i) {
        PiecewiseLinearDemand fd({{0, 0}, {40, 36}, {370.0 / 9, 35}, {80, 35}}, 40, 40);
        cells.push_back({80, 0.9, 36, 0.0, fd});
    }
    return FreewayModel(cells);
}

inline Inflows ramp_inflows(double u3) { return Inflows{35.5, 0, u3, 0}; }

inline StabilizingFeedback tuned_stabilizer(const FreewayModel& model, double u1 = 19.99) {
    const auto eq = equilibrium_from_inflows(model, bottleneck_inflows(u1));
    return StabilizingFeedback(eq.x, bottleneck_inflows(u1), 0.7, {0}, {0.6, 0, 0, 0, 0}, {0.2, 0, 0, 0, 0});
}

inline RlbPiController rlb_controller(const FreewayModel& model) {
    RlbPiParams p;
    p.setpoints.assign(model.size(), 55.0);
    return RlbPiController(model, p, Inflows(model.size(), 0.0));
}

// Drainage constant of a 3-cell chain with identical cells and no off-ramps,
// written out step by step (k = 3, then k = 2) for r_2 = r_3 = 0.
inline double toy_drainage_constant(double a, double c, double q, double theta, double f_delta) {
    // k = 3: weights n+1-k = 1, n+2-k = 2
    const double l3 = std::min(1.0, c * a / (2.0 * f_delta));
    const double y3 = theta;
    double y = y3;
    y = std::min(y, 1.0 / 2.0 * l3 * theta);
    y = std::min(y, 1.0 * a * y3 / (2.0 * 1.0 * a + 2.0 * 2.0 * a));
    y = std::min(y, q / 1.0 * 1.0 / (2.0 * a));
    // k = 2: weights 2 and 3
    const double l2 = l3;
    double y1 = y;
    y1 = std::min(y1, 1.0 / 3.0 * l2 * theta);
    y1 = std::min(y1, 2.0 * a * y / (2.0 * 2.0 * a + 2.0 * 3.0 * a));
    y1 = std::min(y1, q * 1.0 / (3.0 * a));
    return y1;
}

// Total vehicles after one step, rebuilt from the flow bookkeeping alone.
inline double bookkeeping_total(const FreewayModel& model, const State& x, const StepFlows& flows) {
    double total = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        total += x[i] + flows.ramp_inflow[i] - flows.outflow[i];
        if (i > 0) total += flows.mainstream_outflow[i - 1];
    }
    return total;
}

}  // namespace oracle

#pragma once

// Uncertain discrete-time freeway dynamics x+ = F(d, x, u) on a chain of cells,
// and the uncongested equilibrium induced by a constant inflow vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "freeway/cell_vector.hpp"
#include "freeway/demand.hpp"
#include "freeway/errors.hpp"

namespace freeway {

struct CellParams {
    double a = 0.0;  // storage capacity [veh]
    double c = 0.0;  // supply slope in (0, 1]
    double q = 0.0;  // receiving capacity [veh/step]
    double p = 0.0;  // exit rate in [0, 1]
    PiecewiseLinearDemand demand;
};

/// Ordered chain of n >= 3 cells. The last cell always exits fully (p_n = 1);
/// every demand function is checked against (H) on construction.
class FreewayModel {
public:
    explicit FreewayModel(std::vector<CellParams> cells) : cells_(std::move(cells)) {
        if (cells_.size() < 3) throw ValidationError("freeway model needs at least 3 cells");
        cells_.back().p = 1.0;
        constants_.reserve(cells_.size());
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            const CellParams& cell = cells_[i];
            auto fail = [i](const std::string& why) {
                std::ostringstream os;
                os << "cell " << i + 1 << ": " << why;
                throw ValidationError(os.str());
            };
            if (!(cell.a > 0.0)) fail("storage capacity a must be positive");
            if (!(cell.c > 0.0 && cell.c <= 1.0)) fail("supply slope c must lie in (0, 1]");
            if (!(cell.q > 0.0)) fail("capacity q must be positive");
            if (!(cell.p >= 0.0 && cell.p <= 1.0)) fail("exit rate p must lie in [0, 1]");
            if (i + 1 < cells_.size() && !(cell.p < 1.0)) fail("exit rate p must be < 1 before the last cell");
            if (std::abs(cell.demand.jam_density() - cell.a) > kStructuralTolerance) {
                fail("demand must end at the storage capacity a");
            }
            try {
                constants_.push_back(validate_H(cell.demand));
            } catch (const ValidationError& e) {
                fail(e.what());
            }
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return cells_.size(); }
    [[nodiscard]] const CellParams& cell(std::size_t i) const { return cells_[i]; }
    [[nodiscard]] const std::vector<CellParams>& cells() const noexcept { return cells_; }
    [[nodiscard]] const DemandCertificate& demand_constants(std::size_t i) const { return constants_[i]; }

    [[nodiscard]] double demand(std::size_t i, double x) const { return eval_demand(cells_[i].demand, x); }

private:
    std::vector<CellParams> cells_;
    std::vector<DemandCertificate> constants_;
};

/// min(q, c (a - x)).
[[nodiscard]] inline double supply(const CellParams& cell, double x) {
    return std::min(cell.q, cell.c * (cell.a - x));
}

/// Sum over j of the prefix sums I_j(x) = x_1 + ... + x_j, i.e. sum (n+1-i) x_i.
[[nodiscard]] inline double sum_of_prefix_sums(std::span<const double> x) {
    double total = 0.0;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) total += static_cast<double>(n - i) * x[i];
    return total;
}

/// Split ratios indexed by receiving cell: s[i] is the admitted fraction of the
/// attempted outflow of cell i-1 (0-based, 1 <= i < n). s[0] is unused and
/// s[n] = 1 stands for the free exit of the last cell.
using SplitRatios = std::vector<double>;

[[nodiscard]] inline SplitRatios split_ratios(const FreewayModel& model, const State& x, const Inflows& u,
                                              const Disturbance& d) {
    const std::size_t n = model.size();
    SplitRatios s(n + 1, 1.0);
    for (std::size_t i = 1; i < n; ++i) {
        const CellParams& up = model.cell(i - 1);
        const double upstream = (1.0 - up.p) * model.demand(i - 1, x[i - 1]);
        if (upstream == 0.0) continue;  // s multiplies a zero flow
        const double room = supply(model.cell(i), x[i]);
        const double ramp_first = std::min(1.0, std::max(0.0, (room - u[i]) / upstream));
        const double main_first = std::min(1.0, room / upstream);
        // (1-d) ramp_first + d main_first, written so equal branches give a d-free result.
        s[i] = ramp_first + priority_at(d, i) * (main_first - ramp_first);
    }
    return s;
}

/// Realized flows of one step. Vectors are indexed by 0-based cell.
struct StepFlows {
    std::vector<double> inflow;              // F_in: ramp + mainstream inflow
    std::vector<double> outflow;             // F_out = s_{i+1} f_i(x_i)
    std::vector<double> mainstream_outflow;  // (1 - p_i) F_out
    std::vector<double> offramp_outflow;     // p_i F_out
    std::vector<double> ramp_inflow;         // w_i u_i
    std::vector<double> acceptance;          // w_i
    SplitRatios split;                       // s, see split_ratios()
};

struct StepResult {
    State next;
    StepFlows flows;
};

[[nodiscard]] inline StepResult step(const FreewayModel& model, const State& x, const Inflows& u,
                                     const Disturbance& d) {
    const std::size_t n = model.size();
    StepResult r;
    StepFlows& fl = r.flows;
    fl.split = split_ratios(model, x, u, d);
    fl.inflow.assign(n, 0.0);
    fl.outflow.assign(n, 0.0);
    fl.mainstream_outflow.assign(n, 0.0);
    fl.offramp_outflow.assign(n, 0.0);
    fl.ramp_inflow.assign(n, 0.0);
    fl.acceptance.assign(n, 1.0);

    std::vector<double> demand(n);
    for (std::size_t i = 0; i < n; ++i) demand[i] = model.demand(i, x[i]);

    r.next = State(n);
    for (std::size_t i = 0; i < n; ++i) {
        const CellParams& cell = model.cell(i);
        fl.outflow[i] = fl.split[i + 1] * demand[i];
        fl.mainstream_outflow[i] = (1.0 - cell.p) * fl.outflow[i];
        fl.offramp_outflow[i] = cell.p * fl.outflow[i];

        double arriving = u[i];
        double mainstream_in = 0.0;
        if (i > 0) {
            arriving += (1.0 - model.cell(i - 1).p) * demand[i - 1];
            mainstream_in = fl.split[i] * (1.0 - model.cell(i - 1).p) * demand[i - 1];
        }
        fl.inflow[i] = std::min(supply(cell, x[i]), arriving);
        fl.ramp_inflow[i] = std::max(0.0, fl.inflow[i] - mainstream_in);
        if (u[i] > 0.0) fl.acceptance[i] = std::min(1.0, fl.ramp_inflow[i] / u[i]);

        // x - f + c (a - x) <= a holds exactly; the clamp only absorbs rounding.
        r.next[i] = std::min(cell.a, x[i] - fl.outflow[i] + fl.inflow[i]);
    }
    return r;
}

struct Equilibrium {
    State x;
    std::vector<double> flow;  // f_i(x_i*)
};

/// Uncongested equilibrium for constant inflows: f_i(x_i*) equals the flow
/// arriving at cell i, every x_i* lies in (0, smooth_bound_i) and every strict
/// supply margin holds by more than the structural tolerance.
[[nodiscard]] inline Equilibrium equilibrium_from_inflows(const FreewayModel& model, const Inflows& u_star) {
    const std::size_t n = model.size();
    if (u_star.size() != n) throw PreconditionError("inflow vector length does not match the model");
    if (!(u_star[0] > 0.0)) throw PreconditionError("u*_1 must be positive");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(u_star[i] >= 0.0)) throw PreconditionError("inflows must be non-negative");
    }

    Equilibrium eq{State(n), std::vector<double>(n)};
    auto fail = [](std::size_t i, const std::string& why) {
        std::ostringstream os;
        os << "no uncongested equilibrium: cell " << i + 1 << " " << why;
        throw NoEquilibriumError(i + 1, os.str());
    };
    for (std::size_t i = 0; i < n; ++i) {
        const CellParams& cell = model.cell(i);
        const double upstream = i == 0 ? 0.0 : (1.0 - model.cell(i - 1).p) * eq.flow[i - 1];
        const double arriving = u_star[i] + upstream;
        if (arriving > model.demand_constants(i).critical_flow) {
            std::ostringstream os;
            os << "requires flow " << arriving << " above its capacity "
               << model.demand_constants(i).critical_flow;
            fail(i, os.str());
        }
        const double xi = invert_demand_increasing(cell.demand, arriving);
        if (!(xi < cell.demand.smooth_bound())) {
            std::ostringstream os;
            os << "equilibrium density " << xi << " not below the smooth bound " << cell.demand.smooth_bound();
            fail(i, os.str());
        }
        const double margin = supply(cell, xi) - arriving;
        if (!(margin > kStructuralTolerance)) {
            std::ostringstream os;
            os << "supply margin " << margin << " is not strictly positive";
            fail(i, os.str());
        }
        eq.x[i] = xi;
        eq.flow[i] = arriving;
    }
    return eq;
}

}  // namespace freeway

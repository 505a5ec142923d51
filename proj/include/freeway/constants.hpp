#pragma once

// Synthesis of every constant behind the globally stabilizing feedback: the
// drainage constant C, the free-flow box, the control set R with its floors,
// and the Lyapunov weights and gains that complete the certificate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "freeway/cell_vector.hpp"
#include "freeway/errors.hpp"
#include "freeway/model.hpp"

namespace freeway {

/// Backward recursion for the drainage constant. `r` holds the inflow bounds of
/// cells 2..n (size n-1). Returns Y_1..Y_n (0-based); C = Y_1 is the first entry.
[[nodiscard]] inline std::vector<double> drainage_recursion(const FreewayModel& model, std::span<const double> r) {
    const std::size_t n = model.size();
    if (r.size() + 1 != n) throw PreconditionError("drainage recursion needs n-1 inflow bounds");
    for (std::size_t k = 1; k < n; ++k) {
        const CellParams& cell = model.cell(k);
        const double rk = r[k - 1];
        if (!(rk >= 0.0) || !(rk < std::min(cell.q, cell.c * cell.a))) {
            std::ostringstream os;
            os << "inflow bound r_" << k + 1 << " = " << rk << " must lie in [0, min(q, c a))";
            throw PreconditionError(os.str());
        }
    }

    std::vector<double> Y(n);
    Y[n - 1] = model.demand_constants(n - 1).theta_lower;
    for (std::size_t k = n - 1; k >= 1; --k) {
        const CellParams& cell = model.cell(k);
        const CellParams& up = model.cell(k - 1);
        const double rk = r[k - 1];
        const double w = static_cast<double>(n - k);   // weight of cell k (n+1-k, 1-based)
        const double wu = w + 1.0;                     // weight of cell k-1
        const double exit_gain = 1.0 + up.p * w;
        const double through = 1.0 - up.p;

        const double l = std::min(1.0, (cell.c * cell.a - rk) /
                                           (2.0 * through * model.demand_constants(k - 1).critical_flow));
        const double by_ratio = exit_gain / wu * l * model.demand_constants(k - 1).theta_lower;
        const double by_jam = w * (cell.a - rk / cell.c) * Y[k] / (2.0 * w * cell.a + 2.0 * wu * up.a);
        const double by_capacity = (cell.q - rk) / through * exit_gain / (wu * up.a);
        Y[k - 1] = std::min({Y[k], by_ratio, by_jam, by_capacity});
    }
    return Y;
}

/// Drainage constant C of the weighted exit-flow lower bound (conservative).
[[nodiscard]] inline double estimate_C(const FreewayModel& model, std::span<const double> r) {
    return drainage_recursion(model, r).front();
}

/// Free-flow box (0, mu_1] x ... x (0, mu_n] around the equilibrium.
struct FreeFlowBox {
    std::vector<double> beta;
    std::vector<double> omega;  // strict supply margins at the equilibrium
    std::vector<double> mu;
};

[[nodiscard]] inline FreeFlowBox compute_beta_mu(const FreewayModel& model, const Inflows& u_star,
                                                 const Equilibrium& eq) {
    const std::size_t n = model.size();
    FreeFlowBox box{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};

    for (std::size_t i = 0; i < n; ++i) {
        const CellParams& cell = model.cell(i);
        const double upstream = i == 0 ? 0.0 : (1.0 - model.cell(i - 1).p) * eq.flow[i - 1];
        box.omega[i] = cell.c * (cell.a - eq.x[i]) - u_star[i] - upstream;
        const double capacity_margin = cell.q - u_star[i] - upstream;
        if (!(box.omega[i] > 0.0) || !(capacity_margin > 0.0)) {
            std::ostringstream os;
            os << "invalid equilibrium: supply margin fails at cell " << i + 1;
            throw PreconditionError(os.str());
        }
    }

    box.beta[n - 1] = model.cell(n - 1).demand.smooth_bound();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const CellParams& cell = model.cell(i);
        const double at_smooth = model.demand(i, cell.demand.smooth_bound());
        const double target = std::min(at_smooth, (model.cell(i + 1).q - u_star[i + 1]) / (1.0 - cell.p));
        box.beta[i] = invert_demand_increasing(cell.demand, target);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const CellParams& cell = model.cell(i);
        double mu = std::min(box.beta[i], eq.x[i] + box.omega[i] / (2.0 * cell.c));
        if (i + 1 < n) mu = std::min(mu, eq.x[i] + box.omega[i + 1] / (2.0 * (1.0 - cell.p)));
        if (!(mu > eq.x[i])) {
            std::ostringstream os;
            os << "invalid equilibrium: free-flow box collapses at cell " << i + 1;
            throw PreconditionError(os.str());
        }
        box.mu[i] = mu;
    }
    return box;
}

struct ControlSetOptions {
    /// Default floor b_i = floor_ratio * u_i*; shrunk automatically when infeasible.
    double floor_ratio = 0.05;
    /// Explicit floors by 0-based cell; used verbatim.
    std::map<std::size_t, double> floors;
    /// Fixed control set (0-based cells) to verify instead of searching.
    std::optional<std::vector<std::size_t>> candidate;
};

struct ControlSet {
    std::vector<std::size_t> members;  // 0-based, ascending
    std::vector<double> floor;         // b_i per cell; 0 outside the set
    double epsilon = 0.0;
    double flow_floor = 0.0;           // min_i ((n-i) p_i + 1) f_i(x_i*)
    double box_mass = 0.0;             // min_i (n+1-i) mu_i
    double uncontrolled_load = 0.0;    // sum over i not in R of (n+1-i) u_i*
    double flow_residual = 0.0;        // floored load minus flow_floor (<= 0)
    double drainage_residual = 0.0;    // floored load minus epsilon C box_mass (<= 0)

    [[nodiscard]] bool contains(std::size_t i) const {
        return std::binary_search(members.begin(), members.end(), i);
    }
};

namespace detail {

inline double cell_weight(std::size_t i, std::size_t n) { return static_cast<double>(n - i); }

struct DrainageBounds {
    double flow_floor;
    double box_mass;
};

inline DrainageBounds drainage_bounds(const FreewayModel& model, const Equilibrium& eq, const FreeFlowBox& box) {
    const std::size_t n = model.size();
    DrainageBounds b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < n; ++i) {
        const double exit_gain = static_cast<double>(n - 1 - i) * model.cell(i).p + 1.0;
        b.flow_floor = std::min(b.flow_floor, exit_gain * eq.flow[i]);
        b.box_mass = std::min(b.box_mass, cell_weight(i, n) * box.mu[i]);
    }
    return b;
}

inline double uncontrolled_load(const Inflows& u_star, const std::vector<std::size_t>& members) {
    const std::size_t n = u_star.size();
    double load = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::binary_search(members.begin(), members.end(), i)) load += cell_weight(i, n) * u_star[i];
    }
    return load;
}

// Strict version of the two control-set inequalities.
inline bool control_set_admissible(double load, double C, const DrainageBounds& b) {
    return load < b.flow_floor && load < C * b.box_mass;
}

}  // namespace detail

/// Chooses (or verifies) the set of inflows that must be actuated, their floors
/// and the slack epsilon. Throws InfeasibleControlSetError with both residuals.
[[nodiscard]] inline ControlSet select_R(const FreewayModel& model, const Inflows& u_star, const Equilibrium& eq,
                                         double C, const FreeFlowBox& box, const ControlSetOptions& options = {}) {
    const std::size_t n = model.size();
    if (!(C > 0.0)) throw PreconditionError("drainage constant C must be positive");
    const auto bounds = detail::drainage_bounds(model, eq, box);

    std::vector<std::size_t> members;
    if (options.candidate) {
        members = *options.candidate;
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        for (std::size_t i : members) {
            if (i >= n || !(u_star[i] > 0.0)) {
                std::ostringstream os;
                os << "control set member " << i + 1 << " has no positive target inflow";
                throw PreconditionError(os.str());
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            if (u_star[i] > 0.0) members.push_back(i);
        }
        // Downstream inflows carry the smallest weights, so they are tried first.
        for (auto it = members.rbegin(); it != members.rend();) {
            std::vector<std::size_t> trial;
            std::copy_if(members.begin(), members.end(), std::back_inserter(trial),
                         [&](std::size_t j) { return j != *it; });
            if (detail::control_set_admissible(detail::uncontrolled_load(u_star, trial), C, bounds)) {
                const std::size_t dropped = *it;
                members = std::move(trial);
                it = std::make_reverse_iterator(std::lower_bound(members.begin(), members.end(), dropped));
            } else {
                ++it;
            }
        }
    }

    ControlSet cs;
    cs.members = members;
    cs.floor.assign(n, 0.0);
    cs.flow_floor = bounds.flow_floor;
    cs.box_mass = bounds.box_mass;
    cs.uncontrolled_load = detail::uncontrolled_load(u_star, members);

    const double drainage_cap = C * bounds.box_mass;
    if (!detail::control_set_admissible(cs.uncontrolled_load, C, bounds)) {
        std::ostringstream os;
        os << "infeasible control set: uncontrolled load " << cs.uncontrolled_load << " must stay below "
           << bounds.flow_floor << " (equilibrium exit flow) and " << drainage_cap << " (C times box mass)";
        throw InfeasibleControlSetError(os.str(), cs.uncontrolled_load - bounds.flow_floor,
                                        cs.uncontrolled_load - drainage_cap);
    }

    double fixed_load = 0.0;
    double ratio_mass = 0.0;
    for (std::size_t i : members) {
        if (auto it = options.floors.find(i); it != options.floors.end()) {
            if (!(it->second > 0.0 && it->second < u_star[i])) {
                std::ostringstream os;
                os << "floor b_" << i + 1 << " = " << it->second << " must lie in (0, u*)";
                throw PreconditionError(os.str());
            }
            cs.floor[i] = it->second;
            fixed_load += detail::cell_weight(i, n) * it->second;
        } else {
            ratio_mass += detail::cell_weight(i, n) * u_star[i];
        }
    }
    if (ratio_mass > 0.0) {
        if (!(options.floor_ratio > 0.0 && options.floor_ratio < 1.0)) {
            throw PreconditionError("floor ratio must lie in (0, 1)");
        }
        const double room = std::min(bounds.flow_floor, drainage_cap) - cs.uncontrolled_load - fixed_load;
        double ratio = options.floor_ratio;
        if (room > 0.0 && ratio * ratio_mass >= room) ratio = 0.5 * room / ratio_mass;
        for (std::size_t i : members) {
            if (!options.floors.contains(i)) cs.floor[i] = ratio * u_star[i];
        }
    }

    double load = cs.uncontrolled_load;
    for (std::size_t i : members) load += detail::cell_weight(i, n) * cs.floor[i];
    cs.epsilon = std::max(load / bounds.flow_floor, load / drainage_cap);
    cs.flow_residual = load - bounds.flow_floor;
    cs.drainage_residual = load - cs.epsilon * drainage_cap;
    if (!(cs.epsilon < 1.0)) {
        std::ostringstream os;
        os << "infeasible control set: floors give epsilon = " << cs.epsilon << " >= 1";
        throw InfeasibleControlSetError(os.str(), cs.flow_residual, load - drainage_cap);
    }
    return cs;
}

/// Uncongested contraction rate L(sigma) = max(lambda_n, max_i lambda_i + sigma G_i (1 - p_i)).
[[nodiscard]] inline double contraction_rate(const FreewayModel& model, double sigma) {
    const std::size_t n = model.size();
    double L = model.demand_constants(n - 1).lambda;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& dc = model.demand_constants(i);
        L = std::max(L, dc.lambda + sigma * dc.G * (1.0 - model.cell(i).p));
    }
    return L;
}

/// sup{sigma in (0, 1] : L(sigma) < 1}.
[[nodiscard]] inline double sigma_supremum(const FreewayModel& model) {
    double sup = 1.0;
    for (std::size_t i = 0; i + 1 < model.size(); ++i) {
        const auto& dc = model.demand_constants(i);
        const double slope = dc.G * (1.0 - model.cell(i).p);
        if (slope > 0.0) sup = std::min(sup, (1.0 - dc.lambda) / slope);
    }
    return sup;
}

struct SynthesisOptions {
    std::optional<double> sigma;  // default: 0.9 * sigma_supremum
    double eta = 0.5;             // tau = eta * tau_star
    ControlSetOptions control;
};

/// Every constant of the stabilizer and its Lyapunov certificate.
/// Vectors are 0-based by cell; gamma and b are zero outside R.
struct StabilizerCertificate {
    State x_star;
    Inflows u_star;
    double sigma = 0.0;
    double L = 0.0;
    double C = 0.0;
    std::vector<double> beta;
    std::vector<double> omega;
    std::vector<double> mu;
    std::vector<std::size_t> R;
    std::vector<double> b;
    double epsilon = 0.0;
    double h = 0.0;
    double Q = 0.0;
    double penalty_slope = 0.0;
    double tau_star = 0.0;
    double tau = 0.0;
    std::vector<double> gamma;
    double weight_A = 0.0;
    double weight_K = 0.0;
    double K1 = 0.0;
    double K2 = 0.0;
    /// 1 - L_tilde, kept separately: for realistic models it is far below the
    /// double spacing at 1, so L_tilde itself rounds to 1.
    double contraction_gap = 0.0;

    [[nodiscard]] double L_tilde() const noexcept { return 1.0 - contraction_gap; }
    /// log(L_tilde) without cancellation.
    [[nodiscard]] double log_L_tilde() const noexcept { return std::log1p(-contraction_gap); }
};

[[nodiscard]] inline StabilizerCertificate synthesize(const FreewayModel& model, const Inflows& u_star,
                                                      const SynthesisOptions& options = {}) {
    const std::size_t n = model.size();
    const Equilibrium eq = equilibrium_from_inflows(model, u_star);

    StabilizerCertificate cert;
    cert.x_star = eq.x;
    cert.u_star = u_star;

    std::vector<double> r(u_star.begin() + 1, u_star.end());
    cert.C = estimate_C(model, r);

    FreeFlowBox box = compute_beta_mu(model, u_star, eq);
    cert.beta = box.beta;
    cert.omega = box.omega;
    cert.mu = box.mu;

    if (options.sigma) {
        cert.sigma = *options.sigma;
        if (!(cert.sigma > 0.0 && cert.sigma <= 1.0)) throw SynthesisError("sigma must lie in (0, 1]");
    } else {
        cert.sigma = 0.9 * sigma_supremum(model);
    }
    cert.L = contraction_rate(model, cert.sigma);
    if (!(cert.L < 1.0)) {
        std::ostringstream os;
        os << "sigma = " << cert.sigma << " gives contraction rate L = " << cert.L << " >= 1";
        throw SynthesisError(os.str());
    }

    const ControlSet cs = select_R(model, u_star, eq, cert.C, box, options.control);
    cert.R = cs.members;
    cert.b = cs.floor;
    cert.epsilon = cs.epsilon;

    const double sigma = cert.sigma;
    std::vector<double> sigma_pow(n);
    for (std::size_t i = 0; i < n; ++i) sigma_pow[i] = std::pow(sigma, static_cast<double>(i + 1));

    cert.h = std::numeric_limits<double>::infinity();
    double worst_inverse_weight = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cert.h = std::min(cert.h, sigma_pow[i] * (cert.mu[i] - eq.x[i]));
        worst_inverse_weight = std::max(worst_inverse_weight, detail::cell_weight(i, n) / sigma_pow[i]);
    }

    double weighted_target = 0.0;
    for (std::size_t i = 0; i < n; ++i) weighted_target += detail::cell_weight(i, n) * u_star[i];
    const double occupancy_star = sum_of_prefix_sums(eq.x.view());
    cert.Q = std::max(cs.box_mass, (1.0 - cert.C) * occupancy_star + (1.0 - cert.C) * cert.h * worst_inverse_weight +
                                       weighted_target);
    cert.penalty_slope = (cert.Q - cert.epsilon * cs.box_mass) / cert.h;

    double controllable = 0.0;
    for (std::size_t i : cert.R) controllable += detail::cell_weight(i, n) * (u_star[i] - cert.b[i]);
    cert.tau_star = std::min(cert.h, controllable / (cert.penalty_slope * cert.L));
    if (!(cert.tau_star > 0.0)) throw SynthesisError("gain threshold tau* is not positive");
    if (!(options.eta > 0.0 && options.eta < 1.0)) throw SynthesisError("eta must lie in (0, 1)");
    cert.tau = options.eta * cert.tau_star;

    cert.gamma.assign(n, 0.0);
    double gain_mass = 0.0;
    for (std::size_t i : cert.R) {
        cert.gamma[i] = (u_star[i] - cert.b[i]) / cert.tau;
        gain_mass += sigma_pow[i] * cert.gamma[i];
    }
    cert.weight_A = 1.0 + gain_mass / (1.0 - cert.L);

    double spread = 0.0;
    double headroom = 0.0;
    double sigma_sum = 0.0;
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = model.cell(i).a;
        spread += sigma_pow[i] * std::max(a - eq.x[i], eq.x[i]);
        headroom += sigma_pow[i] * (a - eq.x[i]);
        sigma_sum += sigma_pow[i];
        weight_sum += detail::cell_weight(i, n);
    }
    cert.weight_K = (spread + cert.weight_A * headroom - (cert.weight_A + cert.L) * cert.h) /
                    ((1.0 - cert.epsilon) * cert.C * cs.box_mass);

    cert.K1 = sigma_pow[n - 1];
    cert.K2 = (1.0 + cert.weight_A + cert.weight_K * cert.penalty_slope) * sigma_sum + cert.weight_K * weight_sum;
    cert.contraction_gap = (1.0 - cert.L) * cert.K1 / cert.K2;

    if (!(cert.weight_A > 1.0) || !(cert.weight_K > 0.0) || !(cert.penalty_slope > 0.0) ||
        !(cert.contraction_gap > 0.0 && cert.contraction_gap < 1.0)) {
        throw SynthesisError("synthesized certificate violates its positivity constraints");
    }
    return cert;
}

}  // namespace freeway

#pragma once

// Randomized property checks spanning the model, the synthesized constants and
// the closed loop. Every check reports its sample count, failures, the worst
// margin seen and a witness for the first failure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "freeway/constants.hpp"
#include "freeway/controllers.hpp"
#include "freeway/lyapunov.hpp"
#include "freeway/model.hpp"
#include "freeway/simulation.hpp"

namespace freeway {

struct PropertyResult {
    std::string name;
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_margin = std::numeric_limits<double>::infinity();  // negative means violated
    std::string witness;

    [[nodiscard]] bool passed() const noexcept { return failures == 0; }
};

struct SuiteReport {
    std::vector<PropertyResult> results;

    [[nodiscard]] bool passed() const {
        return std::all_of(results.begin(), results.end(), [](const PropertyResult& r) { return r.passed(); });
    }
    [[nodiscard]] const PropertyResult* find(const std::string& name) const {
        for (const auto& r : results) {
            if (r.name == name) return &r;
        }
        return nullptr;
    }
};

struct PropertyOptions {
    std::size_t samples = 10000;
    std::uint64_t seed = 42;
    std::size_t envelope_runs = 100;
    std::size_t envelope_horizon = 200;
};

namespace detail {

inline std::string describe(const State& x) {
    std::ostringstream os;
    os.precision(17);
    os << "x = [";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "]";
    return os.str();
}

class PropertyProbe {
public:
    explicit PropertyProbe(std::string name) { result_.name = std::move(name); }

    // margin >= -tolerance passes.
    void record(double margin, double tolerance, const State& x) {
        ++result_.checked;
        result_.worst_margin = std::min(result_.worst_margin, margin);
        if (!(margin >= -tolerance)) {
            if (result_.failures++ == 0) {
                std::ostringstream os;
                os.precision(17);
                os << describe(x) << ", margin " << margin;
                result_.witness = os.str();
            }
        }
    }

    [[nodiscard]] PropertyResult take() { return std::move(result_); }

private:
    PropertyResult result_;
};

class TupleSampler {
public:
    TupleSampler(const FreewayModel& model, std::uint64_t seed) : model_(&model), rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    // Uniform on (0, bound_i].
    State state_below(const std::vector<double>& bound) {
        State x(bound.size());
        for (std::size_t i = 0; i < bound.size(); ++i) {
            x[i] = std::max(std::numeric_limits<double>::min(), bound[i] * (1.0 - uniform(0.0, 1.0)));
        }
        return x;
    }

    State state_in_S() { return state_below(jam()); }

    Disturbance disturbance() {
        Disturbance d(model_->size() - 1);
        for (double& di : d) di = uniform(0.0, 1.0);
        return d;
    }

    // u_1 in (0, hi_1], u_i in [0, hi_i].
    Inflows inflows_below(const Inflows& hi) {
        Inflows u(hi.size());
        for (std::size_t i = 0; i < hi.size(); ++i) u[i] = hi[i] * (i == 0 ? 1.0 - uniform(0.0, 1.0) : uniform(0.0, 1.0));
        return u;
    }

    std::vector<double> jam() const {
        std::vector<double> a(model_->size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = model_->cell(i).a;
        return a;
    }

private:
    const FreewayModel* model_;
    std::mt19937_64 rng_;
};

inline double relative_tolerance(double v) { return 1e-9 * std::max(1.0, std::abs(v)); }

}  // namespace detail

/// sum_i (1 + p_i (n - i)) s_{i+1} f_i(x_i), the weighted drainage of one step.
[[nodiscard]] inline double weighted_drainage(const FreewayModel& model, const State& x, const SplitRatios& s) {
    const std::size_t n = model.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double gain = 1.0 + model.cell(i).p * static_cast<double>(n - 1 - i);
        total += gain * s[i + 1] * model.demand(i, x[i]);
    }
    return total;
}

/// Conservation identity for the weighted occupancy, checked to 1e-9 absolute.
[[nodiscard]] inline PropertyResult check_conservation(const FreewayModel& model, const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed);
    detail::PropertyProbe probe("conservation");
    const std::size_t n = model.size();
    Inflows hi(n);
    for (std::size_t i = 0; i < n; ++i) hi[i] = model.cell(i).q;
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = rng.state_in_S();
        const Inflows u = rng.inflows_below(hi);
        const Disturbance d = rng.disturbance();
        const StepResult r = step(model, x, u, d);
        double external = 0.0;
        for (std::size_t i = 0; i < n; ++i) external += static_cast<double>(n - i) * r.flows.ramp_inflow[i];
        const double lhs = sum_of_prefix_sums(r.next.view());
        const double rhs = sum_of_prefix_sums(x.view()) + external - weighted_drainage(model, x, r.flows.split);
        probe.record(-std::abs(lhs - rhs), 1e-9, x);
    }
    return probe.take();
}

/// Weighted drainage lower bound and the occupancy inequality it implies, for
/// u_i in [0, r_i] (i >= 2).
[[nodiscard]] inline std::vector<PropertyResult> check_drainage(const FreewayModel& model, double C,
                                                                const Inflows& r_box, const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 1);
    detail::PropertyProbe lower("drainage_lower_bound");
    detail::PropertyProbe occupancy("occupancy_decay");
    const std::size_t n = model.size();
    Inflows hi = r_box;
    hi[0] = model.cell(0).q;
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = rng.state_in_S();
        const Inflows u = rng.inflows_below(hi);
        const Disturbance d = rng.disturbance();
        const StepResult r = step(model, x, u, d);
        const double occ = sum_of_prefix_sums(x.view());
        const double drain = weighted_drainage(model, x, r.flows.split);
        lower.record(drain - C * occ, detail::relative_tolerance(drain), x);
        double load = 0.0;
        for (std::size_t i = 0; i < n; ++i) load += static_cast<double>(n - i) * u[i];
        const double bound = (1.0 - C) * occ + load;
        occupancy.record(bound - sum_of_prefix_sums(r.next.view()), detail::relative_tolerance(bound), x);
    }
    return {lower.take(), occupancy.take()};
}

/// z - f(z) is non-decreasing on [0, a] for every cell (grid plus breakpoints).
[[nodiscard]] inline PropertyResult check_monotone_excess(const FreewayModel& model, const PropertyOptions& opt) {
    detail::PropertyProbe probe("monotone_excess");
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& fd = model.cell(i).demand;
        std::vector<double> grid;
        for (std::size_t k = 0; k <= opt.samples; ++k) {
            grid.push_back(fd.jam_density() * static_cast<double>(k) / static_cast<double>(opt.samples));
        }
        for (const auto& bp : fd.breakpoints()) grid.push_back(bp.density);
        std::sort(grid.begin(), grid.end());
        double prev = 0.0;
        for (double z : grid) {
            const double g = z - eval_demand(fd, z);
            State where(model.size(), 0.0);
            where[i] = z;
            probe.record(g - prev, 1e-12 * fd.jam_density(), where);
            prev = g;
        }
    }
    return probe.take();
}

/// 0 < x+ <= a, and no realized inflow exceeds the receiving supply.
[[nodiscard]] inline PropertyResult check_state_invariance(const FreewayModel& model, const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 2);
    detail::PropertyProbe probe("state_invariance");
    const std::size_t n = model.size();
    Inflows hi(n);
    for (std::size_t i = 0; i < n; ++i) hi[i] = 2.0 * model.cell(i).q;
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = rng.state_in_S();
        const StepResult r = step(model, x, rng.inflows_below(hi), rng.disturbance());
        double margin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const CellParams& cell = model.cell(i);
            margin = std::min({margin, r.next[i], cell.a - r.next[i], supply(cell, x[i]) - r.flows.inflow[i]});
            if (!(r.next[i] > 0.0)) margin = std::min(margin, -1.0);
        }
        probe.record(margin, 0.0, x);
    }
    return probe.take();
}

/// x* is a fixed point of the step for every d in {0, 0.5, 1}^{n-1}.
[[nodiscard]] inline PropertyResult check_fixed_point(const FreewayModel& model, const State& x_star,
                                                      const Inflows& u_star) {
    detail::PropertyProbe probe("fixed_point");
    for (const auto& d : disturbance_grid(model.size())) {
        probe.record(-max_distance(step(model, x_star, u_star, d).next, x_star), 1e-9, x_star);
    }
    return probe.take();
}

/// Inside the free-flow box with u <= u*, the step equals the uncongested cascade.
[[nodiscard]] inline PropertyResult check_free_flow_reduction(const FreewayModel& model,
                                                              const StabilizerCertificate& cert,
                                                              const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 3);
    detail::PropertyProbe probe("free_flow_reduction");
    const std::size_t n = model.size();
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = rng.state_below(cert.mu);
        const Inflows u = rng.inflows_below(cert.u_star);
        const State next = step(model, x, u, rng.disturbance()).next;
        double gap = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double upstream = i == 0 ? 0.0 : (1.0 - model.cell(i - 1).p) * model.demand(i - 1, x[i - 1]);
            const double cascade = x[i] - model.demand(i, x[i]) + (u[i] + upstream);
            gap = std::max(gap, std::abs(next[i] - cascade));
        }
        probe.record(-gap, 0.0, x);
    }
    return probe.take();
}

/// Xi(x+) <= L Xi(x) inside the free-flow box with u <= u*.
[[nodiscard]] inline PropertyResult check_box_contraction(const FreewayModel& model,
                                                          const StabilizerCertificate& cert,
                                                          const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 4);
    detail::PropertyProbe probe("box_contraction");
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = rng.state_below(cert.mu);
        const Inflows u = rng.inflows_below(cert.u_star);
        const double before = cert.L * weighted_excess(x, cert.x_star, cert.sigma);
        const double after = weighted_excess(step(model, x, u, rng.disturbance()).next, cert.x_star, cert.sigma);
        probe.record(before - after, detail::relative_tolerance(before), x);
    }
    return probe.take();
}

/// P(x+) >= P(x) on S with u <= u*, over the disturbance grid.
[[nodiscard]] inline PropertyResult check_penalty_monotone(const FreewayModel& model,
                                                           const StabilizerCertificate& cert,
                                                           const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 5);
    detail::PropertyProbe probe("penalty_monotone");
    const auto lf = LyapunovFunction::from_certificate(cert);
    const auto grid = disturbance_grid(model.size());
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = k % 2 == 0 ? rng.state_in_S() : rng.state_below(cert.mu);
        const Inflows u = rng.inflows_below(cert.u_star);
        const double p0 = lf.penalty(x);
        for (const auto& d : grid) {
            probe.record(lf.penalty(step(model, x, u, d).next) - p0, detail::relative_tolerance(p0), x);
        }
    }
    return probe.take();
}

/// With u_i = 0 for i >= 2 the step is bitwise independent of d.
[[nodiscard]] inline PropertyResult check_disturbance_independence(const FreewayModel& model,
                                                                   const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 6);
    detail::PropertyProbe probe("disturbance_independence");
    const std::size_t n = model.size();
    const auto grid = disturbance_grid(n);
    for (std::size_t k = 0; k < opt.samples; ++k) {
        const State x = rng.state_in_S();
        Inflows u(n, 0.0);
        u[0] = model.cell(0).q * (1.0 - rng.uniform(0.0, 1.0));
        const State reference = step(model, x, u, rng.disturbance()).next;
        bool same = true;
        for (const auto& d : grid) same = same && step(model, x, u, d).next == reference;
        probe.record(same ? 0.0 : -1.0, 0.0, x);
    }
    return probe.take();
}

/// Closed-loop runs of the synthesized stabilizer from random initial states
/// under i.i.d. disturbances: V(x(t)) <= L_tilde^t V(x(0)) and
/// |x(t) - x*| <= (K2 / K1) L_tilde^t |x(0) - x*|.
[[nodiscard]] inline PropertyResult check_envelope(const FreewayModel& model, const StabilizerCertificate& cert,
                                                   const PropertyOptions& opt) {
    detail::TupleSampler rng(model, opt.seed + 7);
    detail::PropertyProbe probe("trajectory_envelope");
    const auto lf = LyapunovFunction::from_certificate(cert);
    const auto fb = StabilizingFeedback::from_certificate(cert);
    for (std::size_t run = 0; run < opt.envelope_runs; ++run) {
        const State x0 = rng.state_in_S();
        SimulationOptions so;
        so.horizon = opt.envelope_horizon;
        so.disturbance = DisturbancePolicy::iid(opt.seed + 1000 + run);
        so.target = cert.x_star;
        so.lyapunov = lf;
        const RunRecord rec = simulate(model, fb, x0, so);
        const double d0 = rec.distance.front();
        const double v0 = rec.V.front();
        for (std::size_t t = 0; t < rec.x.size(); ++t) {
            const double decay = std::exp(static_cast<double>(t) * cert.log_L_tilde());
            const double v_bound = decay * v0;
            const double x_bound = cert.K2 / cert.K1 * decay * d0;
            probe.record(v_bound - rec.V[t], detail::relative_tolerance(v_bound), rec.x[t]);
            probe.record(x_bound - rec.distance[t], detail::relative_tolerance(x_bound), rec.x[t]);
        }
    }
    return probe.take();
}

/// Runs every property against one model and certificate.
[[nodiscard]] inline SuiteReport property_suite(const FreewayModel& model, const StabilizerCertificate& cert,
                                                const PropertyOptions& opt = {}) {
    SuiteReport report;
    report.results.push_back(check_conservation(model, opt));
    Inflows r_box = cert.u_star;
    for (auto& res : check_drainage(model, cert.C, r_box, opt)) report.results.push_back(std::move(res));
    report.results.push_back(check_monotone_excess(model, opt));
    report.results.push_back(check_state_invariance(model, opt));
    report.results.push_back(check_fixed_point(model, cert.x_star, cert.u_star));
    report.results.push_back(check_free_flow_reduction(model, cert, opt));
    report.results.push_back(check_box_contraction(model, cert, opt));
    report.results.push_back(check_penalty_monotone(model, cert, opt));
    report.results.push_back(check_disturbance_independence(model, opt));
    report.results.push_back(check_envelope(model, cert, opt));
    return report;
}

}  // namespace freeway

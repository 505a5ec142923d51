#pragma once

// Inflow controllers behind one contract: start(first measurement), then
// command(measured state, t) -> full inflow vector, with an optional
// observe(realized flows) hook after every step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "freeway/cell_vector.hpp"
#include "freeway/constants.hpp"
#include "freeway/errors.hpp"
#include "freeway/model.hpp"

namespace freeway {

/// Weighted positive excess sum sigma^i max(0, x_i - x_i*), 1-based exponent.
[[nodiscard]] inline double weighted_excess(const State& x, const State& x_star, double sigma) {
    double total = 0.0;
    double w = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        w *= sigma;
        total += w * std::max(0.0, x[i] - x_star[i]);
    }
    return total;
}

/// Open loop: the same inflow vector at every step.
struct ConstantInflow {
    Inflows u;

    void start(const State&) {}
    [[nodiscard]] Inflows command(const State&, std::size_t) const { return u; }
    void observe(const StepFlows&) {}
};

/// u_i = max(u_i* - gamma_i Xi(x), b_i) on the control set, u_i* elsewhere.
class StabilizingFeedback {
public:
    /// Practitioner form: sigma, gains and floors given directly. `R` is 0-based;
    /// `gamma` and `floor` are indexed by cell (entries outside R are ignored).
    StabilizingFeedback(State x_star, Inflows u_star, double sigma, std::vector<std::size_t> R,
                        std::vector<double> gamma, std::vector<double> floor)
        : x_star_(std::move(x_star)),
          u_star_(std::move(u_star)),
          sigma_(sigma),
          R_(std::move(R)),
          gamma_(std::move(gamma)),
          floor_(std::move(floor)) {
        const std::size_t n = x_star_.size();
        if (u_star_.size() != n || gamma_.size() != n || floor_.size() != n) {
            throw PreconditionError("stabilizer vectors must all have one entry per cell");
        }
        if (!(sigma_ > 0.0 && sigma_ <= 1.0)) throw PreconditionError("sigma must lie in (0, 1]");
        std::sort(R_.begin(), R_.end());
        for (std::size_t i : R_) {
            if (i >= n) throw PreconditionError("control set index out of range");
            if (!(gamma_[i] > 0.0)) throw PreconditionError("stabilizer gains must be positive");
            if (!(floor_[i] > 0.0 && floor_[i] < u_star_[i])) {
                throw PreconditionError("stabilizer floors must lie in (0, u*)");
            }
        }
    }

    [[nodiscard]] static StabilizingFeedback from_certificate(const StabilizerCertificate& cert) {
        return {cert.x_star, cert.u_star, cert.sigma, cert.R, cert.gamma, cert.b};
    }

    [[nodiscard]] double xi(const State& x) const { return weighted_excess(x, x_star_, sigma_); }

    [[nodiscard]] Inflows k_feedback(const State& x) const {
        Inflows u = u_star_;
        if (R_.empty()) return u;
        const double excess = xi(x);
        for (std::size_t i : R_) u[i] = std::max(u_star_[i] - gamma_[i] * excess, floor_[i]);
        return u;
    }

    void start(const State&) {}
    [[nodiscard]] Inflows command(const State& x, std::size_t) const { return k_feedback(x); }
    void observe(const StepFlows&) {}

    [[nodiscard]] const State& x_star() const noexcept { return x_star_; }
    [[nodiscard]] const Inflows& u_star() const noexcept { return u_star_; }
    [[nodiscard]] double sigma() const noexcept { return sigma_; }
    [[nodiscard]] const std::vector<std::size_t>& control_set() const noexcept { return R_; }
    [[nodiscard]] const std::vector<double>& gamma() const noexcept { return gamma_; }
    [[nodiscard]] const std::vector<double>& floor() const noexcept { return floor_; }

private:
    State x_star_;
    Inflows u_star_;
    double sigma_;
    std::vector<std::size_t> R_;
    std::vector<double> gamma_;
    std::vector<double> floor_;
};

struct RlbPiParams {
    double Kp = 5.0 / 18.0;
    double KI = 1.0 / 90.0;
    double headroom = 4.0;
    double smoothing = 0.5;
    double u_min = 0.2;
    double u_max = 25.0;
    double u_init = 20.0;
    std::vector<double> setpoints;  // one critical density per cell
    /// Feed the realized first-cell inflow back as u(t-1) instead of the command.
    bool use_realized_previous_inflow = false;

    void check(std::size_t n) const {
        if (setpoints.size() != n) throw PreconditionError("RLB PI needs one setpoint per cell");
        if (!(Kp > 0.0 && KI > 0.0 && headroom > 0.0)) throw PreconditionError("RLB PI gains must be positive");
        if (!(smoothing > 0.0 && smoothing < 1.0)) throw PreconditionError("RLB PI smoothing must lie in (0, 1)");
        if (!(u_min > 0.0 && u_min < u_max)) throw PreconditionError("RLB PI needs 0 < u_min < u_max");
    }
};

struct RlbPiState {
    std::vector<double> v;
    std::vector<double> v_sm;
    double u_prev = 0.0;
    State x_prev;
    std::size_t selected = 0;  // 0-based index of the regulator chosen last
};

[[nodiscard]] inline RlbPiState rlb_init(const RlbPiParams& params, const State& x0, double u_init) {
    const std::size_t n = x0.size();
    (void)params;
    return RlbPiState{std::vector<double>(n, u_init), std::vector<double>(n, u_init), u_init, x0, 0};
}

/// Smallest index attaining the minimum.
[[nodiscard]] inline std::size_t argmin_first(std::span<const double> values) {
    return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
}

/// One update of the parallel bounded PI regulators; returns the command for u_1.
[[nodiscard]] inline std::pair<double, RlbPiState> rlb_step(const RlbPiParams& params, RlbPiState state,
                                                            const State& x_meas, const FreewayModel& model) {
    const CellParams& first = model.cell(0);
    const double upper =
        std::min({params.u_max, std::min({first.q, first.c * (first.a - state.x_prev[0]), state.u_prev}) +
                                    params.headroom});
    for (std::size_t i = 0; i < x_meas.size(); ++i) {
        const double pi = state.v[i] - params.Kp * (x_meas[i] - state.x_prev[i]) +
                          params.KI * (params.setpoints[i] - x_meas[i]);
        state.v[i] = std::min(upper, std::max(params.u_min, pi));
        state.v_sm[i] = params.smoothing * state.v[i] + (1.0 - params.smoothing) * state.v_sm[i];
    }
    state.selected = argmin_first(state.v_sm);
    const double u = state.v[state.selected];
    state.x_prev = x_meas;
    state.u_prev = u;
    return {u, std::move(state)};
}

/// RLB PI on the first inflow; the remaining inflows are held at `other`.
class RlbPiController {
public:
    RlbPiController(const FreewayModel& model, RlbPiParams params, Inflows other)
        : model_(&model), params_(std::move(params)), other_(std::move(other)) {
        params_.check(model.size());
        if (other_.size() != model.size()) throw PreconditionError("RLB PI pass-through inflows have wrong length");
    }

    /// x(-1) is taken equal to the first measurement.
    void start(const State& x_meas) { state_ = rlb_init(params_, x_meas, params_.u_init); }

    [[nodiscard]] Inflows command(const State& x_meas, std::size_t) {
        if (state_.x_prev.size() == 0) start(x_meas);
        auto [u1, next] = rlb_step(params_, std::move(state_), x_meas, *model_);
        state_ = std::move(next);
        Inflows u = other_;
        u[0] = u1;
        return u;
    }

    void observe(const StepFlows& flows) {
        if (params_.use_realized_previous_inflow) state_.u_prev = flows.ramp_inflow[0];
    }

    [[nodiscard]] const RlbPiParams& params() const noexcept { return params_; }
    [[nodiscard]] const RlbPiState& state() const noexcept { return state_; }

private:
    const FreewayModel* model_;
    RlbPiParams params_;
    Inflows other_;
    RlbPiState state_;
};

using Controller = std::variant<ConstantInflow, StabilizingFeedback, RlbPiController>;

inline void controller_start(Controller& c, const State& x_meas) {
    std::visit([&](auto& ctl) { ctl.start(x_meas); }, c);
}

[[nodiscard]] inline Inflows controller_command(Controller& c, const State& x_meas, std::size_t t) {
    return std::visit([&](auto& ctl) { return ctl.command(x_meas, t); }, c);
}

inline void controller_observe(Controller& c, const StepFlows& flows) {
    std::visit([&](auto& ctl) { ctl.observe(flows); }, c);
}

}  // namespace freeway

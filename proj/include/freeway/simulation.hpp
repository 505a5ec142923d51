#pragma once

// Closed- and open-loop simulation: disturbance policies, the measurement-error
// model, run records, the exiting-vehicles metric and CSV export.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "freeway/cell_vector.hpp"
#include "freeway/controllers.hpp"
#include "freeway/errors.hpp"
#include "freeway/lyapunov.hpp"
#include "freeway/model.hpp"

namespace freeway {

struct DisturbancePolicy {
    enum class Kind { constant, iid_uniform, grid_adversarial };
    Kind kind = Kind::constant;
    double value = 0.5;       // constant level
    std::uint64_t seed = 0;   // iid stream
    std::vector<double> levels{0.0, 0.5, 1.0};  // adversarial grid per component

    [[nodiscard]] static DisturbancePolicy constant(double v = 0.5) { return {Kind::constant, v, 0, {0.0, 0.5, 1.0}}; }
    [[nodiscard]] static DisturbancePolicy iid(std::uint64_t seed) { return {Kind::iid_uniform, 0.5, seed, {0.0, 0.5, 1.0}}; }
    [[nodiscard]] static DisturbancePolicy adversarial() { return {Kind::grid_adversarial, 0.5, 0, {0.0, 0.5, 1.0}}; }
};

struct MeasurementError {
    enum class Direction { cosine, sphere };
    double magnitude = 0.0;  // A
    Direction direction = Direction::cosine;
    double omega = 0.0;      // rad/step, cosine direction only
    std::uint64_t seed = 0;  // sphere direction only
};

/// Stateful source of measurement errors (the sphere direction draws from an RNG).
class MeasurementModel {
public:
    explicit MeasurementModel(MeasurementError err) : err_(err), rng_(err.seed) {}

    /// Unit error direction at time t.
    [[nodiscard]] std::vector<double> direction(std::size_t n, std::size_t t) {
        std::vector<double> e(n);
        if (err_.direction == MeasurementError::Direction::cosine) {
            const double v = std::cos(err_.omega * static_cast<double>(t)) / std::sqrt(static_cast<double>(n));
            std::fill(e.begin(), e.end(), v);
            return e;
        }
        std::normal_distribution<double> gauss(0.0, 1.0);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& ei : e) {
                ei = gauss(rng_);
                norm += ei * ei;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& ei : e) ei /= norm;
        return e;
    }

    /// Projection of x + A e(t) onto the closure of S.
    [[nodiscard]] State measure(const State& x, std::size_t t, const FreewayModel& model) {
        if (err_.magnitude == 0.0) return x;
        const auto e = direction(x.size(), t);
        State xt(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xt[i] = std::clamp(x[i] + err_.magnitude * e[i], 0.0, model.cell(i).a);
        }
        return xt;
    }

    [[nodiscard]] const MeasurementError& error() const noexcept { return err_; }

private:
    MeasurementError err_;
    std::mt19937_64 rng_;
};

/// Stateless convenience for the deterministic cosine direction.
[[nodiscard]] inline State measure(const State& x, std::size_t t, const MeasurementError& err,
                                   const FreewayModel& model) {
    MeasurementModel m(err);
    return m.measure(x, t, model);
}

struct SimulationOptions {
    std::size_t horizon = 200;
    DisturbancePolicy disturbance;
    MeasurementError measurement;
    std::optional<State> target;              // distance series reference (usually x*)
    std::optional<LyapunovFunction> lyapunov;  // V series and adversarial disturbances
};

/// Row t holds x(t), the measurement, the command and d(t) applied at t, and the
/// cumulative exit flow up to t. `flows[t]` is the step from t to t+1.
struct RunRecord {
    std::vector<State> x;
    std::vector<State> measured;
    std::vector<Inflows> u;
    std::vector<Disturbance> d;
    std::vector<StepFlows> flows;
    std::vector<double> exit_flow;  // f_n(x_n(t))
    std::vector<double> vef_cumulative;
    std::vector<double> distance;   // max-norm distance to the target, NaN without one
    std::vector<double> V;          // NaN without a Lyapunov function

    [[nodiscard]] std::size_t horizon() const noexcept { return x.empty() ? 0 : x.size() - 1; }
    [[nodiscard]] const State& final_state() const { return x.back(); }
};

namespace detail {

inline Disturbance choose_disturbance(const FreewayModel& model, const DisturbancePolicy& policy,
                                      std::mt19937_64& rng, const State& x, const Inflows& u,
                                      const std::optional<LyapunovFunction>& lf) {
    const std::size_t m = model.size() - 1;
    switch (policy.kind) {
        case DisturbancePolicy::Kind::constant:
            if (!(policy.value >= 0.0 && policy.value <= 1.0)) throw ConfigError("disturbance level must lie in [0, 1]");
            return Disturbance(m, policy.value);
        case DisturbancePolicy::Kind::iid_uniform: {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            Disturbance d(m);
            for (double& di : d) di = unit(rng);
            return d;
        }
        case DisturbancePolicy::Kind::grid_adversarial: {
            if (!lf) throw ConfigError("adversarial disturbances need a Lyapunov function");
            Disturbance best;
            double worst = -std::numeric_limits<double>::infinity();
            for (auto& d : disturbance_grid(model.size(), policy.levels)) {
                const double v = (*lf)(step(model, x, u, d).next);
                if (v > worst) {
                    worst = v;
                    best = std::move(d);
                }
            }
            return best;
        }
    }
    return Disturbance(m, policy.value);
}

}  // namespace detail

[[nodiscard]] inline RunRecord simulate(const FreewayModel& model, Controller controller, const State& x0,
                                        const SimulationOptions& options) {
    const std::size_t n = model.size();
    if (x0.size() != n) throw PreconditionError("initial state length does not match the model");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x0[i] >= 0.0 && x0[i] <= model.cell(i).a)) throw PreconditionError("initial state outside [0, a]");
    }

    MeasurementModel sensor(options.measurement);
    std::mt19937_64 rng(options.disturbance.seed);
    const std::size_t T = options.horizon;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    RunRecord rec;
    rec.x.reserve(T + 1);
    rec.x.push_back(x0);
    double vef = 0.0;
    for (std::size_t t = 0;; ++t) {
        const State& x = rec.x.back();
        State xm = sensor.measure(x, t, model);
        if (t == 0) controller_start(controller, xm);
        Inflows u = controller_command(controller, xm, t);
        Disturbance d = detail::choose_disturbance(model, options.disturbance, rng, x, u, options.lyapunov);

        rec.exit_flow.push_back(model.demand(n - 1, x[n - 1]));
        vef += rec.exit_flow.back();
        rec.vef_cumulative.push_back(vef);
        rec.distance.push_back(options.target ? max_distance(x, *options.target) : nan);
        rec.V.push_back(options.lyapunov ? (*options.lyapunov)(x) : nan);

        if (t == T) {
            rec.measured.push_back(std::move(xm));
            rec.u.push_back(std::move(u));
            rec.d.push_back(std::move(d));
            break;
        }
        StepResult next = step(model, x, u, d);
        controller_observe(controller, next.flows);
        rec.measured.push_back(std::move(xm));
        rec.u.push_back(std::move(u));
        rec.d.push_back(std::move(d));
        rec.flows.push_back(std::move(next.flows));
        rec.x.push_back(std::move(next.next));
    }
    return rec;
}

/// Sum of f_n(x_n(t)) for t = 0..T.
[[nodiscard]] inline double vef(const RunRecord& record, std::size_t T) {
    if (record.x.empty() || T > record.horizon()) {
        std::ostringstream os;
        os << "VEF horizon " << T << " exceeds the recorded horizon " << record.horizon();
        throw RangeError(os.str());
    }
    return record.vef_cumulative[T];
}

/// First t from which the max-norm distance to `target` stays below `tol` for
/// `consecutive` rows.
[[nodiscard]] inline std::optional<std::size_t> converged_at(const RunRecord& record, const State& target,
                                                             double tol = 1e-6, std::size_t consecutive = 10) {
    std::size_t run = 0;
    for (std::size_t t = 0; t < record.x.size(); ++t) {
        if (max_distance(record.x[t], target) < tol) {
            if (++run == consecutive) return t + 1 - consecutive;
        } else {
            run = 0;
        }
    }
    return std::nullopt;
}

namespace detail {

inline std::string fmt10(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace detail

/// One header row, then one row per recorded t.
inline void write_csv(std::ostream& os, const RunRecord& record) {
    const std::size_t n = record.x.empty() ? 0 : record.x.front().size();
    os << "t";
    for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
    for (std::size_t i = 1; i <= n; ++i) os << ",xtilde_" << i;
    for (std::size_t i = 1; i <= n; ++i) os << ",u_" << i;
    for (std::size_t i = 2; i <= n; ++i) os << ",d_" << i;
    os << ",outflow_n,vef_cum,dist_to_eq,V\n";
    for (std::size_t t = 0; t < record.x.size(); ++t) {
        os << t;
        for (double v : record.x[t]) os << ',' << detail::fmt10(v);
        for (double v : record.measured[t]) os << ',' << detail::fmt10(v);
        for (double v : record.u[t]) os << ',' << detail::fmt10(v);
        for (double v : record.d[t]) os << ',' << detail::fmt10(v);
        os << ',' << detail::fmt10(record.exit_flow[t]) << ',' << detail::fmt10(record.vef_cumulative[t]) << ','
           << detail::fmt10(record.distance[t]) << ',' << detail::fmt10(record.V[t]) << '\n';
    }
}

/// Mean of x(t) - target over t in [from, to], as a max-norm distance.
[[nodiscard]] inline double mean_offset(const RunRecord& record, const State& target, std::size_t from,
                                        std::size_t to) {
    if (to > record.horizon() || from > to) throw RangeError("offset window outside the recorded horizon");
    const std::size_t n = target.size();
    std::vector<double> mean(n, 0.0);
    for (std::size_t t = from; t <= to; ++t) {
        for (std::size_t i = 0; i < n; ++i) mean[i] += record.x[t][i] - target[i];
    }
    double worst = 0.0;
    for (double m : mean) worst = std::max(worst, std::abs(m / static_cast<double>(to - from + 1)));
    return worst;
}

}  // namespace freeway

#pragma once

// Explicit Lyapunov function of the stabilizer and sampling-based checks of its
// decrease and sandwich bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "freeway/cell_vector.hpp"
#include "freeway/constants.hpp"
#include "freeway/controllers.hpp"
#include "freeway/model.hpp"

namespace freeway {

class LyapunovFunction {
public:
    LyapunovFunction(State x_star, double sigma, double weight_A, double weight_K, double Q, double penalty_slope,
                     double h)
        : x_star_(std::move(x_star)), sigma_(sigma), A_(weight_A), K_(weight_K), Q_(Q), slope_(penalty_slope), h_(h) {
        if (!(A_ > 1.0 && K_ > 0.0 && h_ > 0.0 && slope_ > 0.0)) {
            throw PreconditionError("Lyapunov weights need A > 1, K > 0, h > 0 and a positive penalty slope");
        }
        if (!(Q_ >= sum_of_prefix_sums(x_star_.view()))) {
            throw PreconditionError("penalty offset Q must dominate the equilibrium occupancy");
        }
    }

    [[nodiscard]] static LyapunovFunction from_certificate(const StabilizerCertificate& cert) {
        return {cert.x_star, cert.sigma, cert.weight_A, cert.weight_K, cert.Q, cert.penalty_slope, cert.h};
    }

    [[nodiscard]] double xi(const State& x) const { return weighted_excess(x, x_star_, sigma_); }

    /// sum sigma^i |x_i - x_i*|.
    [[nodiscard]] double weighted_deviation(const State& x) const {
        double total = 0.0;
        double w = 1.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            w *= sigma_;
            total += w * std::abs(x[i] - x_star_[i]);
        }
        return total;
    }

    [[nodiscard]] double penalty(const State& x) const { return Q_ - slope_ * std::min(h_, xi(x)); }

    [[nodiscard]] double operator()(const State& x) const {
        const double overload = std::max(0.0, sum_of_prefix_sums(x.view()) - penalty(x));
        return weighted_deviation(x) + A_ * xi(x) + K_ * overload;
    }

    [[nodiscard]] const State& x_star() const noexcept { return x_star_; }
    [[nodiscard]] double sigma() const noexcept { return sigma_; }
    [[nodiscard]] double weight_A() const noexcept { return A_; }
    [[nodiscard]] double weight_K() const noexcept { return K_; }
    [[nodiscard]] double Q() const noexcept { return Q_; }
    [[nodiscard]] double penalty_slope() const noexcept { return slope_; }
    [[nodiscard]] double h() const noexcept { return h_; }

private:
    State x_star_;
    double sigma_;
    double A_;
    double K_;
    double Q_;
    double slope_;
    double h_;
};

[[nodiscard]] inline double penalty(const LyapunovFunction& lf, const State& x) { return lf.penalty(x); }
[[nodiscard]] inline double evaluate_V(const LyapunovFunction& lf, const State& x) { return lf(x); }

/// Max-norm distance, the norm used by the sandwich and envelope bounds.
[[nodiscard]] inline double max_distance(const State& x, const State& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
    return d;
}

struct SamplerOptions {
    std::size_t samples = 10000;
    std::uint64_t seed = 42;
    std::size_t random_disturbances = 1;  // extra uniform d per state, on top of the grid
    std::vector<State> anchors;           // always checked in addition to the random states
};

/// Reproducible state sampler mixing uniform points of S, uniform points of the
/// free-flow box and log-scale perturbations of x*.
class StateSampler {
public:
    StateSampler(const FreewayModel& model, State x_star, std::vector<double> mu, std::uint64_t seed)
        : model_(&model), x_star_(std::move(x_star)), mu_(std::move(mu)), rng_(seed) {}

    [[nodiscard]] State next() {
        const std::size_t n = model_->size();
        State x(n);
        const auto mode = count_++ % 3;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = model_->cell(i).a;
            double v = 0.0;
            if (mode == 0 || mu_.empty()) {
                v = a * (1.0 - unit(rng_));  // (0, a]
            } else if (mode == 1) {
                v = mu_[i] * (1.0 - unit(rng_));
            } else {
                const double scale = std::pow(10.0, -6.0 + 6.0 * unit(rng_));
                const double sign = unit(rng_) < 0.5 ? -1.0 : 1.0;
                v = x_star_[i] + sign * scale * x_star_[i] * unit(rng_);
            }
            x[i] = std::clamp(v, std::numeric_limits<double>::min(), a);
        }
        return x;
    }

    [[nodiscard]] Disturbance random_disturbance() {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Disturbance d(model_->size() - 1);
        for (double& di : d) di = unit(rng_);
        return d;
    }

private:
    const FreewayModel* model_;
    State x_star_;
    std::vector<double> mu_;
    std::mt19937_64 rng_;
    std::size_t count_ = 0;
};

/// Every vector in {levels}^{n-1}.
[[nodiscard]] inline std::vector<Disturbance> disturbance_grid(std::size_t n, const std::vector<double>& levels = {0.0, 0.5, 1.0}) {
    std::vector<Disturbance> grid;
    const std::size_t m = n - 1;
    std::vector<std::size_t> idx(m, 0);
    while (true) {
        Disturbance d(m);
        for (std::size_t k = 0; k < m; ++k) d[k] = levels[idx[k]];
        grid.push_back(std::move(d));
        std::size_t k = 0;
        while (k < m && ++idx[k] == levels.size()) idx[k++] = 0;
        if (k == m) break;
    }
    return grid;
}

struct DecreaseWitness {
    State x;
    Disturbance d;
    double lhs = 0.0;  // V(x+)
    double rhs = 0.0;  // bound it exceeded
    std::string form;  // "rate" or "claim"
};

struct DecreaseReport {
    std::size_t checked = 0;
    std::size_t rate_violations = 0;   // V(x+) > L_tilde V(x)
    std::size_t claim_violations = 0;  // V(x+) > V(x) - (1 - L) sum sigma^i |x_i - x_i*|
    double worst_rate_margin = std::numeric_limits<double>::infinity();
    double worst_claim_margin = std::numeric_limits<double>::infinity();
    std::optional<DecreaseWitness> witness;

    [[nodiscard]] bool passed() const noexcept { return rate_violations == 0 && claim_violations == 0; }
};

namespace detail {

// Relative slack for comparing two evaluations of V.
inline double slack(double rhs) { return 1e-9 * std::abs(rhs); }

}  // namespace detail

/// Checks both decrease forms for `policy` (callable State -> Inflows) over
/// sampled states, the disturbance grid and random disturbances.
template <class Policy>
[[nodiscard]] DecreaseReport verify_decrease(const FreewayModel& model, Policy&& policy, const LyapunovFunction& lf,
                                             const StabilizerCertificate& cert, const SamplerOptions& options = {}) {
    const std::size_t n = model.size();
    StateSampler sampler(model, cert.x_star, cert.mu, options.seed);
    const auto grid = disturbance_grid(n);
    DecreaseReport report;

    auto check = [&](const State& x) {
        const Inflows u = policy(x);
        const double v0 = lf(x);
        const double rate_rhs = v0 - cert.contraction_gap * v0;
        const double claim_rhs = v0 - (1.0 - cert.L) * lf.weighted_deviation(x);
        auto one = [&](const Disturbance& d) {
            const double v1 = lf(step(model, x, u, d).next);
            ++report.checked;
            const double rate_margin = rate_rhs - v1;
            const double claim_margin = claim_rhs - v1;
            report.worst_rate_margin = std::min(report.worst_rate_margin, rate_margin);
            report.worst_claim_margin = std::min(report.worst_claim_margin, claim_margin);
            if (rate_margin < -detail::slack(rate_rhs)) {
                ++report.rate_violations;
                if (!report.witness) report.witness = DecreaseWitness{x, d, v1, rate_rhs, "rate"};
            }
            if (claim_margin < -detail::slack(claim_rhs)) {
                ++report.claim_violations;
                if (!report.witness) report.witness = DecreaseWitness{x, d, v1, claim_rhs, "claim"};
            }
        };
        for (const auto& d : grid) one(d);
        for (std::size_t k = 0; k < options.random_disturbances; ++k) one(sampler.random_disturbance());
    };

    check(cert.x_star);
    for (const auto& x : options.anchors) check(x);
    for (std::size_t s = 0; s < options.samples; ++s) check(sampler.next());
    return report;
}

struct SandwichReport {
    std::size_t checked = 0;
    std::size_t lower_violations = 0;
    std::size_t upper_violations = 0;
    double worst_lower_margin = std::numeric_limits<double>::infinity();  // V - K1 |x - x*|
    double worst_upper_margin = std::numeric_limits<double>::infinity();  // K2 |x - x*| - V
    std::optional<State> witness;

    [[nodiscard]] bool passed() const noexcept { return lower_violations == 0 && upper_violations == 0; }
};

/// K1 |x - x*| <= V(x) <= K2 |x - x*| (max norm) on sampled states and the jam vertex.
[[nodiscard]] inline SandwichReport verify_sandwich(const FreewayModel& model, const LyapunovFunction& lf,
                                                    const StabilizerCertificate& cert,
                                                    const SamplerOptions& options = {}) {
    StateSampler sampler(model, cert.x_star, cert.mu, options.seed);
    SandwichReport report;
    auto check = [&](const State& x) {
        const double dist = max_distance(x, cert.x_star);
        const double v = lf(x);
        const double lower = v - cert.K1 * dist;
        const double upper = cert.K2 * dist - v;
        ++report.checked;
        report.worst_lower_margin = std::min(report.worst_lower_margin, lower);
        report.worst_upper_margin = std::min(report.worst_upper_margin, upper);
        bool bad = false;
        if (lower < -detail::slack(v)) {
            ++report.lower_violations;
            bad = true;
        }
        if (upper < -detail::slack(v)) {
            ++report.upper_violations;
            bad = true;
        }
        if (bad && !report.witness) report.witness = x;
    };

    State jam(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) jam[i] = model.cell(i).a;
    check(cert.x_star);
    check(jam);
    for (const auto& x : options.anchors) check(x);
    for (std::size_t s = 0; s < options.samples; ++s) check(sampler.next());
    return report;
}

}  // namespace freeway

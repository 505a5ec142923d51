// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "freeway/freeway.hpp"

using namespace freeway;

namespace {

const std::string kScenarios = FREEWAY_SCENARIO_DIR;

Scenario scenario(const std::string& name) { return load_scenario(kScenarios + "/" + name); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string num(double v, int digits = 6) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

bool within(double value, double expected, double tol) { return std::abs(value - expected) <= tol; }

void congested_attractor(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario s = scenario("ex42_open_loop.json");
    const RunRecord rec = run_scenario(s, s.controller);
    const double run_time = seconds_since(t0);
    const State jammed{91.8, 91.8, 91.8, 91.8, 72.25};
    const double dist = max_distance(rec.final_state(), jammed);
    double fixed = 0.0;
    for (const auto& d : disturbance_grid(s.model.size())) {
        fixed = std::max(fixed, max_distance(step(s.model, jammed, s.inflows, d).next, jammed));
    }
    o.detail << "dist(x(500), jam) = " << num(dist) << ", fixed-point residual " << num(fixed) << ", "
             << num(run_time, 3) << " s";
    o.require(dist <= 1e-6, "final state within 1e-6");
    o.require(fixed <= 1e-9, "fixed point to 1e-9");
    o.require(run_time < 1.0, "runtime < 1 s");
}

void equilibrium_formulas(Outcome& o) {
    const Scenario s = scenario("ex42_stabilizer.json");
    const double u = s.inflows[0];
    const State x = equilibrium_from_inflows(s.model, s.inflows).x;
    double err = 0.0;
    for (std::size_t i = 0; i < 4; ++i) err = std::max(err, std::abs(x[i] - 11.0 * u / 5.0));
    err = std::max(err, std::abs(x[4] - 11.0 * u / 4.0));
    o.detail << "x* = [" << num(x[0], 8) << " x4, " << num(x[4], 8) << "], max error " << num(err);
    o.require(err <= 1e-9, "closed forms to 1e-9");
    o.require(within(x[0], 43.978, 1e-9) && within(x[4], 54.9725, 1e-9), "printed values");
}

double timed_vef(const Scenario& s, const std::string& name, double& worst_time) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunRecord rec = run_scenario(s, s.controllers.at(name));
    worst_time = std::max(worst_time, seconds_since(t0));
    return vef(rec, 200);
}

void vef_table(Outcome& o) {
    double worst_time = 0.0;
    const Scenario near = scenario("ex42_stabilizer.json");
    const Scenario cong = scenario("ex42_cong.json");
    const double a = timed_vef(near, "stabilizer", worst_time);
    const double b = timed_vef(near, "rlb_pi", worst_time);
    const double c = timed_vef(cong, "stabilizer", worst_time);
    const double d = timed_vef(cong, "rlb_pi", worst_time);
    o.detail << "near x*: " << num(a, 8) << " vs " << num(b, 8) << "; from jam: " << num(c, 8) << " vs "
             << num(d, 8) << "; slowest run " << num(worst_time, 3) << " s";
    o.require(within(a, 3979.8, 0.5), "stabilizer 3979.8 +- 0.5");
    o.require(within(b, 3785.9, 0.5), "RLB 3785.9 +- 0.5");
    o.require(within(c, 3845.2, 1.0), "stabilizer 3845.2 +- 1");
    o.require(within(d, 3007.8, 1.0), "RLB 3007.8 +- 1");
    o.require(worst_time < 1.0, "runtime < 1 s each");
}

void measurement_error(Outcome& o) {
    const Scenario fast = scenario("ex42_noise_pi.json");
    const double stab = vef(run_scenario(fast, fast.controllers.at("stabilizer")), 200);
    const double rlb = vef(run_scenario(fast, fast.controllers.at("rlb_pi")), 200);

    const Scenario slow = scenario("ex42_noise_low.json");
    const State x_star = equilibrium_from_inflows(slow.model, slow.inflows).x;
    const double off_stab = mean_offset(run_scenario(slow, slow.controllers.at("stabilizer")), x_star, 100, 200);
    const double off_rlb = mean_offset(run_scenario(slow, slow.controllers.at("rlb_pi")), x_star, 100, 200);
    o.detail << "omega = pi: " << num(stab, 8) << " vs " << num(rlb, 8) << "; omega = 0.1 mean offset "
             << num(off_stab, 5) << " vs " << num(off_rlb, 5);
    o.require(within(stab, 3789.0, 2.0), "stabilizer 3789 +- 2");
    o.require(within(rlb, 4016.8, 2.0), "RLB 4016.8 +- 2");
    o.require(off_stab < off_rlb, "stabilizer offset below RLB");
}

bool accepts_main_only(const FreewayModel& model, const Inflows& u, double C) {
    try {
        const auto eq = equilibrium_from_inflows(model, u);
        const auto box = compute_beta_mu(model, u, eq);
        ControlSetOptions opt;
        opt.candidate = std::vector<std::size_t>{0};
        (void)select_R(model, u, eq, C, box, opt);
        return true;
    } catch (const Error&) {
        return false;
    }
}

void constant_pipeline(Outcome& o) {
    const Scenario s = scenario("ex41.json");
    const double theta = s.model.demand_constants(s.model.size() - 1).theta_lower;
    const double C = estimate_C(s.model, std::vector<double>{0, 1, 0});
    Inflows u = s.inflows;
    const bool accepts = accepts_main_only(s.model, u, C);

    double lo = u[2];
    double hi = 0.5;
    u[2] = hi;
    const bool bracketed = accepts && !accepts_main_only(s.model, u, C);
    for (int k = 0; bracketed && k < 60; ++k) {
        u[2] = 0.5 * (lo + hi);
        (accepts_main_only(s.model, u, C) ? lo : hi) = u[2];
    }
    o.detail << "theta = " << num(theta) << ", C = " << num(C, 8) << ", R = {1} at u3 = 0.05 "
             << (accepts ? "accepted" : "rejected") << ", boundary u3 = " << (bracketed ? num(lo, 6) : "n/a");
    o.require(within(theta, 7.0 / 16.0, 1e-12), "theta = 7/16");
    o.require(C >= 0.005, "C >= 0.005");
    o.require(C <= 0.05, "C <= 0.05");
    o.require(accepts, "R = {1} accepted at 0.05");
    o.require(bracketed && lo > 0.02 && lo < 0.5, "boundary in (0.02, 0.5)");
}

void lyapunov_certificate(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario s = scenario("ex42_theory.json");
    const BuiltController built = build_controller(s, s.controller);
    const StabilizerCertificate& cert = *built.certificate;
    const auto lf = LyapunovFunction::from_certificate(cert);
    const auto fb = StabilizingFeedback::from_certificate(cert);
    SamplerOptions opt = s.verify;
    opt.samples = 10000;
    const auto dec = verify_decrease(s.model, [&](const State& x) { return fb.k_feedback(x); }, lf, cert, opt);
    const auto sand = verify_sandwich(s.model, lf, cert, opt);
    const double run_time = seconds_since(t0);
    o.detail << dec.checked << " decrease checks (" << dec.rate_violations << " rate, " << dec.claim_violations
             << " claim violations), " << sand.checked << " sandwich states (" << sand.lower_violations + sand.upper_violations
             << " violations), 1 - L_tilde = " << num(cert.contraction_gap, 3) << ", " << num(run_time, 3) << " s";
    o.require(dec.passed(), "decrease");
    o.require(sand.passed(), "sandwich");
    o.require(run_time < 30.0, "runtime < 30 s");
}

void property_suites(Outcome& o) {
    PropertyOptions opt;
    opt.samples = 10000;
    opt.envelope_runs = 100;
    const char* sep = "";
    for (const char* name : {"ex42_theory.json", "ex41.json"}) {
        const Scenario s = scenario(name);
        const BuiltController built = build_controller(s, s.controller);
        const SuiteReport report = property_suite(s.model, *built.certificate, opt);
        std::size_t checks = 0;
        for (const auto& r : report.results) {
            checks += r.checked;
            o.require(r.passed(), std::string(name) + " " + r.name + " (" + r.witness + ")");
        }
        o.detail << sep << name << ": " << report.results.size() << " properties, " << checks << " checks";
        sep = "; ";
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"congested attractor", congested_attractor},
        {"equilibrium formulas", equilibrium_formulas},
        {"VEF table", vef_table},
        {"measurement-error runs", measurement_error},
        {"constant pipeline", constant_pipeline},
        {"Lyapunov certification", lyapunov_certificate},
        {"property suites", property_suites},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            criteria[k].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                    o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}

#include <cstdio>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "freeway/freeway.hpp"

namespace {

using namespace freeway;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> horizon;
};

Scenario load(const Common& c) {
    Scenario s = load_scenario(c.config);
    if (c.horizon) s.horizon = *c.horizon;
    if (c.seed) {
        s.seed = *c.seed;
        s.verify.seed = *c.seed;
        if (s.disturbance.kind == DisturbancePolicy::Kind::iid_uniform) s.disturbance.seed = *c.seed;
        if (s.measurement.direction == MeasurementError::Direction::sphere) s.measurement.seed = *c.seed;
    }
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// The scenario's theory-mode settings if it has them, library defaults otherwise.
SynthesisOptions synthesis_options(const Scenario& s) {
    SynthesisOptions opt;
    const ControllerSpec& spec = s.controller;
    if (spec.type == ControllerSpec::Type::stabilizer && spec.stabilizer.theory) {
        opt.sigma = spec.stabilizer.sigma;
        opt.eta = spec.stabilizer.eta;
        opt.control = spec.stabilizer.control;
    }
    return opt;
}

const ControllerSpec& named_controller(const Scenario& s, const std::string& name) {
    if (name.empty()) return s.controller;
    auto it = s.controllers.find(name);
    if (it == s.controllers.end()) throw ConfigError("scenario has no controller named '" + name + "'");
    return it->second;
}

int cmd_validate(const Common& c) {
    const Scenario s = load(c);
    std::cout << "model ok: " << s.model.size() << " cells satisfy assumption (H)\n";
    std::cout << "cell,L,G,theta_lower,critical_flow\n";
    for (std::size_t i = 0; i < s.model.size(); ++i) {
        const auto& dc = s.model.demand_constants(i);
        std::cout << i + 1 << ',' << fmt(dc.L) << ',' << fmt(dc.G) << ',' << fmt(dc.theta_lower) << ','
                  << fmt(dc.critical_flow) << '\n';
    }
    return 0;
}

int cmd_equilibrium(const Common& c) {
    const Scenario s = load(c);
    const Equilibrium eq = equilibrium_from_inflows(s.model, s.inflows);
    std::cout << json{{"x_star", eq.x.values()}, {"flow", eq.flow}}.dump(2) << '\n';
    return 0;
}

int cmd_synth(const Common& c, const std::string& out) {
    const Scenario s = load(c);
    const StabilizerCertificate cert = synthesize(s.model, s.inflows, synthesis_options(s));
    const std::string text = certificate_to_json(cert).dump(2) + "\n";
    const std::string path = !out.empty() ? out : s.output.certificate.value_or("");
    if (!path.empty()) {
        write_file_atomic(path, text);
        std::cout << "certificate written to " << path << '\n';
    } else {
        std::cout << text;
    }
    return 0;
}

int cmd_simulate(const Common& c, const std::string& out, const std::string& cert_path, const std::string& name) {
    const Scenario s = load(c);
    std::optional<StabilizerCertificate> cert;
    if (!cert_path.empty()) cert = certificate_from_json(read_json_file(cert_path));
    const RunRecord rec = run_scenario(s, named_controller(s, name), cert);
    const std::string path = !out.empty() ? out : s.output.csv.value_or("");
    if (!path.empty()) {
        std::ostringstream os;
        write_csv(os, rec);
        write_file_atomic(path, os.str());
    }
    std::cout << "VEF_" << rec.horizon() << " = " << fmt(vef(rec, rec.horizon())) << '\n';
    std::cout << "final state:";
    for (double v : rec.final_state()) std::cout << ' ' << fmt(v);
    std::cout << '\n';
    if (!path.empty()) std::cout << "trajectory written to " << path << '\n';
    return 0;
}

int cmd_compare(const Common& c, const std::string& a, const std::string& b) {
    const Scenario s = load(c);
    const ControllerSpec& spec_a = named_controller(s, a);
    const ControllerSpec& spec_b = named_controller(s, b);
    auto run_a = std::async(std::launch::async, [&] { return run_scenario(s, spec_a); });
    auto run_b = std::async(std::launch::async, [&] { return run_scenario(s, spec_b); });
    const RunRecord ra = run_a.get();
    const RunRecord rb = run_b.get();
    std::cout << "controller,VEF_" << s.horizon << ",final_dist_to_eq\n";
    std::cout << a << ',' << fmt(vef(ra, s.horizon)) << ',' << fmt(ra.distance.back()) << '\n';
    std::cout << b << ',' << fmt(vef(rb, s.horizon)) << ',' << fmt(rb.distance.back()) << '\n';
    return 0;
}

int cmd_verify(const Common& c, const std::string& out, const std::string& cert_path) {
    const Scenario s = load(c);
    const StabilizerCertificate cert = cert_path.empty() ? synthesize(s.model, s.inflows, synthesis_options(s))
                                                         : certificate_from_json(read_json_file(cert_path));
    const auto lf = LyapunovFunction::from_certificate(cert);
    const auto fb = StabilizingFeedback::from_certificate(cert);
    PropertyOptions popt;
    popt.samples = s.verify.samples;
    popt.seed = s.verify.seed;

    auto dec = std::async(std::launch::async, [&] {
        return verify_decrease(s.model, [&](const State& x) { return fb.k_feedback(x); }, lf, cert, s.verify);
    });
    auto sand = std::async(std::launch::async, [&] { return verify_sandwich(s.model, lf, cert, s.verify); });
    auto suite = std::async(std::launch::async, [&] { return property_suite(s.model, cert, popt); });
    const DecreaseReport d = dec.get();
    const SandwichReport w = sand.get();
    const SuiteReport p = suite.get();

    const bool ok = d.passed() && w.passed() && p.passed();
    const json report{{"passed", ok},
                      {"decrease", decrease_report_to_json(d)},
                      {"sandwich", sandwich_report_to_json(w)},
                      {"properties", suite_report_to_json(p)}};
    const std::string path = !out.empty() ? out : s.output.report.value_or("");
    if (!path.empty()) write_file_atomic(path, report.dump(2) + "\n");

    std::cout << "decrease: " << (d.passed() ? "pass" : "FAIL") << " (" << d.checked << " checks, "
              << d.rate_violations << " rate / " << d.claim_violations << " claim violations)\n";
    std::cout << "sandwich: " << (w.passed() ? "pass" : "FAIL") << " (" << w.checked << " states)\n";
    for (const auto& r : p.results) {
        std::cout << r.name << ": " << (r.passed() ? "pass" : "FAIL") << " (" << r.checked << " checks)";
        if (!r.passed()) std::cout << " witness " << r.witness;
        std::cout << '\n';
    }
    if (!path.empty()) std::cout << "report written to " << path << '\n';
    if (!ok) std::cerr << "error: verification failed\n";
    return ok ? 0 : 2;
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "override every seed in the scenario");
    sub->add_option("--horizon", c.horizon, "override the simulation horizon");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Freeway model simulation, stabilizer synthesis and certificate verification"};
    app.require_subcommand(1);

    Common common;
    std::string out;
    std::string cert;
    std::string name;
    std::string a;
    std::string b;

    auto* validate = app.add_subcommand("validate", "check the model and every demand function");
    add_common(validate, common);
    auto* equilibrium = app.add_subcommand("equilibrium", "print the uncongested equilibrium for the inflows");
    add_common(equilibrium, common);
    auto* synth = app.add_subcommand("synth", "synthesize the stabilizer certificate");
    add_common(synth, common);
    synth->add_option("--out", out, "certificate JSON path");
    auto* simulate_cmd = app.add_subcommand("simulate", "run one closed- or open-loop simulation");
    add_common(simulate_cmd, common);
    simulate_cmd->add_option("--out", out, "trajectory CSV path");
    simulate_cmd->add_option("--cert", cert, "certificate JSON for a theory-mode stabilizer");
    simulate_cmd->add_option("--controller", name, "entry of the scenario's 'controllers' map");
    auto* compare = app.add_subcommand("compare", "run two named controllers and print their VEF");
    add_common(compare, common);
    compare->add_option("--a", a, "first controller name")->required();
    compare->add_option("--b", b, "second controller name")->required();
    auto* verify = app.add_subcommand("verify", "check the Lyapunov certificate and the property suites");
    add_common(verify, common);
    verify->add_option("--out", out, "report JSON path");
    verify->add_option("--cert", cert, "certificate JSON to verify instead of synthesizing");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(common);
        if (*equilibrium) return cmd_equilibrium(common);
        if (*synth) return cmd_synth(common, out);
        if (*simulate_cmd) return cmd_simulate(common, out, cert, name);
        if (*compare) return cmd_compare(common, a, b);
        if (*verify) return cmd_verify(common, out, cert);
    } catch (const freeway::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

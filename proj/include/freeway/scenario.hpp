#pragma once

// Scenario files, certificate and report JSON, atomic file output.
// All cell indices in files are 1-based.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freeway/constants.hpp"
#include "freeway/controllers.hpp"
#include "freeway/errors.hpp"
#include "freeway/lyapunov.hpp"
#include "freeway/model.hpp"
#include "freeway/properties.hpp"
#include "freeway/simulation.hpp"

namespace freeway {

using json = nlohmann::json;

struct StabilizerSpec {
    bool theory = false;
    std::optional<double> sigma;
    // practitioner mode
    std::vector<std::size_t> R;  // 0-based
    std::vector<double> gamma;   // aligned with R
    std::vector<double> b;       // aligned with R
    // theory mode
    double eta = 0.5;
    ControlSetOptions control;
};

struct ControllerSpec {
    enum class Type { constant, stabilizer, rlb_pi };
    Type type = Type::constant;
    std::optional<Inflows> u;  // constant inflows / RLB pass-through; default: the scenario inflows
    StabilizerSpec stabilizer;
    RlbPiParams rlb;
};

struct OutputSpec {
    std::optional<std::string> csv;
    std::optional<std::string> certificate;
    std::optional<std::string> report;
};

struct Scenario {
    FreewayModel model;
    Inflows inflows;
    ControllerSpec controller;
    std::map<std::string, ControllerSpec> controllers;
    DisturbancePolicy disturbance;
    MeasurementError measurement;
    std::size_t horizon = 200;
    std::optional<State> initial_state;
    std::uint64_t seed = 42;
    SamplerOptions verify;
    OutputSpec output;
};

namespace detail {

inline void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, const std::string& where, T fallback) {
    return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline std::size_t to_zero_based(long long one_based, std::size_t n, const std::string& where) {
    if (one_based < 1 || static_cast<std::size_t>(one_based) > n) {
        throw ConfigError("cell index " + std::to_string(one_based) + " out of range in " + where);
    }
    return static_cast<std::size_t>(one_based - 1);
}

inline std::vector<std::size_t> index_list(const json& j, const char* key, std::size_t n, const std::string& where) {
    std::vector<std::size_t> out;
    for (long long i : get<std::vector<long long>>(j, key, where)) out.push_back(to_zero_based(i, n, where));
    return out;
}

inline PiecewiseLinearDemand parse_demand(const json& j, const std::string& where) {
    require_keys(j, where, {"breakpoints", "critical", "smooth_bound"});
    std::vector<Breakpoint> bps;
    for (const auto& pair : get<std::vector<std::vector<double>>>(j, "breakpoints", where)) {
        if (pair.size() != 2) throw ConfigError("demand breakpoints must be [z, f] pairs in " + where);
        bps.push_back({pair[0], pair[1]});
    }
    return {std::move(bps), get<double>(j, "critical", where), get<double>(j, "smooth_bound", where)};
}

inline std::vector<CellParams> parse_cells(const json& j) {
    if (!j.is_array()) throw ConfigError("'cells' must be an array");
    std::vector<CellParams> cells;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string where = "cells[" + std::to_string(i + 1) + "]";
        const json& c = j[i];
        require_keys(c, where, {"a", "c", "q", "p", "demand"});
        cells.push_back({get<double>(c, "a", where), get<double>(c, "c", where), get<double>(c, "q", where),
                         get_or<double>(c, "p", where, 0.0), parse_demand(get<json>(c, "demand", where), where + ".demand")});
    }
    return cells;
}

inline std::vector<double> vector_of(const json& j, const char* key, std::size_t n, const std::string& where) {
    auto v = get<std::vector<double>>(j, key, where);
    if (v.size() != n) throw ConfigError("'" + std::string(key) + "' in " + where + " needs one entry per cell");
    return v;
}

inline ControllerSpec parse_controller(const json& j, const FreewayModel& model, const std::string& where) {
    const std::size_t n = model.size();
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    const auto type = get<std::string>(j, "type", where);
    ControllerSpec spec;
    if (type == "constant") {
        require_keys(j, where, {"type", "u"});
        spec.type = ControllerSpec::Type::constant;
        if (j.contains("u")) spec.u = Inflows(vector_of(j, "u", n, where));
    } else if (type == "stabilizer") {
        require_keys(j, where, {"type", "mode", "sigma", "R", "gamma", "b", "eta", "floor_ratio", "floors"});
        spec.type = ControllerSpec::Type::stabilizer;
        auto& s = spec.stabilizer;
        const auto mode = get_or<std::string>(j, "mode", where, "practitioner");
        if (mode != "practitioner" && mode != "theory") throw ConfigError("stabilizer mode must be practitioner or theory");
        s.theory = mode == "theory";
        if (j.contains("sigma")) s.sigma = get<double>(j, "sigma", where);
        if (s.theory) {
            for (const char* key : {"gamma", "b"}) {
                if (j.contains(key)) throw ConfigError(std::string("'") + key + "' is synthesized in theory mode (" + where + ")");
            }
            s.eta = get_or<double>(j, "eta", where, 0.5);
            s.control.floor_ratio = get_or<double>(j, "floor_ratio", where, 0.05);
            if (j.contains("R")) s.control.candidate = index_list(j, "R", n, where);
            if (j.contains("floors")) {
                const json floors = get<json>(j, "floors", where);
                for (const auto& [key, value] : floors.items()) {
                    long long idx = 0;
                    try {
                        idx = std::stoll(key);
                    } catch (const std::exception&) {
                        throw ConfigError("floor keys must be 1-based cell indices in " + where);
                    }
                    s.control.floors[to_zero_based(idx, n, where)] = value.get<double>();
                }
            }
        } else {
            for (const char* key : {"eta", "floor_ratio", "floors"}) {
                if (j.contains(key)) throw ConfigError(std::string("'") + key + "' only applies to theory mode (" + where + ")");
            }
            if (!s.sigma) throw ConfigError("practitioner stabilizer needs 'sigma' in " + where);
            s.R = index_list(j, "R", n, where);
            s.gamma = get<std::vector<double>>(j, "gamma", where);
            s.b = get<std::vector<double>>(j, "b", where);
            if (s.gamma.size() != s.R.size() || s.b.size() != s.R.size()) {
                throw ConfigError("'gamma' and 'b' must align with 'R' in " + where);
            }
        }
    } else if (type == "rlb_pi") {
        require_keys(j, where, {"type", "Kp", "KI", "headroom", "smoothing", "u_min", "u_max", "u_init", "setpoints",
                                "use_realized_previous_inflow", "u"});
        spec.type = ControllerSpec::Type::rlb_pi;
        auto& r = spec.rlb;
        r.Kp = get_or<double>(j, "Kp", where, r.Kp);
        r.KI = get_or<double>(j, "KI", where, r.KI);
        r.headroom = get_or<double>(j, "headroom", where, r.headroom);
        r.smoothing = get_or<double>(j, "smoothing", where, r.smoothing);
        r.u_min = get_or<double>(j, "u_min", where, r.u_min);
        r.u_max = get_or<double>(j, "u_max", where, r.u_max);
        r.u_init = get_or<double>(j, "u_init", where, r.u_init);
        r.use_realized_previous_inflow = get_or<bool>(j, "use_realized_previous_inflow", where, false);
        if (j.contains("setpoints")) {
            r.setpoints = vector_of(j, "setpoints", n, where);
        } else {
            for (std::size_t i = 0; i < n; ++i) r.setpoints.push_back(model.cell(i).demand.critical_density());
        }
        if (j.contains("u")) spec.u = Inflows(vector_of(j, "u", n, where));
    } else {
        throw ConfigError("unknown controller type '" + type + "' in " + where);
    }
    return spec;
}

inline DisturbancePolicy parse_disturbance(const json& j, std::uint64_t seed) {
    const std::string where = "disturbance";
    const auto type = get<std::string>(j, "type", where);
    if (type == "constant") {
        require_keys(j, where, {"type", "value"});
        return DisturbancePolicy::constant(get_or<double>(j, "value", where, 0.5));
    }
    if (type == "iid") {
        require_keys(j, where, {"type", "seed"});
        return DisturbancePolicy::iid(get_or<std::uint64_t>(j, "seed", where, seed));
    }
    if (type == "adversarial") {
        require_keys(j, where, {"type", "levels"});
        auto p = DisturbancePolicy::adversarial();
        p.levels = get_or<std::vector<double>>(j, "levels", where, p.levels);
        return p;
    }
    throw ConfigError("unknown disturbance type '" + type + "'");
}

inline MeasurementError parse_measurement(const json& j, std::uint64_t seed) {
    const std::string where = "measurement";
    require_keys(j, where, {"magnitude", "direction", "omega", "seed"});
    MeasurementError m;
    m.magnitude = get<double>(j, "magnitude", where);
    if (!(m.magnitude >= 0.0)) throw ConfigError("measurement magnitude must be non-negative");
    const auto dir = get_or<std::string>(j, "direction", where, "cosine");
    if (dir == "cosine") {
        m.direction = MeasurementError::Direction::cosine;
        m.omega = get_or<double>(j, "omega", where, 0.0);
    } else if (dir == "sphere") {
        m.direction = MeasurementError::Direction::sphere;
        m.seed = get_or<std::uint64_t>(j, "seed", where, seed);
    } else {
        throw ConfigError("measurement direction must be cosine or sphere");
    }
    return m;
}

}  // namespace detail

[[nodiscard]] inline Scenario parse_scenario(const json& j) {
    detail::require_keys(j, "scenario", {"cells", "inflows", "controller", "controllers", "disturbance", "measurement",
                                         "horizon", "initial_state", "seed", "verify", "output"});
    auto cells = detail::parse_cells(detail::get<json>(j, "cells", "scenario"));
    Scenario s{FreewayModel(std::move(cells)), Inflows(), {}, {}, {}, {}, 200, std::nullopt, 42, {}, {}};
    const std::size_t n = s.model.size();
    s.inflows = Inflows(detail::vector_of(j, "inflows", n, "scenario"));
    s.seed = detail::get_or<std::uint64_t>(j, "seed", "scenario", 42);
    if (j.contains("controller")) s.controller = detail::parse_controller(j["controller"], s.model, "controller");
    if (j.contains("controllers")) {
        const json blocks = detail::get<json>(j, "controllers", "scenario");
        for (const auto& [name, block] : blocks.items()) {
            s.controllers.emplace(name, detail::parse_controller(block, s.model, "controllers." + name));
        }
    }
    s.disturbance = j.contains("disturbance") ? detail::parse_disturbance(j["disturbance"], s.seed)
                                              : DisturbancePolicy::constant(0.5);
    if (j.contains("measurement")) s.measurement = detail::parse_measurement(j["measurement"], s.seed);
    s.horizon = detail::get_or<std::size_t>(j, "horizon", "scenario", 200);
    if (j.contains("initial_state")) s.initial_state = State(detail::vector_of(j, "initial_state", n, "scenario"));
    if (j.contains("verify")) {
        const json& v = j["verify"];
        detail::require_keys(v, "verify", {"samples", "seed"});
        s.verify.samples = detail::get_or<std::size_t>(v, "samples", "verify", s.verify.samples);
        s.verify.seed = detail::get_or<std::uint64_t>(v, "seed", "verify", s.verify.seed);
    }
    if (j.contains("output")) {
        const json& o = j["output"];
        detail::require_keys(o, "output", {"csv", "certificate", "report"});
        if (o.contains("csv")) s.output.csv = detail::get<std::string>(o, "csv", "output");
        if (o.contains("certificate")) s.output.certificate = detail::get<std::string>(o, "certificate", "output");
        if (o.contains("report")) s.output.report = detail::get<std::string>(o, "report", "output");
    }
    return s;
}

[[nodiscard]] inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

[[nodiscard]] inline Scenario load_scenario(const std::string& path) { return parse_scenario(read_json_file(path)); }

/// Writes to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw ConfigError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
}

namespace detail {

inline json one_based(const std::vector<std::size_t>& idx) {
    json out = json::array();
    for (std::size_t i : idx) out.push_back(i + 1);
    return out;
}

}  // namespace detail

[[nodiscard]] inline json certificate_to_json(const StabilizerCertificate& c) {
    return json{{"x_star", c.x_star.values()},
                {"u_star", c.u_star.values()},
                {"sigma", c.sigma},
                {"L", c.L},
                {"C", c.C},
                {"beta", c.beta},
                {"omega", c.omega},
                {"mu", c.mu},
                {"R", detail::one_based(c.R)},
                {"b", c.b},
                {"epsilon", c.epsilon},
                {"h", c.h},
                {"Q", c.Q},
                {"penalty_slope", c.penalty_slope},
                {"tau_star", c.tau_star},
                {"tau", c.tau},
                {"gamma", c.gamma},
                {"weight_A", c.weight_A},
                {"weight_K", c.weight_K},
                {"K1", c.K1},
                {"K2", c.K2},
                {"L_tilde", c.L_tilde()},
                {"one_minus_L_tilde", c.contraction_gap}};
}

[[nodiscard]] inline StabilizerCertificate certificate_from_json(const json& j) {
    const std::string where = "certificate";
    detail::require_keys(j, where, {"x_star", "u_star", "sigma", "L", "C", "beta", "omega", "mu", "R", "b", "epsilon",
                                    "h", "Q", "penalty_slope", "tau_star", "tau", "gamma", "weight_A", "weight_K",
                                    "K1", "K2", "L_tilde", "one_minus_L_tilde"});
    StabilizerCertificate c;
    c.x_star = State(detail::get<std::vector<double>>(j, "x_star", where));
    c.u_star = Inflows(detail::get<std::vector<double>>(j, "u_star", where));
    const std::size_t n = c.x_star.size();
    c.sigma = detail::get<double>(j, "sigma", where);
    c.L = detail::get<double>(j, "L", where);
    c.C = detail::get<double>(j, "C", where);
    c.beta = detail::vector_of(j, "beta", n, where);
    c.omega = detail::vector_of(j, "omega", n, where);
    c.mu = detail::vector_of(j, "mu", n, where);
    c.R = detail::index_list(j, "R", n, where);
    c.b = detail::vector_of(j, "b", n, where);
    c.epsilon = detail::get<double>(j, "epsilon", where);
    c.h = detail::get<double>(j, "h", where);
    c.Q = detail::get<double>(j, "Q", where);
    c.penalty_slope = detail::get<double>(j, "penalty_slope", where);
    c.tau_star = detail::get<double>(j, "tau_star", where);
    c.tau = detail::get<double>(j, "tau", where);
    c.gamma = detail::vector_of(j, "gamma", n, where);
    c.weight_A = detail::get<double>(j, "weight_A", where);
    c.weight_K = detail::get<double>(j, "weight_K", where);
    c.K1 = detail::get<double>(j, "K1", where);
    c.K2 = detail::get<double>(j, "K2", where);
    c.contraction_gap = detail::get<double>(j, "one_minus_L_tilde", where);
    if (c.u_star.size() != n) throw ConfigError("certificate u_star length differs from x_star");
    return c;
}

[[nodiscard]] inline json decrease_report_to_json(const DecreaseReport& r) {
    json j{{"passed", r.passed()},
           {"checked", r.checked},
           {"rate_violations", r.rate_violations},
           {"claim_violations", r.claim_violations},
           {"worst_rate_margin", r.worst_rate_margin},
           {"worst_claim_margin", r.worst_claim_margin}};
    if (r.witness) {
        j["witness"] = {{"x", r.witness->x.values()},
                        {"d", r.witness->d.values()},
                        {"V_next", r.witness->lhs},
                        {"bound", r.witness->rhs},
                        {"form", r.witness->form}};
    }
    return j;
}

[[nodiscard]] inline json sandwich_report_to_json(const SandwichReport& r) {
    json j{{"passed", r.passed()},
           {"checked", r.checked},
           {"lower_violations", r.lower_violations},
           {"upper_violations", r.upper_violations},
           {"worst_lower_margin", r.worst_lower_margin},
           {"worst_upper_margin", r.worst_upper_margin}};
    if (r.witness) j["witness"] = r.witness->values();
    return j;
}

[[nodiscard]] inline json suite_report_to_json(const SuiteReport& s) {
    json props = json::array();
    for (const auto& r : s.results) {
        json p{{"name", r.name}, {"passed", r.passed()}, {"checked", r.checked}, {"failures", r.failures},
               {"worst_margin", r.worst_margin}};
        if (!r.witness.empty()) p["witness"] = r.witness;
        props.push_back(std::move(p));
    }
    return json{{"passed", s.passed()}, {"properties", props}};
}

/// A controller ready to run, plus the certificate behind it when it has one.
struct BuiltController {
    Controller controller;
    std::optional<StabilizerCertificate> certificate;
    std::optional<State> target;  // x* used for distances, when it exists
};

/// Instantiates `spec` for the scenario. A theory-mode stabilizer is
/// synthesized unless `certificate` is supplied.
[[nodiscard]] inline BuiltController build_controller(const Scenario& s, const ControllerSpec& spec,
                                                      const std::optional<StabilizerCertificate>& certificate = {}) {
    const std::size_t n = s.model.size();
    std::optional<State> x_star;
    try {
        x_star = equilibrium_from_inflows(s.model, s.inflows).x;
    } catch (const NoEquilibriumError&) {
        if (spec.type == ControllerSpec::Type::stabilizer && !certificate) throw;
    }
    switch (spec.type) {
        case ControllerSpec::Type::constant:
            return {ConstantInflow{spec.u.value_or(s.inflows)}, std::nullopt, x_star};
        case ControllerSpec::Type::rlb_pi:
            return {RlbPiController(s.model, spec.rlb, spec.u.value_or(s.inflows)), std::nullopt, x_star};
        case ControllerSpec::Type::stabilizer:
            break;
    }
    const auto& st = spec.stabilizer;
    if (st.theory) {
        StabilizerCertificate cert;
        if (certificate) {
            cert = *certificate;
        } else {
            SynthesisOptions opt;
            opt.sigma = st.sigma;
            opt.eta = st.eta;
            opt.control = st.control;
            cert = synthesize(s.model, s.inflows, opt);
        }
        return {StabilizingFeedback::from_certificate(cert), cert, cert.x_star};
    }
    std::vector<double> gamma(n, 0.0);
    std::vector<double> floor(n, 0.0);
    for (std::size_t k = 0; k < st.R.size(); ++k) {
        gamma[st.R[k]] = st.gamma[k];
        floor[st.R[k]] = st.b[k];
    }
    return {StabilizingFeedback(*x_star, s.inflows, *st.sigma, st.R, gamma, floor), std::nullopt, x_star};
}

/// Simulation options implied by the scenario for a built controller.
[[nodiscard]] inline SimulationOptions simulation_options(const Scenario& s, const BuiltController& built) {
    SimulationOptions o;
    o.horizon = s.horizon;
    o.disturbance = s.disturbance;
    o.measurement = s.measurement;
    o.target = built.target;
    if (built.certificate) o.lyapunov = LyapunovFunction::from_certificate(*built.certificate);
    return o;
}

[[nodiscard]] inline RunRecord run_scenario(const Scenario& s, const ControllerSpec& spec,
                                            const std::optional<StabilizerCertificate>& certificate = {}) {
    BuiltController built = build_controller(s, spec, certificate);
    if (!s.initial_state && !built.target) throw ConfigError("scenario needs 'initial_state' (no equilibrium to start from)");
    const State x0 = s.initial_state ? *s.initial_state : *built.target;
    return simulate(s.model, std::move(built.controller), x0, simulation_options(s, built));
}

}  // namespace freeway

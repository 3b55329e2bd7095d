// Command-line front end: wires coefficient configs through the solvers,
// the path simulator, and the verification reports.
//
// Exit codes: 0 success, 1 internal failure, 2 CONFIG_ERROR, 3 NO_SOLUTION,
// 4 MANY_SOLUTIONS, 5 NO_CONVERGENCE.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "semilin/bsde.hpp"
#include "semilin/coefficients.hpp"
#include "semilin/errors.hpp"
#include "semilin/fields.hpp"
#include "semilin/forward_sim.hpp"
#include "semilin/grid_function.hpp"
#include "semilin/linear_solver.hpp"
#include "semilin/semilinear.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace semilin;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kNoSolution = 3,
    kManySolutions = 4,
    kNoConvergence = 5,
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct Provenance {
    std::string config_hash = hex16(fnv1a(""));
    std::uint64_t seed = 0;

    std::string csv_line() const {
        return std::string("# semilin ") + kVersion + " config=" + config_hash +
               " seed=" + std::to_string(seed) + "\n";
    }
    json to_json() const {
        return json{{"version", kVersion}, {"config_hash", config_hash}, {"seed", seed}};
    }
};

struct Workspace {
    json cfg = json::object();
    bool have_config = false;
    Provenance prov;
    fs::path out = ".";
    // global flag overrides
    std::optional<std::uint64_t> seed_opt;
    std::optional<int> threads_opt;
    // sim flag overrides
    std::optional<double> dt_opt, tmax_opt, x0_opt;
    std::optional<std::uint64_t> paths_opt;
    std::vector<double> interval_opt;     // empty or {lo, hi}
    std::vector<double> checkpoints_opt;  // empty = use config
};

std::ofstream open_out(const Workspace& ws, const std::string& name) {
    fs::create_directories(ws.out);
    const fs::path p = ws.out / name;
    std::ofstream f(p, std::ios::binary);  // plain '\n' endings on every platform
    if (!f) throw ConfigError("cannot open output file for writing: " + p.string());
    return f;
}

void write_json_file(const Workspace& ws, const std::string& name, const json& body) {
    json doc;
    doc["provenance"] = ws.prov.to_json();
    for (const auto& [key, value] : body.items()) doc[key] = value;
    auto f = open_out(ws, name);
    f << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// config access

const json& jsection(const json& root, const std::string& key) {
    if (!root.is_object() || !root.contains(key) || !root.at(key).is_object())
        throw ConfigError("config: missing object section '" + key + "'");
    return root.at(key);
}

template <class T>
T jget(const json& j, const std::string& key, T dflt) {
    if (!j.is_object() || !j.contains(key)) return dflt;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + key + "' has the wrong type");
    }
}

template <class T>
T jrequire(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("config: " + where + " needs a '" + key + "' field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + key + "' in " + where + " has the wrong type");
    }
}

void read_interval(const json& j, const std::string& where, double& lo, double& hi) {
    if (!j.is_object() || !j.contains("interval")) return;
    const auto v = jrequire<std::vector<double>>(j, "interval", where);
    if (v.size() != 2 || !(v[0] < v[1]))
        throw ConfigError("config: 'interval' in " + where + " must be [lo, hi] with lo < hi");
    lo = v[0];
    hi = v[1];
}

// ---------------------------------------------------------------------------
// coefficient and problem specs

ScalarField parse_scalar_field(const json& j, const std::string& what) {
    if (!j.is_object()) throw ConfigError("config: " + what + " must be an object");
    const auto kind = jrequire<std::string>(j, "kind", what);
    if (kind == "const") return ScalarField::constant(jrequire<double>(j, "value", what));
    if (kind == "samples")
        return ScalarField::piecewise_linear(jrequire<double>(j, "x0", what),
                                             jrequire<double>(j, "step", what),
                                             jrequire<std::vector<double>>(j, "values", what));
    if (kind == "brownian-env")
        return ScalarField::brownian_env(jrequire<std::uint64_t>(j, "seed", what),
                                         jrequire<double>(j, "step", what),
                                         jrequire<double>(j, "radius", what));
    // any other kind is an expression id with a parameter list
    return ScalarField::expr(kind, jget<std::vector<double>>(j, "params", {}));
}

CoefficientField parse_coefficients(const json& root) {
    const json& j = jsection(root, "coefficients");
    CoefficientField c;
    if (j.contains("sigma")) c.sigma = parse_scalar_field(j.at("sigma"), "coefficients.sigma");
    if (j.contains("beta")) c.beta = parse_scalar_field(j.at("beta"), "coefficients.beta");
    c.radius = jget<double>(j, "R", c.radius);
    c.grid_step = jget<double>(j, "grid_step", c.grid_step);
    return c;
}

struct ProblemSpec {
    SemilinearProblem prob;
    std::string method = "auto";
    std::string f_id;
    std::vector<double> f_params;
    bool picard_force = false;
    std::size_t cells = 1024;
    bool linear = false;  // F does not depend on (y, z)
};

void require_params(const std::string& id, const std::vector<double>& p, std::size_t n) {
    if (p.size() != n)
        throw ConfigError("config: F id '" + id + "' takes " + std::to_string(n) +
                          " parameter(s), got " + std::to_string(p.size()));
}

void build_catalog_F(ProblemSpec& ps) {
    const auto& id = ps.f_id;
    const auto& p = ps.f_params;
    LipschitzHints h;
    if (id == "const") {
        require_params(id, p, 1);
        const double c = p[0];
        ps.prob.F = [c](double, double, double) { return c; };
        h.lip_y = 0.0;
        h.lip_z = 0.0;
        h.a_mono = 0.0;
        h.sup_abs_F = std::abs(c);
        ps.linear = true;
    } else if (id == "linear-y") {
        require_params(id, p, 1);
        const double c = p[0];
        ps.prob.F = [c](double, double y, double) { return c * y; };
        h.lip_y = std::abs(c);
        h.lip_z = 0.0;
        h.a_mono = c;
    } else if (id == "sin-y") {
        if (p.size() != 1 && p.size() != 2)
            throw ConfigError("config: F id 'sin-y' takes parameters [a] or [a, b]");
        const double a = p[0];
        const double b = p.size() == 2 ? p[1] : 1.0;
        ps.prob.F = [a, b](double, double y, double) { return a * std::sin(b * y); };
        h.lip_y = std::abs(a * b);
        h.lip_z = 0.0;
        h.a_mono = -std::abs(a * b);
        h.sup_abs_F = std::abs(a);
    } else if (id == "affine") {
        require_params(id, p, 3);
        const double c0 = p[0], cy = p[1], cz = p[2];
        ps.prob.F = [c0, cy, cz](double, double y, double z) { return c0 + cy * y + cz * z; };
        h.lip_y = std::abs(cy);
        h.lip_z = std::abs(cz);
        h.a_mono = cy;
        ps.linear = cy == 0.0 && cz == 0.0;
    } else {
        throw ConfigError("config: unknown F id '" + id +
                          "' (catalog: const, linear-y, sin-y, affine)");
    }
    ps.prob.hints = h;
}

ProblemSpec parse_problem(const json& root) {
    const json& j = jsection(root, "problem");
    ProblemSpec ps;

    const json& jf = jsection(j, "F");
    ps.f_id = jrequire<std::string>(jf, "id", "problem.F");
    ps.f_params = jget<std::vector<double>>(jf, "params", {});
    build_catalog_F(ps);

    read_interval(j, "problem", ps.prob.a, ps.prob.b);

    const json& jd = jsection(j, "data");
    const auto type = jrequire<std::string>(jd, "type", "problem.data");
    if (type == "boundary") {
        ps.prob.data = BoundaryData{jrequire<double>(jd, "A", "problem.data"),
                                    jrequire<double>(jd, "B", "problem.data")};
    } else if (type == "initial") {
        ps.prob.data = InitialData{jrequire<double>(jd, "anchor", "problem.data"),
                                   jrequire<double>(jd, "x0", "problem.data"),
                                   jrequire<double>(jd, "x1", "problem.data")};
    } else {
        throw ConfigError("config: problem.data type must be 'boundary' or 'initial'");
    }

    if (j.contains("hints")) {
        const json& jh = j.at("hints");
        if (jh.contains("lip_y")) ps.prob.hints.lip_y = jrequire<double>(jh, "lip_y", "hints");
        if (jh.contains("lip_z")) ps.prob.hints.lip_z = jrequire<double>(jh, "lip_z", "hints");
        if (jh.contains("a_mono")) ps.prob.hints.a_mono = jrequire<double>(jh, "a_mono", "hints");
        if (jh.contains("sup_abs_F"))
            ps.prob.hints.sup_abs_F = jrequire<double>(jh, "sup_abs_F", "hints");
    }

    ps.method = jget<std::string>(j, "method", "auto");
    ps.picard_force = jget<bool>(j, "force", false);
    const auto cells = jget<std::uint64_t>(j, "cells", 1024);
    if (cells < 8 || cells > (1u << 22))
        throw ConfigError("config: problem.cells out of range [8, 4194304]");
    ps.cells = static_cast<std::size_t>(cells);
    return ps;
}

std::uint64_t effective_seed(const Workspace& ws, std::uint64_t dflt) {
    if (ws.seed_opt) return *ws.seed_opt;
    if (ws.cfg.contains("sim")) return jget<std::uint64_t>(ws.cfg.at("sim"), "seed", dflt);
    return dflt;
}

SimConfig parse_sim(Workspace& ws) {
    const json j = ws.cfg.contains("sim") ? ws.cfg.at("sim") : json::object();
    SimConfig cfg;
    cfg.dt = jget<double>(j, "dt", 1e-3);
    cfg.n_paths = jget<std::uint64_t>(j, "paths", 10000);
    cfg.t_max = jget<double>(j, "tmax", 4.0);
    cfg.x0 = jget<double>(j, "x0", 0.5);
    cfg.substeps = static_cast<unsigned>(jget<std::uint64_t>(j, "substeps", 1));
    read_interval(j, "sim", cfg.lo, cfg.hi);

    if (ws.dt_opt) cfg.dt = *ws.dt_opt;
    if (ws.paths_opt) cfg.n_paths = *ws.paths_opt;
    if (ws.tmax_opt) cfg.t_max = *ws.tmax_opt;
    if (ws.x0_opt) cfg.x0 = *ws.x0_opt;
    if (!ws.interval_opt.empty()) {
        if (!(ws.interval_opt[0] < ws.interval_opt[1]))
            throw ConfigError("--interval needs lo < hi");
        cfg.lo = ws.interval_opt[0];
        cfg.hi = ws.interval_opt[1];
    }
    cfg.seed = effective_seed(ws, jget<std::uint64_t>(j, "seed", 1));
    if (ws.threads_opt) cfg.threads = *ws.threads_opt;
    cfg.validate();
    ws.prov.seed = cfg.seed;
    return cfg;
}

// ---------------------------------------------------------------------------
// shared report builders

json conditions_to_json(const ConditionsReport& r) {
    return json{{"a_mono", r.a_mono},
                {"lip_y", r.lip_y},
                {"lip_z", r.lip_z},
                {"gamma", r.gamma},
                {"monotone_nondecreasing", r.monotone_nondecreasing},
                {"gamma_nonpositive", r.gamma_nonpositive},
                {"sup_abs_F", r.sup_abs_F},
                {"linear_growth_const", r.linear_growth_const},
                {"hints_consistent", r.hints_consistent},
                {"n_probes", r.n_probes},
                {"label", r.label}};
}

const char* status_name(BvpStatus s) {
    switch (s) {
        case BvpStatus::Solution: return "Solution";
        case BvpStatus::NoRoot: return "NoRoot";
        case BvpStatus::ManyRoots: return "ManyRoots";
    }
    return "unknown";
}

void write_solution_csv(const Workspace& ws, const GridFunction& u) {
    auto f = open_out(ws, "solution.csv");
    f << ws.prov.csv_line();
    u.write_csv(f);
}

void write_phi_scan(const Workspace& ws, const ShootingResult& r) {
    auto f = open_out(ws, "phi_scan.csv");
    f << ws.prov.csv_line() << "stage,x1,phi\n";
    for (const auto& [x1, phi] : r.scan) f << "scan," << fmt(x1) << ',' << fmt(phi) << '\n';
    for (const auto& [x1, phi] : r.probes) f << "probe," << fmt(x1) << ',' << fmt(phi) << '\n';
}

struct SolveOutcome {
    int code = kOk;
    std::optional<GridFunction> u;
    json meta;
};

SolveOutcome run_shooting(Workspace& ws, const ScaleData& scale, const ProblemSpec& ps) {
    SolveOutcome out;
    ShootingOptions opt;
    opt.cells = ps.cells;
    opt.ivp.cells = ps.cells;
    const ShootingResult r = solve_bvp_shooting(scale, ps.prob, opt);
    write_phi_scan(ws, r);
    out.meta["status"] = status_name(r.status);
    out.meta["evaluations"] = r.evaluations;
    out.meta["scan_points"] = r.scan.size();
    switch (r.status) {
        case BvpStatus::Solution:
            out.meta["slope"] = r.slope;
            out.u = r.u;
            out.code = kOk;
            break;
        case BvpStatus::NoRoot:
            out.code = kNoSolution;
            break;
        case BvpStatus::ManyRoots:
            out.meta["roots"] = r.roots;
            out.code = kManySolutions;
            break;
    }
    return out;
}

SolveOutcome run_ivp(const ScaleData& scale, const ProblemSpec& ps) {
    SolveOutcome out;
    IvpOptions opt;
    opt.cells = ps.cells;
    IvpDiagnostics diag;
    try {
        out.u = solve_semilinear_ivp(scale, ps.prob, opt, &diag);
        out.meta["status"] = "Solution";
        out.code = kOk;
    } catch (const NoConvergence& e) {
        out.meta["status"] = "NoConvergence";
        out.meta["message"] = e.what();
        out.code = kNoConvergence;
    }
    out.meta["iterations"] = diag.iterations;
    out.meta["residual"] = diag.residual;
    out.meta["lambda"] = diag.lambda;
    out.meta["contraction"] = diag.contraction;
    return out;
}

SolveOutcome run_picard(const ScaleData& scale, const ProblemSpec& ps) {
    SolveOutcome out;
    PicardBvpOptions opt;
    opt.cells = ps.cells;
    opt.force = ps.picard_force;
    PicardBvpDiagnostics diag;
    try {
        out.u = solve_bvp_picard(scale, ps.prob, opt, &diag);
        out.meta["status"] = "Solution";
        out.code = kOk;
    } catch (const ContractionNotGuaranteed& e) {
        out.meta["status"] = "ContractionNotGuaranteed";
        out.meta["message"] = e.what();
        out.code = kNoConvergence;
    } catch (const NoConvergence& e) {
        out.meta["status"] = "NoConvergence";
        out.meta["message"] = e.what();
        out.code = kNoConvergence;
    }
    out.meta["iterations"] = diag.iterations;
    out.meta["residual"] = diag.residual;
    out.meta["lipschitz"] = diag.lipschitz;
    out.meta["threshold"] = diag.threshold;
    out.meta["gate_passed"] = diag.gate_passed;
    return out;
}

SolveOutcome run_linear_bvp(const ScaleData& scale, const ProblemSpec& ps) {
    if (!ps.linear)
        throw ConfigError("method 'linear-bvp' needs an F independent of u and u'");
    const auto* bd = std::get_if<BoundaryData>(&ps.prob.data);
    if (!bd) throw ConfigError("method 'linear-bvp' needs boundary data");
    if (std::abs(ps.prob.a) > 1e-12 || std::abs(ps.prob.b - 1.0) > 1e-12)
        throw ConfigError("method 'linear-bvp' runs on the unit interval only");
    SolveOutcome out;
    auto l = [&F = ps.prob.F](double x) { return F(x, 0.0, 0.0); };
    out.u = solve_linear_bvp(scale, l, bd->A, bd->B, ps.cells);
    out.meta["status"] = "Solution";
    out.meta["iterations"] = 1;
    return out;
}

SolveOutcome run_solver(Workspace& ws, const ScaleData& scale, const ProblemSpec& ps) {
    const bool boundary = std::holds_alternative<BoundaryData>(ps.prob.data);
    const bool unit = std::abs(ps.prob.a) < 1e-12 && std::abs(ps.prob.b - 1.0) < 1e-12;

    std::string method = ps.method;
    std::string reason;
    SolveOutcome out;
    if (method == "auto") {
        if (!boundary) {
            method = "ivp";
            reason = "initial data given; the weighted-norm iteration applies directly";
        } else if (!unit) {
            method = "shooting";
            reason = "interval is not [0, 1]; the slope scan transports internally";
        } else {
            ProblemSpec gated = ps;
            gated.picard_force = false;
            out = run_picard(scale, gated);
            if (out.meta["status"] == "ContractionNotGuaranteed") {
                method = "shooting";
                reason = "contraction gate failed (k=" +
                         fmt(out.meta["lipschitz"].get<double>()) +
                         " vs threshold=" + fmt(out.meta["threshold"].get<double>()) +
                         "); falling back to the slope scan";
            } else {
                method = "picard";
                reason = "contraction gate passed: unique fixed point of the kernel map";
                out.meta["method"] = method;
                out.meta["requested_method"] = ps.method;
                out.meta["route_reason"] = reason;
                return out;
            }
        }
    }

    if (method == "ivp") {
        if (boundary) throw ConfigError("method 'ivp' needs initial data, not boundary data");
        out = run_ivp(scale, ps);
    } else if (method == "shooting") {
        if (!boundary) throw ConfigError("method 'shooting' needs boundary data");
        out = run_shooting(ws, scale, ps);
    } else if (method == "picard") {
        if (!boundary) throw ConfigError("method 'picard' needs boundary data");
        if (!unit) throw ConfigError("method 'picard' runs on the unit interval only");
        out = run_picard(scale, ps);
    } else if (method == "linear-bvp") {
        out = run_linear_bvp(scale, ps);
    } else {
        throw ConfigError("config: unknown method '" + method +
                          "' (auto, linear-bvp, ivp, shooting, picard)");
    }
    out.meta["method"] = method;
    out.meta["requested_method"] = ps.method;
    if (!reason.empty()) out.meta["route_reason"] = reason;
    return out;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_scale(Workspace& ws) {
    const CoefficientField coeffs = parse_coefficients(ws.cfg);
    const ScaleData s = build_scale(coeffs);

    {
        auto f = open_out(ws, "sigma.csv");
        f << ws.prov.csv_line() << "x,Sigma,h,h_prime,v\n";
        const auto& xs = s.knots();
        for (std::size_t i = 0; i < xs.size(); ++i) {
            f << fmt(xs[i]) << ',' << fmt(s.sigma_nodes()[i]) << ',' << fmt(s.scale_nodes()[i])
              << ',' << fmt(std::exp(-s.sigma_nodes()[i])) << ',' << fmt(s.speed_nodes()[i])
              << '\n';
        }
    }

    const WellposednessReport wp = check_wellposedness(s);
    const char* verdict = wp.verdict == WellposednessReport::Verdict::Consistent ? "consistent"
                          : wp.verdict == WellposednessReport::Verdict::Inconsistent
                              ? "inconsistent"
                              : "inconclusive";
    write_json_file(ws, "wellposedness.json",
                    json{{"radius", wp.radius},
                         {"threshold", wp.threshold},
                         {"v_left", wp.v_left},
                         {"v_right", wp.v_right},
                         {"monotone_ok", wp.monotone_ok},
                         {"verdict", verdict},
                         {"caveat", wp.caveat}});
    return kOk;
}

int cmd_solve(Workspace& ws) {
    const CoefficientField coeffs = parse_coefficients(ws.cfg);
    const ScaleData scale = build_scale(coeffs);
    const ProblemSpec ps = parse_problem(ws.cfg);

    const ConditionsReport cond = check_uniqueness_conditions(ps.prob);
    write_json_file(ws, "conditions.json", conditions_to_json(cond));

    SolveOutcome out = run_solver(ws, scale, ps);
    if (out.u) write_solution_csv(ws, *out.u);
    write_json_file(ws, "solve_meta.json", out.meta);
    return out.code;
}

void write_paths_csv(const Workspace& ws, const PathEnsemble& ens) {
    auto f = open_out(ws, "paths.csv");
    f << ws.prov.csv_line() << "path,tau,side,exited,censored,range_exceeded,n_steps\n";
    const auto& sums = ens.summaries();
    for (std::size_t i = 0; i < sums.size(); ++i) {
        const PathSummary& p = sums[i];
        f << i << ',' << (p.exited ? fmt(p.tau) : "") << ','
          << (p.exited ? (p.side_high ? "high" : "low") : "") << ',' << int(p.exited) << ','
          << int(p.censored) << ',' << int(p.range_exceeded) << ',' << p.n_steps << '\n';
    }
}

json exit_stats_json(const PathEnsemble& ens) {
    const ExitReport r = exit_stats(ens);
    const SimConfig& c = ens.config();
    return json{{"dt", c.dt},
                {"substeps", c.substeps},
                {"t_max", c.t_max},
                {"x0", c.x0},
                {"interval", {c.lo, c.hi}},
                {"n_paths", r.n_paths},
                {"n_exited", r.n_exited},
                {"n_censored", r.n_censored},
                {"n_range_exceeded", r.n_range_exceeded},
                {"censored_fraction", r.censored_fraction},
                {"degenerate", r.degenerate},
                {"mean_tau", r.mean_tau},
                {"se_tau", r.se_tau},
                {"frac_exit_high", r.frac_exit_high}};
}

int cmd_simulate(Workspace& ws) {
    const CoefficientField coeffs = parse_coefficients(ws.cfg);
    const auto scale = std::make_shared<const ScaleData>(build_scale(coeffs));
    const SimConfig cfg = parse_sim(ws);
    const PathEnsemble ens(scale, cfg);

    write_paths_csv(ws, ens);
    write_json_file(ws, "sim_summary.json", exit_stats_json(ens));

    const json sim = ws.cfg.contains("sim") ? ws.cfg.at("sim") : json::object();
    if (jget<bool>(sim, "dump_paths", false)) {
        const std::size_t rows = cfg.n_paths * ens.config().max_steps();
        std::cerr << "note: full path dump requested; up to " << rows << " rows\n";
        auto f = open_out(ws, "paths_full.csv");
        f << ws.prov.csv_line() << "path,step,t,x\n";
        for (std::size_t p = 0; p < cfg.n_paths; ++p) {
            ens.replay(p, [&](const StepPoint& sp) {
                f << p << ',' << sp.index << ',' << fmt(sp.t) << ',' << fmt(sp.x) << '\n';
            });
        }
    }
    return kOk;
}

json exp_moment_row(const PathEnsemble& ens, const CoefficientField& coeffs, double gamma) {
    const ExpMomentEstimate est = estimate_exp_moment(ens, gamma);
    json row{{"gamma", gamma},
             {"estimate", est.mean},
             {"se", est.se},
             {"n_exited", est.n_exited},
             {"censored_fraction", est.censored_fraction},
             {"censored_floor", est.censored_floor}};
    if (!est.caveat.empty()) row["caveat"] = est.caveat;
    const SimConfig& c = ens.config();
    try {
        const double cf = exp_moment_exit_closed_form(coeffs, gamma, c.lo, c.hi, c.x0);
        if (std::isinf(cf)) {
            row["closed_form"] = "infinite";
        } else {
            row["closed_form"] = cf;
            row["abs_error"] = std::abs(est.mean - cf);
        }
    } catch (const Unsupported&) {
        row["closed_form"] = nullptr;
    }
    return row;
}

int cmd_exit_time(Workspace& ws) {
    const CoefficientField coeffs = parse_coefficients(ws.cfg);
    const auto scale = std::make_shared<const ScaleData>(build_scale(coeffs));
    SimConfig cfg = parse_sim(ws);
    if (std::abs(cfg.lo) > 1e-12 || std::abs(cfg.hi - 1.0) > 1e-12)
        throw ConfigError("exit-time analysis compares against the unit-interval mean; "
                          "set sim.interval to [0, 1]");

    const json ex = ws.cfg.contains("exit") ? ws.cfg.at("exit") : json::object();
    const bool richardson = jget<bool>(ex, "richardson", true);
    const auto gammas = jget<std::vector<double>>(ex, "gammas", {0.0, 1.0});

    const GridFunction gamma_fn = gamma_function(*scale);

    json body;
    std::shared_ptr<const PathEnsemble> sample;  // ensemble used for the moment table
    if (richardson) {
        SimConfig coarse_cfg = cfg;
        coarse_cfg.substeps = 2 * cfg.substeps;
        SimConfig fine_cfg = cfg;
        fine_cfg.dt = cfg.dt / 2.0;
        const auto coarse = std::make_shared<const PathEnsemble>(scale, coarse_cfg);
        const auto fine = std::make_shared<const PathEnsemble>(scale, fine_cfg);
        const GammaComparison cmp = compare_exit_to_gamma(*coarse, *fine, gamma_fn);
        body["levels"] = json::array({exit_stats_json(*coarse), exit_stats_json(*fine)});
        body["gamma_comparison"] = json{{"expected", cmp.expected},
                                        {"estimate", cmp.estimate},
                                        {"se", cmp.se},
                                        {"z", cmp.z},
                                        {"consistent", cmp.consistent},
                                        {"richardson", cmp.richardson},
                                        {"dt_coarse", cmp.dt_coarse},
                                        {"dt_fine", cmp.dt_fine},
                                        {"bias_note", cmp.bias_note}};
        sample = fine;
    } else {
        const auto ens = std::make_shared<const PathEnsemble>(scale, cfg);
        const GammaComparison cmp = compare_exit_to_gamma(*ens, gamma_fn);
        body["levels"] = json::array({exit_stats_json(*ens)});
        body["gamma_comparison"] = json{{"expected", cmp.expected},
                                        {"estimate", cmp.estimate},
                                        {"se", cmp.se},
                                        {"z", cmp.z},
                                        {"consistent", cmp.consistent},
                                        {"richardson", cmp.richardson},
                                        {"bias_note", cmp.bias_note}};
        sample = ens;
    }

    json table = json::array();
    for (double g : gammas) table.push_back(exp_moment_row(*sample, coeffs, g));
    body["exp_moments"] = table;

    write_json_file(ws, "exit_report.json", body);
    return kOk;
}

int cmd_verify(Workspace& ws) {
    const CoefficientField coeffs = parse_coefficients(ws.cfg);
    const ScaleData scale_obj = build_scale(coeffs);
    const auto scale = std::make_shared<const ScaleData>(scale_obj);
    const ProblemSpec ps = parse_problem(ws.cfg);
    SimConfig cfg = parse_sim(ws);

    const bool unit_problem =
        std::abs(ps.prob.a) < 1e-12 && std::abs(ps.prob.b - 1.0) < 1e-12;
    if (!unit_problem) throw ConfigError("verify runs on problems posed on [0, 1]");
    cfg.lo = ps.prob.a;
    cfg.hi = ps.prob.b;

    const ConditionsReport cond = check_uniqueness_conditions(ps.prob);
    write_json_file(ws, "conditions.json", conditions_to_json(cond));

    SolveOutcome out = run_solver(ws, scale_obj, ps);
    write_json_file(ws, "solve_meta.json", out.meta);
    if (!out.u) return out.code;
    const GridFunction& u = *out.u;
    write_solution_csv(ws, u);

    double A = u.values().front();
    double B = u.values().back();
    if (const auto* bd = std::get_if<BoundaryData>(&ps.prob.data)) {
        A = bd->A;
        B = bd->B;
    }

    const json vj = ws.cfg.contains("verify") ? ws.cfg.at("verify") : json::object();
    std::vector<double> checkpoints = jget<std::vector<double>>(vj, "checkpoints", {0.0});
    if (!ws.checkpoints_opt.empty()) checkpoints = ws.checkpoints_opt;
    const double gamma = jget<double>(vj, "gamma", 0.0);
    auto horizons = jget<std::vector<double>>(
        vj, "horizons", {cfg.t_max / 4.0, cfg.t_max / 2.0, cfg.t_max});

    SimConfig coarse_cfg = cfg;
    coarse_cfg.substeps = 2 * cfg.substeps;
    SimConfig fine_cfg = cfg;
    fine_cfg.dt = cfg.dt / 2.0;
    const PathEnsemble coarse(scale, coarse_cfg);
    const PathEnsemble fine(scale, fine_cfg);

    auto gen = generator_from_F(ps.prob.F, [coeffs](double x) { return coeffs.sigma2(x); });
    const ResidualReport rc = bsde_residual(coarse, u, gen, A, B, checkpoints);
    const ResidualReport rf = bsde_residual(fine, u, gen, A, B, checkpoints);

    {
        auto f = open_out(ws, "residuals.csv");
        f << ws.prov.csv_line() << "dt,checkpoint,rms,mean,n_alive\n";
        for (const ResidualReport* r : {&rc, &rf}) {
            const double dt = r == &rc ? coarse_cfg.dt : fine_cfg.dt;
            for (std::size_t i = 0; i < r->checkpoints.size(); ++i)
                f << fmt(dt) << ',' << fmt(r->checkpoints[i]) << ',' << fmt(r->rms[i]) << ','
                  << fmt(r->mean[i]) << ',' << r->n_alive[i] << '\n';
        }
    }

    const NormClassReport norm = norm_class_estimate(fine, u, gamma, horizons);
    const bool decay_ok = rf.rms.front() <= rc.rms.front();
    json body{{"gamma", norm.gamma},
              {"horizons", norm.horizons},
              {"estimates", norm.estimates},
              {"ratios", norm.ratios},
              {"verdict", norm.verdict},
              {"residual_decay_ok", decay_ok},
              {"checkpoints", checkpoints},
              {"dt_coarse", coarse_cfg.dt},
              {"dt_fine", fine_cfg.dt},
              {"rms_coarse", rc.rms},
              {"rms_fine", rf.rms}};
    if (!rf.caveat.empty()) body["residual_caveat"] = rf.caveat;
    write_json_file(ws, "norm_class.json", body);
    return kOk;
}

int cmd_r60_demo(Workspace& ws) {
    // Resonant boundary problem: u'' = -pi^2 u on [0, 1] with A = B = 0 admits
    // the family u = eta sin(pi x).  The slope scan reports the multiplicity,
    // one member is reconstructed, and the weighted-norm diagnostic shows the
    // member leaving the uniqueness class at the supercritical weight.
    const double pi = std::numbers::pi;
    const std::uint64_t seed = ws.seed_opt ? *ws.seed_opt : 1618;
    ws.prov.seed = seed;

    CoefficientField pde_field;
    pde_field.sigma = ScalarField::constant(std::numbers::sqrt2);
    const ScaleData pde_scale = build_scale(pde_field);

    ProblemSpec ps;
    ps.f_id = "linear-y";
    ps.f_params = {-pi * pi};
    build_catalog_F(ps);
    ps.prob.data = BoundaryData{0.0, 0.0};
    ps.cells = 512;

    ShootingOptions sopt;
    sopt.cells = ps.cells;
    sopt.ivp.cells = ps.cells;
    const ShootingResult r = solve_bvp_shooting(pde_scale, ps.prob, sopt);
    {
        auto f = open_out(ws, "r60_scan.csv");
        f << ws.prov.csv_line() << "x1,phi\n";
        for (const auto& [x1, phi] : r.scan) f << fmt(x1) << ',' << fmt(phi) << '\n';
    }
    if (r.status != BvpStatus::ManyRoots) {
        std::cerr << "error: expected the scan to report a root continuum, got "
                  << status_name(r.status) << "\n";
        return kFailure;
    }

    // member with unit amplitude: initial slope u'(0) = pi
    ProblemSpec member = ps;
    member.prob.data = InitialData{0.0, 0.0, pi};
    IvpOptions iopt;
    iopt.cells = ps.cells;
    const GridFunction u = solve_semilinear_ivp(pde_scale, member.prob, iopt);
    double sup_err = 0.0;
    for (std::size_t i = 0; i < u.grid().size(); ++i)
        sup_err = std::max(sup_err, std::abs(u.values()[i] - std::sin(pi * u.grid()[i])));

    const ConditionsReport cond = check_uniqueness_conditions(ps.prob);

    // driving diffusion: standard Brownian motion started at the midpoint
    const auto bscale = std::make_shared<const ScaleData>(build_scale(CoefficientField{}));
    SimConfig cfg;
    cfg.dt = ws.dt_opt ? *ws.dt_opt : 1e-3;
    cfg.n_paths = ws.paths_opt ? *ws.paths_opt : 40000;
    cfg.seed = seed;
    cfg.t_max = ws.tmax_opt ? *ws.tmax_opt : 4.0;
    cfg.x0 = 0.5;
    if (ws.threads_opt) cfg.threads = *ws.threads_opt;
    cfg.validate();
    const PathEnsemble ens(bscale, cfg);

    const double gamma_hot = cond.gamma;  // lip_z^2 - 2 a_mono, about 2 pi^2
    const std::vector<double> horizons{cfg.t_max / 4.0, cfg.t_max / 2.0, cfg.t_max};
    const NormClassReport cold = norm_class_estimate(ens, u, 0.0, horizons);
    const NormClassReport hot = norm_class_estimate(ens, u, gamma_hot, horizons);
    const HorizonSweep sweep = exp_moment_horizon_sweep(ens, gamma_hot, horizons);

    json body{
        {"family",
         json{{"status", status_name(r.status)},
              {"n_roots", r.roots.size()},
              {"scan_points", r.scan.size()},
              {"member_slope", pi},
              {"member_sup_error_vs_sine", sup_err}}},
        {"conditions", conditions_to_json(cond)},
        {"norm_class",
         json{{"gamma_zero",
               json{{"gamma", 0.0},
                    {"estimates", cold.estimates},
                    {"verdict", cold.verdict}}},
              {"supercritical",
               json{{"gamma", gamma_hot},
                    {"horizons", hot.horizons},
                    {"estimates", hot.estimates},
                    {"ratios", hot.ratios},
                    {"verdict", hot.verdict}}}}},
        {"exp_moment_sweep",
         json{{"gamma", sweep.gamma},
              {"horizons", sweep.horizons},
              {"estimates", sweep.estimates},
              {"ratios", sweep.ratios},
              {"verdict", sweep.verdict}}},
        {"note",
         "nonzero members of the zero-boundary family fall outside the uniqueness "
         "class: their exponential-weighted norm diverges at the reported gamma"}};
    write_json_file(ws, "r60_report.json", body);
    return kOk;
}

int cmd_kernel(Workspace& ws) {
    const CoefficientField coeffs = parse_coefficients(ws.cfg);
    const ScaleData scale = build_scale(coeffs);
    const json kj = ws.cfg.contains("kernel") ? ws.cfg.at("kernel") : json::object();
    const auto n = jget<std::uint64_t>(kj, "grid", 33);
    if (n < 2 || n > 4096) throw ConfigError("config: kernel.grid out of range [2, 4096]");

    {
        auto f = open_out(ws, "kernel.csv");
        f << ws.prov.csv_line() << "x,y,K,dxK\n";
        for (std::uint64_t i = 0; i < n; ++i) {
            const double x = double(i) / double(n - 1);
            for (std::uint64_t j = 0; j < n; ++j) {
                const double y = double(j) / double(n - 1);
                f << fmt(x) << ',' << fmt(y) << ',' << fmt(green_kernel(scale, x, y)) << ','
                  << fmt(green_kernel_dx(scale, x, y)) << '\n';
            }
        }
    }
    const auto bound_nx = jget<std::uint64_t>(kj, "bound_nx", 128);
    write_json_file(ws, "kernel_meta.json",
                    json{{"grid", n},
                         {"bound_nx", bound_nx},
                         {"kernel_bound", kernel_bound(scale, bound_nx)}});
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semilinear elliptic solver with diffusion simulation and verification"};
    app.require_subcommand(1);
    app.fallthrough();

    Workspace ws;
    std::string config_path;
    std::string out_dir = ".";
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--out", out_dir, "output directory, created if missing");
    app.add_option("--seed", ws.seed_opt, "override the simulation seed");
    app.add_option("--threads", ws.threads_opt, "worker threads (0 = hardware)");

    auto* scale_cmd =
        app.add_subcommand("scale", "tabulate the scale objects and run the wellposedness check");
    auto* solve_cmd = app.add_subcommand("solve", "solve the boundary or initial value problem");
    auto* sim_cmd = app.add_subcommand("simulate", "simulate first-exit paths of the diffusion");
    auto* exit_cmd =
        app.add_subcommand("exit-time", "exit-time statistics against the closed-form targets");
    auto* verify_cmd = app.add_subcommand(
        "verify", "solve, simulate, and check the induced stochastic triple");
    auto* demo_cmd = app.add_subcommand(
        "r60-demo", "canned demonstration: resonant boundary family and its norm diagnostic");
    auto* kernel_cmd = app.add_subcommand("kernel", "dump the Green kernel on a grid");
    (void)scale_cmd;
    (void)solve_cmd;
    (void)kernel_cmd;

    for (auto* c : {sim_cmd, exit_cmd, verify_cmd, demo_cmd}) {
        c->add_option("--dt", ws.dt_opt, "time step");
        c->add_option("--paths", ws.paths_opt, "number of simulated paths");
        c->add_option("--tmax", ws.tmax_opt, "censoring horizon");
        if (c != demo_cmd) {
            c->add_option("--x0", ws.x0_opt, "start point");
            c->add_option("--interval", ws.interval_opt, "exit interval: lo hi")->expected(2);
        }
    }
    verify_cmd->add_option("--checkpoints", ws.checkpoints_opt,
                           "residual checkpoint times (space separated)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    ws.out = out_dir;
    if (!config_path.empty()) {
        std::ifstream f(config_path, std::ios::binary);
        if (!f) {
            std::cerr << "error: cannot read config file: " << config_path << "\n";
            return kConfigError;
        }
        std::ostringstream buf;
        buf << f.rdbuf();
        const std::string raw = buf.str();
        ws.prov.config_hash = hex16(fnv1a(raw));
        try {
            ws.cfg = json::parse(raw);
        } catch (const nlohmann::json::parse_error& e) {
            std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
            return kConfigError;
        }
        if (!ws.cfg.is_object()) {
            std::cerr << "error: config root must be a JSON object\n";
            return kConfigError;
        }
        ws.have_config = true;
    }
    ws.prov.seed = effective_seed(ws, 0);

    try {
        const bool needs_config = !demo_cmd->parsed();
        if (needs_config && !ws.have_config)
            throw ConfigError("this command needs --config pointing to a JSON file");

        if (scale_cmd->parsed()) return cmd_scale(ws);
        if (solve_cmd->parsed()) return cmd_solve(ws);
        if (sim_cmd->parsed()) return cmd_simulate(ws);
        if (exit_cmd->parsed()) return cmd_exit_time(ws);
        if (verify_cmd->parsed()) return cmd_verify(ws);
        if (demo_cmd->parsed()) return cmd_r60_demo(ws);
        if (kernel_cmd->parsed()) return cmd_kernel(ws);
        std::cerr << "error: no subcommand selected\n";
        return kConfigError;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const CoefficientError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const UnsupportedRepresentation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ContractionNotGuaranteed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNoConvergence;
    } catch (const NoConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNoConvergence;
    } catch (const IllConditioned& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNoConvergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}

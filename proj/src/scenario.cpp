#include "evofam/scenario.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace evofam {

namespace {

[[noreturn]] void fail_at(const std::string& where, const std::string& what) {
    throw ValidationError("scenario: " + where + ": " + what);
}

double need_number(const Json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number()) fail_at(where, "missing numeric field '" + key + "'");
    return j[key].get<double>();
}

double number_or(const Json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j[key].get<double>() : fallback;
}

std::string string_or(const Json& j, const std::string& key, const std::string& fallback) {
    return j.contains(key) ? j[key].get<std::string>() : fallback;
}

ScalarSchedule parse_scalar_schedule(const Json& j, double horizon, const std::string& where) {
    if (j.is_number()) return ScalarSchedule::constant(j.get<double>());
    if (!j.is_object() || !j.contains("kind")) fail_at(where, "schedule must be a number or an object with 'kind'");
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "constant") return ScalarSchedule::constant(need_number(j, "value", where));
    if (kind == "piecewise") {
        std::vector<double> times = j.at("times").get<std::vector<double>>();
        std::vector<double> values = j.at("values").get<std::vector<double>>();
        if (times.size() != values.size() + 1) fail_at(where, "'times' must be one longer than 'values'");
        if (std::abs(times.back() - horizon) > 1e-12) fail_at(where, "'times' must end at the horizon");
        return ScalarSchedule::piecewise(std::move(times), std::move(values));
    }
    if (kind == "sinusoid") {
        ScalarSchedule s;
        const double offset = need_number(j, "offset", where);
        const double amp = need_number(j, "amplitude", where);
        const double freq = number_or(j, "frequency", 1.0);
        s.value = [offset, amp, freq](double t) { return offset + amp * std::sin(freq * t); };
        s.regularity = Regularity::Smooth;
        s.lo = offset - std::abs(amp);
        s.hi = offset + std::abs(amp);
        return s;
    }
    fail_at(where, "unknown schedule kind '" + kind + "'");
}

EdgeSchedule parse_edge_schedule(const Json& j, Index n_edges, double horizon,
                                 const std::string& where) {
    if (j.is_object() && string_or(j, "kind", "") == "per_edge") {
        const auto& items = j.at("items");
        if (static_cast<Index>(items.size()) != n_edges)
            fail_at(where, "per_edge schedule needs one item per edge");
        auto shared = std::make_shared<std::vector<ScalarSchedule>>();
        EdgeSchedule es;
        es.regularity = Regularity::PiecewiseConstant;
        std::set<double> bps;
        for (const auto& item : items) {
            shared->push_back(parse_scalar_schedule(item, horizon, where));
            if (shared->back().regularity == Regularity::Smooth) es.regularity = Regularity::Smooth;
            for (double b : shared->back().breakpoints) bps.insert(b);
        }
        es.breakpoints.assign(bps.begin(), bps.end());
        es.weights = [shared, n_edges](double t) {
            RealVector m(n_edges);
            for (Index e = 0; e < n_edges; ++e) m[e] = (*shared)[e].value(t);
            return m;
        };
        return es;
    }
    ScalarSchedule s = parse_scalar_schedule(j, horizon, where);
    EdgeSchedule es;
    es.regularity = s.regularity;
    es.breakpoints = s.breakpoints;
    const auto fn = s.value;
    es.weights = [fn, n_edges](double t) { return RealVector::Constant(n_edges, fn(t)); };
    return es;
}

std::function<Complex(double, double)> parse_coefficient(const Json& j, double horizon,
                                                         const std::string& where) {
    if (j.is_null()) return nullptr;
    if (j.is_number()) {
        const double v = j.get<double>();
        return [v](double, double) { return Complex(v, 0.0); };
    }
    // reuse the scalar schedules as t-dependent, x-independent coefficients
    ScalarSchedule s = parse_scalar_schedule(j, horizon, where);
    const auto fn = s.value;
    return [fn](double t, double) { return Complex(fn(t), 0.0); };
}

GraphModel parse_graph_model(const Json& spec, double horizon, const std::string& where) {
    const Json& g = spec.contains("graph") ? spec["graph"] : spec;
    const std::string kind = string_or(g, "kind", "path");
    GraphModel model;
    if (kind == "k2") {
        model = make_path_graph(2, EdgeSchedule{}, horizon);
    } else if (kind == "path") {
        model = make_path_graph(static_cast<Index>(need_number(g, "nodes", where)), EdgeSchedule{},
                                horizon);
    } else if (kind == "z_lattice") {
        model = make_truncated_z_lattice(static_cast<Index>(need_number(g, "radius", where)),
                                         EdgeSchedule{}, horizon);
    } else if (kind == "cycle") {
        model = make_directed_cycle(static_cast<Index>(need_number(g, "nodes", where)),
                                    EdgeSchedule{}, horizon);
    } else {
        fail_at(where, "unknown graph kind '" + kind + "'");
    }
    model.schedule = parse_edge_schedule(spec.at("schedule"), static_cast<Index>(model.edges.size()),
                                         horizon, where + ".schedule");
    if (spec.contains("dirichlet"))
        for (const auto& v : spec["dirichlet"]) model.dirichlet_nodes.push_back(v.get<Index>());
    model.absorbing_off_edges = spec.contains("absorbing_off_edges") &&
                                spec["absorbing_off_edges"].get<bool>();
    return model;
}

Elliptic1DModel parse_elliptic_model(const Json& spec, double horizon, const std::string& where) {
    Elliptic1DModel m;
    m.x_min = number_or(spec, "x_min", 0.0);
    m.x_max = number_or(spec, "x_max", 1.0);
    m.cells = static_cast<int>(number_or(spec, "cells", 64));
    m.boundary = string_or(spec, "boundary", "neumann") == "dirichlet"
                     ? Elliptic1DModel::Boundary::Dirichlet
                     : Elliptic1DModel::Boundary::Neumann;
    m.nu = number_or(spec, "nu", 1.0);
    m.c0 = number_or(spec, "c0", 1.0);
    m.horizon = horizon;
    m.a11 = spec.contains("a11") ? parse_coefficient(spec["a11"], horizon, where + ".a11")
                                 : parse_coefficient(Json(1.0), horizon, where);
    if (spec.contains("b1")) m.b1 = parse_coefficient(spec["b1"], horizon, where + ".b1");
    if (spec.contains("c1")) m.c1 = parse_coefficient(spec["c1"], horizon, where + ".c1");
    if (spec.contains("a0")) m.a0 = parse_coefficient(spec["a0"], horizon, where + ".a0");
    // breakpoints from any piecewise coefficient
    std::set<double> bps;
    for (const char* key : {"a11", "b1", "c1", "a0"})
        if (spec.contains(key) && spec[key].is_object() &&
            string_or(spec[key], "kind", "") == "piecewise") {
            auto times = spec[key]["times"].get<std::vector<double>>();
            for (std::size_t i = 1; i + 1 < times.size(); ++i) bps.insert(times[i]);
            m.regularity = Regularity::PiecewiseConstant;
        }
    m.breakpoints.assign(bps.begin(), bps.end());
    if (bps.empty()) m.regularity = Regularity::PiecewiseConstant;  // t-independent default
    return m;
}

}  // namespace

OperatorPath build_model(const Json& spec, double horizon) {
    const std::string where = "model";
    if (!spec.is_object() || !spec.contains("type")) fail_at(where, "missing 'type'");
    const std::string type = spec["type"].get<std::string>();
    if (type == "dynamic_graph") return build_dynamic_graph(parse_graph_model(spec, horizon, where));
    if (type == "pagerank") return build_pagerank(parse_graph_model(spec, horizon, where));
    if (type == "black_scholes") {
        ScalarSchedule sigma =
            parse_scalar_schedule(spec.at("sigma"), horizon, where + ".sigma");
        return build_black_scholes(sigma, need_number(spec, "rate", where),
                                   number_or(spec, "x_min", 0.5), number_or(spec, "x_max", 4.0),
                                   static_cast<int>(number_or(spec, "cells", 128)), horizon);
    }
    if (type == "metric_interval") {
        ScalarSchedule c =
            parse_scalar_schedule(spec.at("conductance"), horizon, where + ".conductance");
        return build_metric_graph(make_interval_model(
            static_cast<int>(number_or(spec, "points", 64)), std::move(c), horizon));
    }
    if (type == "metric_star") {
        return build_metric_graph(
            make_star_model(static_cast<int>(number_or(spec, "edges", 3)),
                            static_cast<int>(number_or(spec, "points", 32)), horizon));
    }
    if (type == "metric_loop") {
        return build_metric_graph(
            make_loop_model(static_cast<int>(number_or(spec, "points", 32)), horizon));
    }
    if (type == "elliptic_1d") return build_elliptic_1d(parse_elliptic_model(spec, horizon, where));
    fail_at(where, "unknown model type '" + type + "'");
}

// ---------------------------------------------------------------------------
// parsing

Scenario parse_scenario(const Json& j) {
    Scenario s;
    if (!j.is_object()) fail_at("$", "scenario must be a JSON object");
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        fail_at("schema_version", "expected schema_version 1");
    s.name = string_or(j, "name", "unnamed");
    s.description = string_or(j, "description", "");
    s.seed = j.contains("seed") ? j["seed"].get<std::uint64_t>() : 1;
    s.horizon = need_number(j, "horizon", "horizon");
    if (!(s.horizon > 0)) fail_at("horizon", "must be positive");
    s.tolerance = number_or(j, "tolerance", 1e-8);
    if (!(s.tolerance > 0)) fail_at("tolerance", "must be positive");
    s.runtime_budget_seconds = number_or(j, "runtime_budget_seconds", 120.0);
    s.grid_points = static_cast<int>(number_or(j, "grid_points", 10));
    if (!j.contains("model")) fail_at("model", "missing");
    s.model = j["model"];
    if (!j.contains("checks") || !j["checks"].is_array() || j["checks"].empty())
        fail_at("checks", "need a nonempty array");
    for (std::size_t i = 0; i < j["checks"].size(); ++i) {
        const auto& c = j["checks"][i];
        CheckRequest req;
        if (c.is_string()) {
            req.name = c.get<std::string>();
        } else if (c.is_object() && c.contains("name")) {
            req.name = c["name"].get<std::string>();
            const std::string expect = string_or(c, "expect", "holds");
            if (expect == "holds") req.expect = Verdict::Holds;
            else if (expect == "fails") req.expect = Verdict::Fails;
            else if (expect == "not-applicable") req.expect = Verdict::NotApplicable;
            else fail_at("checks[" + std::to_string(i) + "].expect", "unknown verdict '" + expect + "'");
            req.params = c;
        } else {
            fail_at("checks[" + std::to_string(i) + "]", "must be a name or an object with 'name'");
        }
        const auto names = known_checks();
        if (std::find(names.begin(), names.end(), req.name) == names.end())
            fail_at("checks[" + std::to_string(i) + "]", "unknown check '" + req.name + "'");
        s.checks.push_back(std::move(req));
    }
    s.output_dir = string_or(j, "output_dir", "out");

    // grid sanity: any explicit evaluation times must lie in [0, horizon]
    if (j.contains("grid") && j["grid"].is_array())
        for (const auto& t : j["grid"])
            if (t.get<double>() < 0 || t.get<double>() > s.horizon)
                fail_at("grid", "evaluation time outside [0, horizon]");
    return s;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("scenario: cannot open file " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("scenario: JSON parse error in ") + path + ": " + e.what());
    }
    return parse_scenario(j);
}

// ---------------------------------------------------------------------------
// report serialization

Json report_to_json(const PropertyReport& rep) {
    Json j;
    j["property"] = rep.property_name;
    j["verdict"] = to_string(rep.verdict);
    if (rep.criterion_verdict) j["criterion_verdict"] = to_string(*rep.criterion_verdict);
    auto put = [&j](const char* key, double v) {
        if (std::isfinite(v)) j[key] = v;
    };
    put("bound_requested", rep.bound_requested);
    put("bound_measured", rep.bound_measured);
    put("margin", rep.margin);
    j["samples_used"] = rep.samples_used;
    j["seed"] = rep.seed;
    if (rep.witness) {
        Json w;
        if (std::isfinite(rep.witness->t)) w["t"] = rep.witness->t;
        if (std::isfinite(rep.witness->s)) w["s"] = rep.witness->s;
        if (rep.witness->i >= 0) w["i"] = rep.witness->i;
        if (rep.witness->j >= 0) w["j"] = rep.witness->j;
        if (!rep.witness->note.empty()) w["note"] = rep.witness->note;
        j["witness"] = w;
    }
    if (!rep.details.empty()) {
        Json d;
        for (const auto& [k, v] : rep.details) d[k] = v;  // std::map: sorted, deterministic
        j["details"] = d;
    }
    if (!rep.notes.empty()) j["notes"] = rep.notes;
    return j;
}

Json fit_to_json(const KernelBoundFit& fit) {
    Json j;
    j["c"] = fit.c;
    j["n"] = fit.n;
    j["omega"] = fit.omega;
    if (fit.b) j["b"] = *fit.b;
    j["beta"] = fit.beta;
    j["envelope_misfit"] = fit.envelope_misfit;
    j["envelope_residual"] = fit.envelope_residual;
    if (std::isfinite(fit.residual)) j["residual"] = fit.residual;
    j["rho_grid"] = fit.rho_grid;
    j["psi_family"] = fit.psi_family;
    j["metric"] = fit.metric;
    Json cells = Json::array();
    for (const auto& c : fit.cells) {
        Json cj;
        cj["psi"] = c.psi_id;
        cj["rho"] = c.rho;
        cj["omega_rho"] = c.omega_rho;
        cj["dt"] = c.dt;
        cj["norm_1_inf"] = c.norm_1_inf;
        cells.push_back(cj);
    }
    j["cells"] = cells;
    return j;
}

// ---------------------------------------------------------------------------
// check dispatch

namespace {

struct CheckOutcome {
    PropertyReport report;
    Json extra;  // optional structured payload (e.g. the kernel-bound fit)
};

std::string format_csv_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::vector<double> dt_grid_from(const Json& params, double horizon) {
    if (params.contains("dt_grid")) return params["dt_grid"].get<std::vector<double>>();
    std::vector<double> dts;
    for (int k = 8; k >= 0; --k) dts.push_back(std::ldexp(horizon, -k));
    return dts;
}

std::vector<DaviesWeight> parse_psi_family(const Json& params, const DiscreteSpace& space) {
    std::vector<DaviesWeight> family;
    if (!params.contains("psi")) {
        family.push_back(coordinate_weight(space, +1.0, "coordinate+"));
        family.push_back(coordinate_weight(space, -1.0, "coordinate-"));
        return family;
    }
    for (const auto& p : params["psi"]) {
        const std::string id = p.get<std::string>();
        if (id == "coordinate+") family.push_back(coordinate_weight(space, +1.0, id));
        else if (id == "coordinate-") family.push_back(coordinate_weight(space, -1.0, id));
        else if (id.rfind("clipped:", 0) == 0) {
            std::stringstream ss(id.substr(8));
            double center, radius;
            char colon;
            ss >> center >> colon >> radius;
            if (ss.fail()) throw ValidationError("davies psi: malformed '" + id + "'");
            family.push_back(clipped_distance_weight(space, center, radius, id));
        } else {
            throw ValidationError("davies psi: unknown weight '" + id + "'");
        }
    }
    return family;
}

struct RunContext {
    const Scenario* scenario;
    const OperatorPath* path;
    const Propagator* prop;
    const std::vector<std::pair<double, double>>* pairs;
    std::vector<std::pair<std::string, std::string>>* csv_files;
    std::uint64_t seed;
};

void append_curve_csv(RunContext& ctx, const std::string& name,
                      const std::vector<std::array<double, 4>>& rows) {
    std::string text = "t,s,measured,bound\r\n";
    for (const auto& r : rows)
        text += format_csv_double(r[0]) + "," + format_csv_double(r[1]) + "," +
                format_csv_double(r[2]) + "," + format_csv_double(r[3]) + "\r\n";
    ctx.csv_files->emplace_back(name + ".csv", std::move(text));
}

CheckOutcome run_check(RunContext& ctx, const CheckRequest& req) {
    const Propagator& prop = *ctx.prop;
    const OperatorPath& path = *ctx.path;
    const auto& pairs = *ctx.pairs;
    const Json& params = req.params;
    CheckOutcome out;

    if (req.name == "quasi_contractivity") {
        Profile omega = omega_profile(path, default_time_grid(path, 64));
        out.report = check_quasi_contractivity(prop, omega, pairs,
                                               number_or(params, "tol", 1e-9));
        std::vector<std::array<double, 4>> rows;
        for (const auto& [t, s] : pairs)
            rows.push_back({t, s, spectral_norm_weighted(prop.space(), prop.evaluate(t, s)),
                            std::exp(omega.integrate(s, t))});
        append_curve_csv(ctx, "curve_quasi_contractivity", rows);
    } else if (req.name == "positivity") {
        out.report = check_positivity(prop, pairs);
    } else if (req.name == "complete_contractivity") {
        out.report = check_linf_l1_contractivity(prop, pairs);
    } else if (req.name == "sub_markovian") {
        PropertyReport pos = check_positivity(prop, pairs);
        PropertyReport con = check_linf_l1_contractivity(prop, pairs);
        out.report = pos;
        out.report.property_name = "sub-markovian";
        out.report.details["norm_inf_to_inf"] = con.details["norm_inf_to_inf"];
        const bool ok =
            pos.verdict == Verdict::Holds && con.details["norm_inf_to_inf"] <= 1.0 + 1e-10;
        out.report.verdict = ok ? Verdict::Holds : Verdict::Fails;
    } else if (req.name == "stochasticity") {
        out.report = check_stochastic(prop, pairs);
    } else if (req.name == "lp_quasi_contractivity" || req.name == "lp_sweep") {
        std::vector<double> ps;
        if (req.name == "lp_sweep")
            ps = params.contains("ps") ? params["ps"].get<std::vector<double>>()
                                       : std::vector<double>{2, 4, 8, 16};
        else
            ps = {need_number(params, "p", req.name)};
        const int n_samples = static_cast<int>(number_or(params, "samples", 1000));
        double worst_margin = std::numeric_limits<double>::infinity();
        Json per_p = Json::array();
        bool all_hold = true;
        for (double p : ps) {
            double w;
            if (params.contains("omega_p")) {
                w = params["omega_p"].get<double>();
            } else {
                // the elliptic builder's coefficient formula
                const Json& m = ctx.scenario->model;
                if (string_or(m, "type", "") != "elliptic_1d")
                    throw ValidationError("lp checks need 'omega_p' unless the model is elliptic_1d");
                w = omega_p_bound(parse_elliptic_model(m, ctx.scenario->horizon, "model"), p);
            }
            Profile omega = Profile::constant(w, 0.0, path.horizon);
            PropertyReport rep =
                check_lp_quasi_contractivity(prop, p, omega, pairs, n_samples, ctx.seed);
            all_hold = all_hold && rep.verdict == Verdict::Holds;
            worst_margin = std::min(worst_margin, rep.margin);
            Json pj;
            pj["p"] = p;
            pj["omega_p"] = w;
            pj["verdict"] = to_string(rep.verdict);
            pj["max_ratio"] = rep.bound_measured;
            per_p.push_back(pj);
        }
        out.report.property_name = "lp-quasi-contractivity";
        out.report.verdict = all_hold ? Verdict::Holds : Verdict::Fails;
        out.report.margin = worst_margin;
        out.report.bound_requested = 1.0;
        out.report.samples_used = n_samples * static_cast<long>(ps.size());
        out.report.seed = ctx.seed;
        out.extra["per_p"] = per_p;
    } else if (req.name == "domination") {
        if (!params.contains("dominating"))
            throw ValidationError("domination check needs a 'dominating' model spec");
        OperatorPath big = build_model(params["dominating"], ctx.scenario->horizon);
        Propagator big_prop = assemble(big, prop.partition());
        std::vector<Index> map;
        const std::vector<Index>* map_ptr = nullptr;
        if (params.contains("index_map")) {
            map = params["index_map"].get<std::vector<Index>>();
            map_ptr = &map;
        }
        out.report = check_domination(prop, big_prop, pairs,
                                      static_cast<int>(number_or(params, "vectors", 100)),
                                      ctx.seed, map_ptr);
    } else if (req.name == "longtime") {
        EquilibriumData eq = equilibrium(path);
        std::vector<double> t_grid;
        for (const auto& [t, s] : pairs)
            if (s <= prop.partition().a() + 1e-12) t_grid.push_back(t);
        out.report = check_longtime(prop, eq, t_grid, number_or(params, "tol", 1e-8));
        if (eq.applicability == Verdict::Holds) {
            double min_gap = std::numeric_limits<double>::infinity();
            for (double v : eq.gap_profile.values) min_gap = std::min(min_gap, v);
            out.report.details["min_gap"] = min_gap;
            if (params.contains("min_gap") && min_gap < params["min_gap"].get<double>())
                out.report.verdict = Verdict::Fails;
            std::vector<std::array<double, 4>> rows;
            for (double t : t_grid)
                rows.push_back({t, prop.partition().a(),
                                spectral_norm_weighted(prop.space(),
                                                       prop.evaluate(t, prop.partition().a()) -
                                                           eq.projector),
                                std::exp(-eq.gap_profile.integrate(prop.partition().a(), t))});
            append_curve_csv(ctx, "curve_longtime", rows);
        }
    } else if (req.name == "uniform_exponential_stability") {
        Profile omega = omega_profile(path, default_time_grid(path, 64));
        out.report = check_uniform_exponential_stability(
            prop, omega, number_or(params, "t0", 0.2 * path.horizon));
    } else if (req.name == "gaussian_domination") {
        out.report = verify_gaussian_domination(
            prop, [](double r, long a, long b) { return reference_kernel_Z(r, a, b); },
            dt_grid_from(params, path.horizon));
    } else if (req.name == "nash_ultracontractivity") {
        if (!path.declared_constants)
            throw ValidationError("nash_ultracontractivity needs declared form constants");
        const double mu = number_or(params, "mu", 1.0);
        const auto nash = estimate_nash_constant(*path.space, mu, ctx.seed);
        const double alpha = path.declared_constants->alpha;
        const double omega = path.declared_constants->omega;
        double worst_margin = std::numeric_limits<double>::infinity();
        std::vector<std::array<double, 4>> rows;
        for (double dt : dt_grid_from(params, path.horizon)) {
            const double measured =
                operator_norm(prop.space(), prop.evaluate(dt, 0.0), NormP::One, NormP::Inf);
            const double bound = nash_ultracontractivity_bound(alpha, nash.C, mu, omega, 0.0, dt);
            rows.push_back({dt, 0.0, measured, bound});
            worst_margin = std::min(worst_margin, bound - measured);
        }
        append_curve_csv(ctx, "curve_nash_ultracontractivity", rows);
        out.report.property_name = "nash-ultracontractivity";
        out.report.margin = worst_margin;
        out.report.verdict = worst_margin >= 0 ? Verdict::Holds : Verdict::Fails;
        out.report.details["C_N"] = nash.C;
        out.report.details["mu"] = mu;
        out.report.details["alpha"] = alpha;
        out.report.details["omega"] = omega;
        out.report.seed = ctx.seed;
        out.report.samples_used = nash.candidates + nash.validation_vectors;
    } else if (req.name == "davies_sweep") {
        DaviesSweepOptions opt;
        opt.dt_grid = dt_grid_from(params, path.horizon);
        opt.beta = number_or(params, "beta", 1.0);
        if (params.contains("alpha_ref")) opt.alpha_ref = params["alpha_ref"].get<double>();
        std::vector<double> rho = params.contains("rho_grid")
                                      ? params["rho_grid"].get<std::vector<double>>()
                                      : std::vector<double>{-4, -3, -2, -1, 0, 1, 2, 3, 4};
        auto psis = parse_psi_family(params, *path.space);
        KernelBoundFit fit = davies_sweep(path, psis, rho, opt);
        out.extra["kernel_bound_fit"] = fit_to_json(fit);
        out.report.property_name = "davies-gaussian-bound";
        bool ok = fit.envelope_residual <= 1e-12 &&
                  (!fit.b || !std::isfinite(fit.residual) || fit.residual <= 0.0);
        if (params.contains("omega0")) {
            const double omega0 = params["omega0"].get<double>();
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& cell : fit.cells)
                worst = std::max(worst, cell.omega_rho - omega0 * (1.0 + cell.rho * cell.rho));
            out.report.details["max_omega_rho_excess"] = worst;
            ok = ok && worst <= 0.0;
        }
        out.report.details["fitted_omega"] = fit.omega;
        out.report.details["fitted_n"] = fit.n;
        out.report.details["fitted_c"] = fit.c;
        if (fit.b) out.report.details["b"] = *fit.b;
        if (std::isfinite(fit.residual)) out.report.details["pointwise_residual"] = fit.residual;
        out.report.verdict = ok ? Verdict::Holds : Verdict::Fails;
        out.report.notes.push_back("distance metric on this model: " + fit.metric);
    } else if (req.name == "bs_order_interval") {
        // solutions started below the identity profile stay below it
        if (!path.space->coords) throw ValidationError("bs_order_interval: model has no coordinates");
        const RealVector x = path.space->coords->col(0);
        const double strike = number_or(params, "strike", 2.0);
        Vector f(x.size());
        for (Index i = 0; i < x.size(); ++i) f[i] = std::min(x[i], strike);
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& [t, s] : pairs) {
            const Vector u = prop.evaluate(t, s) * f;
            worst = std::max(worst, (u.real() - x).maxCoeff());
        }
        out.report.property_name = "order-interval-invariance";
        out.report.bound_requested = 1e-9;
        out.report.bound_measured = worst;
        out.report.margin = 1e-9 - worst;
        out.report.verdict = worst <= 1e-9 ? Verdict::Holds : Verdict::Fails;
    } else {
        throw ValidationError("unknown check '" + req.name + "'");
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// runner

RunResult run_scenario(const Scenario& scenario) {
    const auto start = std::chrono::steady_clock::now();
    RunResult result;

    OperatorPath path = build_model(scenario.model, scenario.horizon);
    Propagator prop = propagate_to_tolerance(path, 0.0, scenario.horizon, scenario.tolerance);
    const auto pairs = ts_grid(prop, scenario.grid_points);

    Json checks = Json::array();
    std::ostringstream summary;
    summary << "scenario " << scenario.name << "\n";
    bool all_ok = true;
    for (std::size_t i = 0; i < scenario.checks.size(); ++i) {
        const CheckRequest& req = scenario.checks[i];
        RunContext ctx{&scenario, &path,
                       &prop,     &pairs,
                       &result.csv_files, make_rng(scenario.seed, i)()};
        CheckOutcome outcome = run_check(ctx, req);
        outcome.report.seed = outcome.report.seed ? outcome.report.seed : ctx.seed;
        Json cj = report_to_json(outcome.report);
        cj["check"] = req.name;
        cj["expected"] = to_string(req.expect);
        const bool ok = outcome.report.verdict == req.expect;
        cj["as_expected"] = ok;
        if (!outcome.extra.is_null()) cj["extra"] = outcome.extra;
        checks.push_back(cj);
        all_ok = all_ok && ok;
        summary << "  [" << (ok ? "PASS" : "FAIL") << "] " << req.name << ": verdict "
                << to_string(outcome.report.verdict) << " (expected " << to_string(req.expect)
                << ")";
        if (std::isfinite(outcome.report.margin)) summary << ", margin " << outcome.report.margin;
        summary << "\n";
    }

    Json report;
    report["schema_version"] = 1;
    report["scenario"] = scenario.name;
    report["seed"] = scenario.seed;
    report["horizon"] = scenario.horizon;
    report["tolerance"] = scenario.tolerance;
    report["propagator"] = Json{{"segments", prop.partition().segments()},
                                {"mesh", prop.partition().mesh()},
                                {"converged", prop.converged()},
                                {"refinements", prop.refinement_history().size()}};
    if (!path.flags.empty()) report["model_flags"] = path.flags;
    report["checks"] = checks;
    result.report = std::move(report);
    result.summary = summary.str();
    result.exit_code = all_ok ? 0 : 2;
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

void write_report_bundle(const RunResult& result, const Scenario& scenario,
                         const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "report.json");
        out << result.report.dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "summary.txt");
        out << result.summary;
    }
    for (const auto& [name, content] : result.csv_files) {
        std::ofstream out(fs::path(out_dir) / name);
        out << content;
    }
    {
        // wall-clock data is quarantined here so report.json stays bit-stable
        Json meta;
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        meta["unix_time"] =
            std::chrono::duration_cast<std::chrono::seconds>(now).count();
        meta["elapsed_seconds"] = result.elapsed_seconds;
        meta["runtime_budget_seconds"] = scenario.runtime_budget_seconds;
        meta["within_budget"] = result.elapsed_seconds <= scenario.runtime_budget_seconds;
        std::ofstream out(fs::path(out_dir) / "run_meta.json");
        out << meta.dump(2) << "\n";
    }
}

// ---------------------------------------------------------------------------
// bundled scenarios

namespace {

const char* kK2Dynamic = R"json({
  "schema_version": 1,
  "name": "k2-dynamic",
  "description": "Two nodes, one edge with weight switching in [1,2]; contraction, lattice structure and sharp long-time decay.",
  "seed": 101,
  "horizon": 5.0,
  "tolerance": 1e-9,
  "runtime_budget_seconds": 30,
  "grid_points": 11,
  "model": {
    "type": "dynamic_graph",
    "graph": {"kind": "k2"},
    "schedule": {"kind": "piecewise", "times": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0], "values": [1.0, 2.0, 1.5, 1.0, 2.0]}
  },
  "checks": [
    "quasi_contractivity",
    "positivity",
    "stochasticity",
    "complete_contractivity",
    {"name": "longtime", "tol": 1e-8}
  ]
})json";

const char* kZLattice = R"json({
  "schema_version": 1,
  "name": "z-lattice-domination",
  "description": "Lattice window of radius 40 with absorbing truncation; kernel dominated by the free lattice heat kernel.",
  "seed": 102,
  "horizon": 2.0,
  "tolerance": 1e-8,
  "runtime_budget_seconds": 60,
  "grid_points": 6,
  "model": {
    "type": "dynamic_graph",
    "graph": {"kind": "z_lattice", "radius": 40},
    "schedule": {"kind": "constant", "value": 1.0}
  },
  "checks": [
    "positivity",
    "complete_contractivity",
    {"name": "stochasticity", "expect": "fails"},
    {"name": "gaussian_domination", "dt_grid": [0.1, 0.2, 0.4, 0.8, 1.2, 1.6, 2.0]}
  ]
})json";

const char* kSubgraphDirichlet = R"json({
  "schema_version": 1,
  "name": "dynamic-subgraph-dirichlet",
  "description": "Eight-node path with two edges switching off absorbingly; dominated by the always-on family.",
  "seed": 103,
  "horizon": 2.0,
  "tolerance": 1e-9,
  "runtime_budget_seconds": 30,
  "grid_points": 8,
  "model": {
    "type": "dynamic_graph",
    "graph": {"kind": "path", "nodes": 8},
    "absorbing_off_edges": true,
    "schedule": {"kind": "per_edge", "items": [
      1.0,
      {"kind": "piecewise", "times": [0.0, 0.7, 1.4, 2.0], "values": [1.0, 0.0, 1.0]},
      1.0,
      1.0,
      {"kind": "piecewise", "times": [0.0, 1.0, 2.0], "values": [0.0, 1.0]},
      1.0,
      1.0
    ]}
  },
  "checks": [
    "positivity",
    "complete_contractivity",
    {"name": "stochasticity", "expect": "fails"},
    {"name": "domination", "dominating": {
       "type": "dynamic_graph",
       "graph": {"kind": "path", "nodes": 8},
       "schedule": {"kind": "constant", "value": 1.0}
    }}
  ]
})json";

const char* kPagerank = R"json({
  "schema_version": 1,
  "name": "pagerank-3cycle",
  "description": "Directed three-cycle with switching link weights; the family maps probability vectors to probability vectors.",
  "seed": 104,
  "horizon": 3.0,
  "tolerance": 1e-10,
  "runtime_budget_seconds": 20,
  "grid_points": 9,
  "model": {
    "type": "pagerank",
    "graph": {"kind": "cycle", "nodes": 3},
    "schedule": {"kind": "per_edge", "items": [
      {"kind": "piecewise", "times": [0.0, 1.5, 3.0], "values": [1.0, 0.5]},
      1.0,
      {"kind": "piecewise", "times": [0.0, 1.0, 2.0, 3.0], "values": [0.5, 1.0, 2.0]}
    ]}
  },
  "checks": ["stochasticity", "positivity", "quasi_contractivity"]
})json";

const char* kBlackScholes = R"json({
  "schema_version": 1,
  "name": "black-scholes-heston",
  "description": "Truncated option-pricing generator with piecewise volatility in [0.2, 0.4]; sub-Markovian, leaves the sub-identity order interval invariant.",
  "seed": 105,
  "horizon": 1.0,
  "tolerance": 1e-8,
  "runtime_budget_seconds": 60,
  "grid_points": 6,
  "model": {
    "type": "black_scholes",
    "sigma": {"kind": "piecewise", "times": [0.0, 0.25, 0.5, 0.75, 1.0], "values": [0.2, 0.4, 0.3, 0.25]},
    "rate": 0.05,
    "x_min": 0.5,
    "x_max": 4.0,
    "cells": 128
  },
  "checks": [
    "sub_markovian",
    "positivity",
    "quasi_contractivity",
    {"name": "bs_order_interval", "strike": 2.0}
  ]
})json";

const char* kIntervalNash = R"json({
  "schema_version": 1,
  "name": "interval-nash-ultra",
  "description": "Diffusion on the unit interval at h = 1/200 with switching conductance; measured 1->inf norms against the Nash-constant bound.",
  "seed": 106,
  "horizon": 1.0,
  "tolerance": 1e-7,
  "runtime_budget_seconds": 120,
  "grid_points": 5,
  "model": {
    "type": "metric_interval",
    "points": 200,
    "conductance": {"kind": "piecewise", "times": [0.0, 0.5, 1.0], "values": [1.0, 1.5]}
  },
  "checks": [
    "stochasticity",
    "complete_contractivity",
    {"name": "nash_ultracontractivity", "mu": 1.0}
  ]
})json";

const char* kStar = R"json({
  "schema_version": 1,
  "name": "star3-kirchhoff",
  "description": "Equilateral three-star with continuity/Kirchhoff coupling; stochastic and converging to the mean at the metric-graph gap rate.",
  "seed": 107,
  "horizon": 3.0,
  "tolerance": 1e-8,
  "runtime_budget_seconds": 60,
  "grid_points": 7,
  "model": {"type": "metric_star", "edges": 3, "points": 32},
  "checks": [
    "stochasticity",
    "positivity",
    {"name": "longtime", "min_gap": 1.0966}
  ]
})json";

const char* kLoop = R"json({
  "schema_version": 1,
  "name": "loop-antiperiodic",
  "description": "Single loop with trace space spanned by (1,-1): completely contractive but not positive.",
  "seed": 108,
  "horizon": 1.0,
  "tolerance": 1e-9,
  "runtime_budget_seconds": 30,
  "grid_points": 7,
  "model": {"type": "metric_loop", "points": 32},
  "checks": [
    "complete_contractivity",
    {"name": "positivity", "expect": "fails"}
  ]
})json";

const char* kEllipticLp = R"json({
  "schema_version": 1,
  "name": "elliptic-lp",
  "description": "1D drift-diffusion with unit drift; Monte-Carlo Lp growth stays below the coefficient-formula rate for p in {2,4,8,16}.",
  "seed": 109,
  "horizon": 1.0,
  "tolerance": 1e-8,
  "runtime_budget_seconds": 60,
  "grid_points": 5,
  "model": {
    "type": "elliptic_1d",
    "cells": 100,
    "boundary": "neumann",
    "a11": 1.0,
    "b1": 1.0,
    "nu": 1.0,
    "c0": 1.0
  },
  "checks": [
    {"name": "lp_sweep", "ps": [2, 4, 8, 16], "samples": 1000},
    "quasi_contractivity"
  ]
})json";

const char* kEllipticDavies = R"json({
  "schema_version": 1,
  "name": "elliptic-davies-gaussian",
  "description": "1D elliptic model with unit coefficient bounds; exponential-weight sweep fits a Gaussian kernel bound with quadratic rate envelope.",
  "seed": 110,
  "horizon": 1.0,
  "tolerance": 1e-8,
  "runtime_budget_seconds": 300,
  "grid_points": 5,
  "model": {
    "type": "elliptic_1d",
    "cells": 64,
    "boundary": "neumann",
    "a11": 1.0,
    "b1": {"kind": "piecewise", "times": [0.0, 0.5, 1.0], "values": [0.8, -0.8]},
    "c1": 0.3,
    "a0": 0.2,
    "nu": 1.0,
    "c0": 1.0
  },
  "checks": [
    {"name": "davies_sweep", "rho_grid": [-4, -3, -2, -1, 0, 1, 2, 3, 4],
     "psi": ["coordinate+", "coordinate-"], "beta": 1.0, "omega0": 8.0, "alpha_ref": 0.5},
    "quasi_contractivity"
  ]
})json";

}  // namespace

const std::vector<std::pair<std::string, std::string>>& bundled_scenarios() {
    static const std::vector<std::pair<std::string, std::string>> list = {
        {"k2-dynamic", kK2Dynamic},
        {"z-lattice-domination", kZLattice},
        {"dynamic-subgraph-dirichlet", kSubgraphDirichlet},
        {"pagerank-3cycle", kPagerank},
        {"black-scholes-heston", kBlackScholes},
        {"interval-nash-ultra", kIntervalNash},
        {"star3-kirchhoff", kStar},
        {"loop-antiperiodic", kLoop},
        {"elliptic-lp", kEllipticLp},
        {"elliptic-davies-gaussian", kEllipticDavies},
    };
    return list;
}

Scenario resolve_scenario(const std::string& name_or_path) {
    for (const auto& [name, text] : bundled_scenarios())
        if (name == name_or_path) return parse_scenario(Json::parse(text));
    return load_scenario_file(name_or_path);
}

std::vector<std::string> known_checks() {
    return {"quasi_contractivity",
            "positivity",
            "complete_contractivity",
            "sub_markovian",
            "stochasticity",
            "lp_quasi_contractivity",
            "lp_sweep",
            "domination",
            "longtime",
            "uniform_exponential_stability",
            "gaussian_domination",
            "nash_ultracontractivity",
            "davies_sweep",
            "bs_order_interval"};
}

std::string describe_check(const std::string& name) {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"quasi_contractivity",
         "verifies |U(t,s)|_{L2} <= exp(int_s^t omega(r) dr), where omega(t) is the largest "
         "eigenvalue of minus the Hermitian part of A(t) in the weighted metric"},
        {"positivity",
         "generator criterion: off-diagonal entries of Re A(t) <= 0; conclusion: all entries of "
         "U(t,s) >= -1e-10, so nonnegative data stays nonnegative"},
        {"complete_contractivity",
         "verifies |U(t,s)|_{Linf->Linf} <= 1 and |U(t,s)|_{L1->L1} <= 1 (weighted row and column "
         "sums of |U|)"},
        {"sub_markovian", "positivity together with |U(t,s)|_{Linf->Linf} <= 1"},
        {"stochasticity",
         "criterion: weighted column sums of A(t) vanish; conclusion: U preserves weighted totals "
         "(w^T U = w^T) and is positive, so probability vectors map to probability vectors"},
        {"lp_quasi_contractivity",
         "Monte-Carlo check of |U(t,s) f|_p <= exp(int_s^t omega_p) |f|_p on random real and "
         "complex data"},
        {"lp_sweep",
         "lp_quasi_contractivity for p in {2,4,8,16} with omega_p from the 1D coefficient formula "
         "|(Re a0)^-| + (1/p + 1/2)|b-c|^2/nu + p |Re c|^2/nu (p >= 2 branch)"},
        {"domination",
         "entrywise |U(t,s)_ij| <= V(t,s)_ij against a dominating family, plus |U f| <= V |f| on "
         "random vectors"},
        {"longtime",
         "verifies |U(t,t0) - P|_{L2} <= exp(-int_{t0}^t gap(r) dr) with P the rank-one "
         "equilibrium projector and gap(r) the Hermitian-part spectral gap on its complement"},
        {"uniform_exponential_stability",
         "estimates the long-run average rate Omega of omega(t); verifies |U(t,s)| <= M "
         "exp(Omega (t - t0)) with a fitted prefactor M"},
        {"gaussian_domination",
         "entrywise 0 <= Gamma(t,s;n1,n2) <= G(t-s;n1,n2) with G(r;n1,n2) = (1/2pi) "
         "int_{-pi}^{pi} cos((n1-n2)q) exp(-2r(1-cos q)) dq, the free lattice heat kernel"},
        {"nash_ultracontractivity",
         "measures |U(t,s)|_{L1->Linf} against (mu C_N / 4 alpha)^{mu/2} (t-s)^{-mu/2} "
         "exp(max(omega, omega~)(t-s)) with C_N the certified Nash constant of V"},
        {"davies_sweep",
         "conjugates the family by exp(+-rho psi), fits |U_rho|_{L1->Linf} <= c (t-s)^{-n/2} "
         "exp(omega~(1+rho^2)(t-s)), and verifies |Gamma(t,s;x,y)| <= c exp(omega~(t-s)) "
         "(t-s)^{-n/2} exp(-b d(x,y)^2/(t-s)) with b = beta^2/(4 omega~)"},
        {"bs_order_interval",
         "verifies that data below the identity profile (e.g. the capped payoff min(x, K)) stays "
         "below it under the flow"},
    };
    for (const auto& [n, d] : table)
        if (n == name) return d;
    // suggest near matches
    std::ostringstream os;
    os << "unknown check '" << name << "'; did you mean:";
    for (const auto& n : known_checks())
        if (n.find(name.substr(0, std::min<std::size_t>(4, name.size()))) != std::string::npos ||
            name.find(n.substr(0, 4)) != std::string::npos)
            os << " " << n;
    os << " (run list-scenarios for examples)";
    throw ValidationError(os.str());
}

}  // namespace evofam

#include "dcmg/scenario.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "dcmg/error.hpp"
#include "dcmg/opf.hpp"

namespace dcmg {

using nlohmann::json;

const char* to_string(EventKind k) {
    switch (k) {
    case EventKind::SetLoad: return "SetLoad";
    case EventKind::SetGenMax: return "SetGenMax";
    case EventKind::Disconnect: return "Disconnect";
    case EventKind::Reconnect: return "Reconnect";
    }
    return "?";
}

namespace {

EventKind parse_event_kind(const std::string& s) {
    if (s == "SetLoad") return EventKind::SetLoad;
    if (s == "SetGenMax") return EventKind::SetGenMax;
    if (s == "Disconnect") return EventKind::Disconnect;
    if (s == "Reconnect") return EventKind::Reconnect;
    fail(ErrorKind::Validation, "unknown event kind '" + s + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json units_json(const WorkingUnits& u) {
    return {{"power_kw", u.power_kw}, {"vsq_v2", u.vsq_v2}, {"phat_kw", u.phat_kw}, {"cost", u.cost},
            {"isq_factor", u.isq_factor}};
}

json event_json(const ScenarioEvent& e) {
    json j{{"time_s", e.time}, {"kind", to_string(e.kind)}, {"node", e.node}};
    if (e.kind == EventKind::SetLoad || e.kind == EventKind::SetGenMax) j["value_kw"] = e.value;
    return j;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("scenario parse error: ") + e.what());
    }
    Scenario sc;
    try {
        if (j.contains("events"))
            for (const auto& e : j.at("events")) {
                ScenarioEvent ev;
                ev.time = e.at("time_s").get<double>();
                ev.kind = parse_event_kind(e.at("kind").get<std::string>());
                ev.node = e.at("node").get<int>();
                if (ev.kind == EventKind::SetLoad || ev.kind == EventKind::SetGenMax)
                    ev.value = e.at("value_kw").get<double>();
                sc.events.push_back(ev);
            }
        if (j.contains("sim")) {
            const auto& s = j.at("sim");
            auto& c = sc.sim;
            c.step = s.value("step_s", c.step);
            c.horizon = s.value("horizon_s", c.horizon);
            if (s.contains("integrator")) c.integrator = parse_integrator(s.at("integrator").get<std::string>());
            if (s.contains("engine")) c.engine = parse_engine(s.at("engine").get<std::string>());
            if (s.contains("neighbor_info")) c.neighbor = parse_neighbor_info(s.at("neighbor_info").get<std::string>());
            c.threads = s.value("threads", c.threads);
            c.trace_every = s.value("trace_every", c.trace_every);
            c.kkt_every = s.value("kkt_every", c.kkt_every);
            c.lyapunov_every = s.value("lyapunov_every", c.lyapunov_every);
            c.plant_every = s.value("plant_every", c.plant_every);
            c.plant_failure_limit = s.value("plant_failure_limit", c.plant_failure_limit);
            c.equilibrium_tol = s.value("equilibrium_tol", c.equilibrium_tol);
            c.equilibrium_steps = s.value("equilibrium_steps", c.equilibrium_steps);
            c.stop_tolerance = s.value("stop_tolerance", c.stop_tolerance);
            if (s.contains("units")) {
                const auto& u = s.at("units");
                c.units.power_kw = u.value("power_kw", 0.0);
                c.units.vsq_v2 = u.value("vsq_v2", 0.0);
                c.units.phat_kw = u.value("phat_kw", 0.0);
                c.units.cost = u.value("cost", 0.0);
                c.units.isq_factor = u.value("isq_factor", c.units.isq_factor);
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("scenario schema error: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Argument) fail(ErrorKind::Validation, e.what());
        throw;
    }
    if (!(sc.sim.step > 0)) fail(ErrorKind::Validation, "step_s must be positive");
    if (!(sc.sim.horizon > 0)) fail(ErrorKind::Validation, "horizon_s must be positive");
    if (sc.sim.trace_every == 0 || sc.sim.plant_every == 0)
        fail(ErrorKind::Validation, "trace_every and plant_every must be at least 1");
    return sc;
}

Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path)); }

GridModel apply_event(const GridModel& model, const ScenarioEvent& ev) {
    std::size_t i;
    try {
        i = model.index_of(ev.node);
    } catch (const Error& e) {
        fail(ErrorKind::Validation, std::string("event: ") + e.what());
    }
    GridModel out = model;
    try {
        switch (ev.kind) {
        case EventKind::SetLoad: out.microgrids[i].load = ev.value; break;
        case EventKind::SetGenMax: out.microgrids[i].gen_max = ev.value; break;
        case EventKind::Disconnect: out = apply_topology_change(model, TopologyAction::Disconnect, i); break;
        case EventKind::Reconnect: out = apply_topology_change(model, TopologyAction::Reconnect, i); break;
        }
    } catch (const Error& e) {
        fail(ErrorKind::Validation, std::string("event at t=") + std::to_string(ev.time) + ": " + e.what());
    }
    validate(out);
    return out;
}

void validate_events(const GridModel& model, const std::vector<ScenarioEvent>& events) {
    double last = 0;
    GridModel m = model;
    for (const auto& ev : events) {
        if (!(ev.time >= 0)) fail(ErrorKind::Validation, "event times must be nonnegative");
        if (ev.time < last) fail(ErrorKind::Validation, "event times must be sorted");
        last = ev.time;
        m = apply_event(m, ev);
    }
}

namespace {

std::string node_tag(const GridModel& m, std::size_t i) { return std::to_string(m.microgrids[i].id); }
std::string arc_tag(const GridModel& m, std::size_t a) {
    return node_tag(m, arc_src(m, a)) + "_" + node_tag(m, arc_dst(m, a));
}

std::vector<std::string> trace_columns(const GridModel& m) {
    std::vector<std::string> c{"t[s]"};
    const auto n = m.node_count(), L = m.line_count();
    for (std::size_t i = 0; i < n; ++i) {
        auto s = node_tag(m, i);
        for (auto col : {"p_g_" + s + "[kW]", "v_" + s + "[V^2]", "p_hat_" + s + "[kW]", "mu_" + s + "[cost/kW]",
                         "eps_" + s + "[cost/V^2]", "load_" + s + "[kW]", "gen_max_" + s + "[kW]"})
            c.push_back(col);
    }
    for (std::size_t a = 0; a < 2 * L; ++a) {
        auto s = arc_tag(m, a);
        for (auto col : {"P_" + s + "[kW]", "lambda_" + s + "[cost/kW]", "gamma_" + s + "[cost/V^2]",
                         "rho_" + s + "[cost/A^2]"})
            c.push_back(col);
    }
    for (std::size_t e = 0; e < L; ++e) {
        auto s = arc_tag(m, 2 * e);
        c.push_back("l_" + s + "[A^2]");
        c.push_back("active_" + s + "[flag]");
    }
    for (std::size_t i = 0; i < n; ++i) {
        c.push_back("V_" + node_tag(m, i) + "[V]");
        c.push_back("g_" + node_tag(m, i) + "[kW]");
    }
    for (std::size_t a = 0; a < 2 * L; ++a) c.push_back("I_" + arc_tag(m, a) + "[A]");
    for (std::size_t i = 0; i < n; ++i) c.push_back("sat_" + node_tag(m, i) + "[flags]");
    for (auto col : {"rhs_inf[working]", "kkt_max[working]", "lyapunov_U[working]", "sigma_switch[flag]"})
        c.push_back(col);
    return c;
}

class TraceWriter {
public:
    TraceWriter(const std::string& path, const GridModel& m, const WorkingUnits& u, const SimConfig& sim) {
        if (path.empty()) return;
        f_ = std::fopen(path.c_str(), "wb");
        if (!f_) fail(ErrorKind::Io, "cannot write trace '" + path + "'");
        std::fprintf(f_, "# dcmg-trace v1\n");
        std::fprintf(f_, "# units power_kw=%.17g vsq_v2=%.17g phat_kw=%.17g cost=%.17g isq_factor=%.17g\n",
                     u.power_kw, u.vsq_v2, u.phat_kw, u.cost, u.isq_factor);
        std::fprintf(f_, "# step_s=%.17g integrator=%s neighbor_info=%s\n", sim.step,
                     sim.integrator == Integrator::RK4 ? "rk4" : "euler",
                     sim.neighbor == NeighborInfo::Measured ? "measured" : "exchange");
        auto cols = trace_columns(m);
        for (std::size_t j = 0; j < cols.size(); ++j) std::fprintf(f_, j ? ",%s" : "%s", cols[j].c_str());
        std::fprintf(f_, "\n");
    }
    ~TraceWriter() {
        if (f_) std::fclose(f_);
    }
    bool enabled() const { return f_ != nullptr; }
    void value(double v) {
        std::fprintf(f_, first_ ? "%.17g" : ",%.17g", v);
        first_ = false;
    }
    void end_row() {
        std::fputc('\n', f_);
        first_ = true;
    }
    void trailer(std::size_t steps, bool settled, double rhs) {
        if (f_) std::fprintf(f_, "# end steps=%zu settled=%d final_rhs=%.17g\n", steps, settled ? 1 : 0, rhs);
    }

private:
    std::FILE* f_ = nullptr;
    bool first_ = true;
};

void natural_box(const GridModel& m, PrimalState& x) {
    for (std::size_t i = 0; i < m.node_count(); ++i) {
        const auto& g = m.microgrids[i];
        x.p_g[i] = std::clamp(x.p_g[i], 0.0, g.gen_max);
        x.v[i] = std::clamp(x.v[i], g.v_min * g.v_min, g.v_max * g.v_max);
    }
}

int saturation_flags(const Problem& pb, const std::vector<double>& w, std::size_t i) {
    const auto& L = pb.L;
    int f = 0;
    if (w[L.p + i] == 0.0) f |= 1;
    if (w[L.p + i] == pb.pmax[i]) f |= 2;
    if (w[L.v + i] == pb.vlo[i]) f |= 4;
    if (w[L.v + i] == pb.vhi[i]) f |= 8;
    return f;
}

json segment_json(const SegmentSummary& s) {
    json j{{"start_s", s.start},
           {"end_s", s.end},
           {"settled", s.settled},
           {"settle_time_s", s.settle_time},
           {"final_rhs", s.final_rhs},
           {"kkt_final", s.kkt_final},
           {"p_g_kw", s.x.p_g},
           {"p_hat_kw", s.x.p_hat},
           {"plant_voltage_v", s.plant.V}};
    j["events"] = json::array();
    for (const auto& e : s.events) j["events"].push_back(event_json(e));
    if (s.reference) {
        j["reference_p_g_kw"] = s.reference->x.p_g;
        j["reference_p_hat_kw"] = s.reference->x.p_hat;
    }
    j["lyapunov"] = {{"samples", s.lyapunov.samples},
                     {"first", s.lyapunov.first},
                     {"last", s.lyapunov.last},
                     {"min", s.lyapunov.min_value},
                     {"max_increase", s.lyapunov.max_increase},
                     {"sigma_switches", s.lyapunov.switches}};
    return j;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

ScenarioResult run_scenario(const GridModel& model0, const std::vector<ScenarioEvent>& events, const SimConfig& sim,
                            const OutputPaths& out) {
    if (!(sim.step > 0) || !(sim.horizon > 0)) fail(ErrorKind::Argument, "step and horizon must be positive");
    validate_events(model0, events);
    const auto K = static_cast<std::size_t>(std::llround(sim.horizon / sim.step));
    std::vector<std::size_t> ev_step(events.size());
    for (std::size_t q = 0; q < events.size(); ++q)
        ev_step[q] = static_cast<std::size_t>(std::ceil(events[q].time / sim.step - 1e-9));

    GridModel model = model0;
    std::size_t next = 0;
    std::vector<ScenarioEvent> initial;
    while (next < events.size() && ev_step[next] == 0) {
        model = apply_event(model, events[next]);
        initial.push_back(events[next++]);
    }

    EngineOptions eo;
    eo.units = sim.units;
    eo.integrator = sim.integrator;
    eo.kind = sim.engine;
    eo.neighbor = sim.neighbor;
    eo.threads = sim.threads;
    Engine eng(model, eo);
    ScenarioResult res;
    res.units = eng.options().units;
    eng.set_state(default_start(model, eng.problem()));

    TraceWriter tw(out.trace, model, res.units, sim);
    const bool want_ref = sim.lyapunov_every > 0;

    SegmentSummary seg;
    std::size_t eq_count = 0, stop_count = 0;
    LyapunovSample prev_ly;
    bool have_prev_ly = false;
    PlantState plant;
    bool have_plant = false;
    std::size_t streak = 0;

    auto open_segment = [&](double t, std::vector<ScenarioEvent> evs) {
        seg = SegmentSummary{};
        seg.start = t;
        seg.events = std::move(evs);
        seg.model = model;
        if (want_ref) {
            ReferenceOptions ro;
            ro.units = res.units;
            seg.reference = centralized_reference_solve(model, ro);
        }
        eq_count = 0;
        stop_count = 0;
        have_prev_ly = false;
    };
    auto close_segment = [&](double t, double rhs_now) {
        seg.end = t;
        eng.get_state(seg.x, seg.d);
        natural_box(model, seg.x);
        seg.plant = plant;
        seg.final_rhs = rhs_now;
        seg.settled = eq_count >= sim.equilibrium_steps;
        seg.kkt_final = kkt_residual(eng.problem(), eng.state()).max_residual;
        res.segments.push_back(std::move(seg));
    };

    open_segment(0.0, initial);
    PrimalState xn;
    DualState dn;
    double last_rhs = 0;
    std::size_t k = 0;
    for (;; ++k) {
        const double t = static_cast<double>(k) * sim.step;
        bool event_row = false;
        if (next < events.size() && ev_step[next] <= k && k > 0) {
            std::vector<ScenarioEvent> applied;
            auto pre_rhs = inf_norm(eng.current_rhs());
            close_segment(t, pre_rhs);
            while (next < events.size() && ev_step[next] <= k) {
                model = apply_event(model, events[next]);
                applied.push_back(events[next++]);
            }
            eng.rebuild(model);
            open_segment(t, applied);
            event_row = true;
        }
        const bool stop_early = sim.stop_tolerance > 0 && next == events.size() && stop_count >= sim.equilibrium_steps;
        const bool final_row = k >= K || stop_early;

        const Problem& pb = eng.problem();
        std::vector<double> w = eng.state();
        from_working(pb, w, xn, dn);
        natural_box(model, xn);

        if (k % sim.plant_every == 0 || !have_plant || event_row) {
            try {
                plant = solve_power_flow(model, emit_commands(model, xn), have_plant ? plant : PlantState{});
                have_plant = true;
                streak = 0;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::NonConvergence && e.kind() != ErrorKind::Numeric) throw;
                ++res.plant_failures;
                if (!have_plant || ++streak > sim.plant_failure_limit)
                    fail(ErrorKind::NonConvergence, std::string("plant: ") + e.what());
            }
            eng.set_measured_currents(plant.I);
        }

        for (std::size_t i = 0; i < pb.L.n; ++i) {
            double p = w[pb.L.p + i], v = w[pb.L.v + i];
            if (p < 0.0 || p > pb.pmax[i] || v < pb.vlo[i] || v > pb.vhi[i]) ++res.box_violations;
        }
        for (std::size_t e = 0; e < pb.L.m; ++e) {
            if (!pb.active[e]) continue;
            double la = w[pb.L.lam + 2 * e], lb = w[pb.L.lam + 2 * e + 1];
            double ga = w[pb.L.gam + 2 * e], gb = w[pb.L.gam + 2 * e + 1];
            double scale = std::max({1.0, std::abs(la), std::abs(ga)});
            res.max_symmetry_error = std::max({res.max_symmetry_error, std::abs(la - lb) / scale, std::abs(ga + gb) / scale});
        }

        double norm = final_row ? inf_norm(eng.current_rhs()) : eng.advance(sim.step);
        last_rhs = norm;
        eq_count = norm <= sim.equilibrium_tol ? eq_count + 1 : 0;
        if (sim.stop_tolerance > 0) stop_count = norm <= sim.stop_tolerance ? stop_count + 1 : 0;
        if (eq_count == sim.equilibrium_steps && seg.settle_time < 0) seg.settle_time = t;

        double kkt = std::nan("");
        if ((sim.kkt_every && k % sim.kkt_every == 0) || final_row) kkt = kkt_residual(pb, w).max_residual;
        double U = std::nan("");
        int switched = 0;
        if (want_ref && (k % sim.lyapunov_every == 0 || final_row)) {
            auto s = lyapunov_value(pb, w, seg.reference->w);
            s.t = t;
            auto& st = seg.lyapunov;
            if (have_prev_ly) {
                s.switched = s.sigma_rho != prev_ly.sigma_rho;
                st.max_increase = std::max(st.max_increase, s.U - prev_ly.U);
                st.min_value = std::min(st.min_value, s.U);
                if (s.switched) ++st.switches;
            } else {
                st.first = s.U;
                st.min_value = s.U;
            }
            st.last = s.U;
            ++st.samples;
            U = s.U;
            switched = s.switched ? 1 : 0;
            prev_ly = std::move(s);
            have_prev_ly = true;
        }

        if (tw.enabled() && (k % sim.trace_every == 0 || final_row || event_row)) {
            tw.value(t);
            for (std::size_t i = 0; i < pb.L.n; ++i) {
                const auto& g = model.microgrids[i];
                for (double v : {xn.p_g[i], xn.v[i], xn.p_hat[i], dn.mu[i], dn.eps[i], g.load, g.gen_max}) tw.value(v);
            }
            for (std::size_t a = 0; a < 2 * pb.L.m; ++a)
                for (double v : {xn.P[a], dn.lambda[a], dn.gamma[a], dn.rho[a]}) tw.value(v);
            for (std::size_t e = 0; e < pb.L.m; ++e) {
                tw.value(xn.l[e]);
                tw.value(pb.active[e] ? 1.0 : 0.0);
            }
            for (std::size_t i = 0; i < pb.L.n; ++i) {
                tw.value(plant.V[i]);
                tw.value(plant.g[i]);
            }
            for (std::size_t a = 0; a < 2 * pb.L.m; ++a) tw.value(plant.I[a]);
            for (std::size_t i = 0; i < pb.L.n; ++i) tw.value(saturation_flags(pb, w, i));
            tw.value(norm);
            tw.value(kkt);
            tw.value(U);
            tw.value(switched);
            tw.end_row();
        }
        if (final_row) break;
    }
    const double t_end = static_cast<double>(k) * sim.step;
    close_segment(t_end, last_rhs);
    res.steps = k;
    res.final_rhs = last_rhs;
    res.converged = res.segments.back().settled;
    tw.trailer(k, res.converged, last_rhs);

    if (!out.manifest.empty()) {
        json m;
        m["format"] = "dcmg-run-manifest";
        m["version"] = 1;
        m["config_hash_fnv1a64"] = fnv1a_hex(out.config_source.empty() ? to_json(model0) : out.config_source);
        m["trace"] = out.trace;
        m["sim"] = {{"step_s", sim.step},
                    {"horizon_s", sim.horizon},
                    {"integrator", sim.integrator == Integrator::RK4 ? "rk4" : "euler"},
                    {"engine", sim.engine == EngineKind::Parallel ? "parallel" : "serial"},
                    {"neighbor_info", sim.neighbor == NeighborInfo::Measured ? "measured" : "exchange"},
                    {"trace_every", sim.trace_every},
                    {"kkt_every", sim.kkt_every},
                    {"lyapunov_every", sim.lyapunov_every},
                    {"plant_every", sim.plant_every},
                    {"equilibrium_tol", sim.equilibrium_tol},
                    {"equilibrium_steps", sim.equilibrium_steps},
                    {"stop_tolerance", sim.stop_tolerance}};
        m["working_units"] = units_json(res.units);
        m["events"] = json::array();
        for (const auto& e : events) m["events"].push_back(event_json(e));
        m["segments"] = json::array();
        for (const auto& s : res.segments) m["segments"].push_back(segment_json(s));
        m["convergence"] = {{"converged", res.converged},
                            {"steps", res.steps},
                            {"final_rhs", res.final_rhs},
                            {"box_violations", res.box_violations},
                            {"max_dual_symmetry_error", res.max_symmetry_error},
                            {"plant_failures", res.plant_failures}};
        std::ofstream f(out.manifest, std::ios::binary);
        if (!f) fail(ErrorKind::Io, "cannot write manifest '" + out.manifest + "'");
        f << m.dump(2) << "\n";
    }
    return res;
}

std::size_t TraceTable::column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) fail(ErrorKind::Parse, "trace has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

TraceTable read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open trace '" + path + "'");
    TraceTable t;
    std::string line;
    bool have_header = false, have_units = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# units ", 0) == 0) {
                if (std::sscanf(line.c_str(), "# units power_kw=%lf vsq_v2=%lf phat_kw=%lf cost=%lf isq_factor=%lf",
                                &t.units.power_kw, &t.units.vsq_v2, &t.units.phat_kw, &t.units.cost,
                                &t.units.isq_factor) != 5)
                    fail(ErrorKind::Parse, "malformed units line in trace");
                have_units = true;
            } else if (line.rfind("# end ", 0) == 0) {
                t.complete = true;
                t.settled = line.find("settled=1") != std::string::npos;
            }
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        if (!have_header) {
            while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
            have_header = true;
            continue;
        }
        std::vector<double> row;
        row.reserve(t.columns.size());
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != t.columns.size()) {
            t.complete = false;  // torn final row
            break;
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header || !have_units) fail(ErrorKind::Parse, "trace '" + path + "' lacks a header");
    return t;
}

void state_from_trace(const TraceTable& t, std::size_t r, GridModel& model, PrimalState& x, DualState& d) {
    if (r >= t.rows.size()) fail(ErrorKind::Argument, "trace row out of range");
    const auto& row = t.rows[r];
    const auto n = model.node_count(), L = model.line_count();
    x = PrimalState::zeros(n, L);
    d = DualState::zeros(n, L);
    auto get = [&](const std::string& c) { return row[t.column(c)]; };
    for (std::size_t i = 0; i < n; ++i) {
        auto s = node_tag(model, i);
        x.p_g[i] = get("p_g_" + s + "[kW]");
        x.v[i] = get("v_" + s + "[V^2]");
        x.p_hat[i] = get("p_hat_" + s + "[kW]");
        d.mu[i] = get("mu_" + s + "[cost/kW]");
        d.eps[i] = get("eps_" + s + "[cost/V^2]");
        model.microgrids[i].load = get("load_" + s + "[kW]");
        model.microgrids[i].gen_max = get("gen_max_" + s + "[kW]");
    }
    for (std::size_t a = 0; a < 2 * L; ++a) {
        auto s = arc_tag(model, a);
        x.P[a] = get("P_" + s + "[kW]");
        d.lambda[a] = get("lambda_" + s + "[cost/kW]");
        d.gamma[a] = get("gamma_" + s + "[cost/V^2]");
        d.rho[a] = get("rho_" + s + "[cost/A^2]");
    }
    for (std::size_t e = 0; e < L; ++e) {
        auto s = arc_tag(model, 2 * e);
        x.l[e] = get("l_" + s + "[A^2]");
        model.line_active[e] = get("active_" + s + "[flag]") != 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t e = 0; e < L; ++e)
            if (model.line_active[e] && (model.lines[e].from == i || model.lines[e].to == i)) any = true;
        bool had = false;
        for (const auto& ln : model.lines)
            if (ln.from == i || ln.to == i) had = true;
        model.detached[i] = had && !any;
    }
    model.rebuild_adjacency();
}

std::vector<ComparisonRow> compare_with_reference(const TraceTable& trace, const std::vector<int>& ids,
                                                  const std::vector<double>& p_ref, const std::vector<double>& ph_ref,
                                                  double rhs_tol) {
    if (trace.rows.empty() || !trace.complete || !trace.settled)
        fail(ErrorKind::NonConvergence, "trace is incomplete or did not reach equilibrium");
    const auto& last = trace.rows.back();
    if (!(last[trace.column("rhs_inf[working]")] <= rhs_tol))
        fail(ErrorKind::NonConvergence, "trace did not converge (final rhs above tolerance)");
    std::vector<ComparisonRow> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ComparisonRow r;
        r.node = ids[i];
        auto s = std::to_string(ids[i]);
        r.p_dist = last[trace.column("p_g_" + s + "[kW]")];
        r.ph_dist = last[trace.column("p_hat_" + s + "[kW]")];
        r.p_ref = p_ref[i];
        r.ph_ref = ph_ref[i];
        r.p_err_pct = r.p_ref != 0 ? (r.p_dist - r.p_ref) / r.p_ref * 100.0 : r.p_dist - r.p_ref;
        r.ph_err_pct = r.ph_ref != 0 ? (r.ph_dist - r.ph_ref) / r.ph_ref * 100.0 : r.ph_dist - r.ph_ref;
        out.push_back(r);
    }
    return out;
}

std::vector<ComparisonRow> compare_with_reference(const std::string& trace_path, const std::string& reference_path) {
    auto trace = read_trace(trace_path);
    json ref;
    try {
        ref = json::parse(read_file(reference_path));
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("reference parse error: ") + e.what());
    }
    std::vector<int> ids;
    std::vector<double> p, ph;
    try {
        for (const auto& nd : ref.at("nodes")) {
            ids.push_back(nd.at("id").get<int>());
            p.push_back(nd.at("p_g_kw").get<double>());
            ph.push_back(nd.at("p_hat_kw").get<double>());
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("reference schema error: ") + e.what());
    }
    return compare_with_reference(trace, ids, p, ph);
}

std::string format_comparison(const std::vector<ComparisonRow>& rows) {
    std::string s;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-6s %14s %14s %10s %16s %16s %10s\n", "node", "p_g dist[kW]", "p_g ref[kW]",
                  "e(%)", "p_hat dist[kW]", "p_hat ref[kW]", "e(%)");
    s += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-6d %14.4f %14.4f %10.4f %16.4f %16.4f %10.4f\n", r.node, r.p_dist, r.p_ref,
                      r.p_err_pct, r.ph_dist, r.ph_ref, r.ph_err_pct);
        s += buf;
    }
    return s;
}

std::string reference_report_json(const GridModel& model, const ReferenceSolution& ref) {
    json j;
    j["format"] = "dcmg-reference";
    j["version"] = 1;
    j["objective"] = objective(model, ref.x);
    j["rhs_inf_working"] = ref.rhs_norm;
    j["kkt_max_working"] = kkt_residual(ref.problem, ref.w).max_residual;
    j["working_units"] = units_json(ref.problem.units);
    j["nodes"] = json::array();
    for (std::size_t i = 0; i < model.node_count(); ++i)
        j["nodes"].push_back({{"id", model.microgrids[i].id},
                              {"p_g_kw", ref.x.p_g[i]},
                              {"v_v2", ref.x.v[i]},
                              {"voltage_v", std::sqrt(ref.x.v[i])},
                              {"p_hat_kw", ref.x.p_hat[i]},
                              {"mu", ref.d.mu[i]},
                              {"eps", ref.d.eps[i]}});
    auto cert = exactness_certificate(model, ref.x);
    j["lines"] = json::array();
    for (std::size_t e = 0; e < model.line_count(); ++e)
        j["lines"].push_back({{"from", model.microgrids[model.lines[e].from].id},
                              {"to", model.microgrids[model.lines[e].to].id},
                              {"active", static_cast<bool>(model.line_active[e])},
                              {"P_forward_kw", ref.x.P[2 * e]},
                              {"P_backward_kw", ref.x.P[2 * e + 1]},
                              {"l_a2", ref.x.l[e]},
                              {"lambda", ref.d.lambda[2 * e]},
                              {"gamma", ref.d.gamma[2 * e]},
                              {"rho_forward", ref.d.rho[2 * e]},
                              {"rho_backward", ref.d.rho[2 * e + 1]},
                              {"soc_gap_a2", cert.gap[e]},
                              {"exact", static_cast<bool>(cert.exact[e])}});
    j["exactness_preconditions"] = {{"equal_vmax", cert.equal_vmax},
                                    {"positive_loads", cert.positive_loads},
                                    {"positive_net_generation", cert.positive_net_generation},
                                    {"increasing_cost", cert.increasing_cost}};
    return j.dump(2);
}

}  // namespace dcmg

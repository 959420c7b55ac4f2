#include "dcmg/dcmg.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dcmg/error.hpp"
#include "dcmg/oracle.hpp"
#include "dcmg/scenario.hpp"

struct dcmg_model {
    dcmg::GridModel model;
    std::string source;
};

struct dcmg_scenario {
    dcmg::Scenario scenario;
};

namespace {

thread_local std::string last_error;

dcmg_status status_of(dcmg::ErrorKind k) {
    switch (k) {
    case dcmg::ErrorKind::Io: return DCMG_E_IO;
    case dcmg::ErrorKind::Parse: return DCMG_E_PARSE;
    case dcmg::ErrorKind::Validation: return DCMG_E_VALIDATION;
    case dcmg::ErrorKind::NonConvergence: return DCMG_E_NONCONVERGENCE;
    case dcmg::ErrorKind::Divergence: return DCMG_E_DIVERGENCE;
    case dcmg::ErrorKind::Argument: return DCMG_E_ARGUMENT;
    case dcmg::ErrorKind::Numeric: return DCMG_E_NUMERIC;
    }
    return DCMG_E_INTERNAL;
}

template <class F>
dcmg_status guarded(F&& f) {
    try {
        f();
        last_error.clear();
        return DCMG_OK;
    } catch (const dcmg::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
    } catch (const std::exception& e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown error";
    }
    return DCMG_E_INTERNAL;
}

char* dup(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

void need(const void* p, const char* what) {
    if (!p) dcmg::fail(dcmg::ErrorKind::Argument, std::string(what) + " is null");
}

std::string slurp(const char* path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) dcmg::fail(dcmg::ErrorKind::Io, std::string("cannot open '") + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

extern "C" {

const char* dcmg_version(void) { return "1.0.0"; }

const char* dcmg_last_error(void) { return last_error.c_str(); }

void dcmg_string_free(char* s) { std::free(s); }

dcmg_status dcmg_model_parse(const char* json_text, dcmg_model** out) {
    return guarded([&] {
        need(json_text, "json_text");
        need(out, "out");
        auto* m = new dcmg_model{dcmg::parse_config(json_text), json_text};
        *out = m;
    });
}

dcmg_status dcmg_model_load(const char* path, dcmg_model** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        auto text = slurp(path);
        *out = new dcmg_model{dcmg::parse_config(text), text};
    });
}

void dcmg_model_free(dcmg_model* model) { delete model; }

dcmg_status dcmg_model_size(const dcmg_model* model, size_t* nodes, size_t* lines) {
    return guarded([&] {
        need(model, "model");
        if (nodes) *nodes = model->model.node_count();
        if (lines) *lines = model->model.line_count();
    });
}

dcmg_status dcmg_model_describe(const dcmg_model* model, char** json_out) {
    return guarded([&] {
        need(model, "model");
        need(json_out, "json_out");
        *json_out = dup(dcmg::to_json(model->model));
    });
}

dcmg_status dcmg_scenario_parse(const char* json_text, dcmg_scenario** out) {
    return guarded([&] {
        need(json_text, "json_text");
        need(out, "out");
        *out = new dcmg_scenario{dcmg::parse_scenario(json_text)};
    });
}

dcmg_status dcmg_scenario_load(const char* path, dcmg_scenario** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new dcmg_scenario{dcmg::load_scenario(path)};
    });
}

void dcmg_scenario_free(dcmg_scenario* scenario) { delete scenario; }

void dcmg_sim_overrides_init(dcmg_sim_overrides* o) {
    if (!o) return;
    o->step_s = 0;
    o->horizon_s = 0;
    o->engine = -1;
    o->integrator = -1;
    o->neighbor_info = -1;
}

dcmg_status dcmg_scenario_override(dcmg_scenario* scenario, const dcmg_sim_overrides* o) {
    return guarded([&] {
        need(scenario, "scenario");
        need(o, "overrides");
        auto& s = scenario->scenario.sim;
        if (o->step_s > 0) s.step = o->step_s;
        if (o->horizon_s > 0) s.horizon = o->horizon_s;
        if (o->engine == 0 || o->engine == 1) s.engine = o->engine ? dcmg::EngineKind::Parallel : dcmg::EngineKind::Serial;
        if (o->integrator == 0 || o->integrator == 1)
            s.integrator = o->integrator ? dcmg::Integrator::RK4 : dcmg::Integrator::Euler;
        if (o->neighbor_info == 0 || o->neighbor_info == 1)
            s.neighbor = o->neighbor_info ? dcmg::NeighborInfo::Measured : dcmg::NeighborInfo::Exchange;
    });
}

dcmg_status dcmg_simulate(const dcmg_model* model, const dcmg_scenario* scenario, const char* trace_path,
                          const char* manifest_path, dcmg_run_summary* summary) {
    return guarded([&] {
        need(model, "model");
        need(scenario, "scenario");
        dcmg::OutputPaths out;
        if (trace_path) out.trace = trace_path;
        if (manifest_path) out.manifest = manifest_path;
        out.config_source = model->source;
        auto r = dcmg::run_scenario(model->model, scenario->scenario.events, scenario->scenario.sim, out);
        if (summary) {
            summary->converged = r.converged ? 1 : 0;
            summary->steps = r.steps;
            summary->final_rhs = r.final_rhs;
            summary->box_violations = r.box_violations;
            summary->plant_failures = r.plant_failures;
        }
    });
}

dcmg_status dcmg_solve_reference(const dcmg_model* model, char** report_json) {
    return guarded([&] {
        need(model, "model");
        need(report_json, "report_json");
        auto ref = dcmg::centralized_reference_solve(model->model);
        *report_json = dup(dcmg::reference_report_json(model->model, ref));
    });
}

dcmg_status dcmg_audit_trace(const dcmg_model* model, const char* trace_path, char** report_json) {
    return guarded([&] {
        need(model, "model");
        need(trace_path, "trace_path");
        need(report_json, "report_json");
        auto t = dcmg::read_trace(trace_path);
        if (t.rows.empty()) dcmg::fail(dcmg::ErrorKind::Parse, "trace has no rows");
        auto rhs_col = t.column("rhs_inf[working]");
        nlohmann::json rows = nlohmann::json::array();
        double worst_settled = 0;
        std::size_t settled_rows = 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            auto m = model->model;
            dcmg::PrimalState x;
            dcmg::DualState d;
            dcmg::state_from_trace(t, r, m, x, d);
            auto pb = dcmg::make_problem(m, t.units);
            auto rep = dcmg::kkt_residual(pb, dcmg::to_working(pb, x, d));
            if (t.rows[r][rhs_col] <= 1e-6) {
                worst_settled = std::max(worst_settled, rep.max_residual);
                ++settled_rows;
            }
            if (r + 1 == t.rows.size()) {
                nlohmann::json last{{"t_s", t.rows[r][0]},
                                    {"rhs_inf", t.rows[r][rhs_col]},
                                    {"kkt_max", rep.max_residual},
                                    {"complementarity_worst", rep.complementarity_worst}};
                for (const auto& [k, v] : rep.rows) last["rows"][k] = v;
                rows = last;
            }
        }
        nlohmann::json j{{"format", "dcmg-kkt-audit"},
                         {"version", 1},
                         {"rows_audited", t.rows.size()},
                         {"complete", t.complete},
                         {"settled", t.settled},
                         {"rows_at_equilibrium", settled_rows},
                         {"kkt_max_at_equilibrium", worst_settled},
                         {"final", rows}};
        *report_json = dup(j.dump(2));
    });
}

dcmg_status dcmg_compare(const char* trace_path, const char* reference_path, char** table) {
    return guarded([&] {
        need(trace_path, "trace_path");
        need(reference_path, "reference_path");
        need(table, "table");
        *table = dup(dcmg::format_comparison(dcmg::compare_with_reference(trace_path, reference_path)));
    });
}

}  // extern "C"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcmg/dcmg.h"

namespace {

int exit_code(dcmg_status s) {
    switch (s) {
    case DCMG_OK: return 0;
    case DCMG_E_VALIDATION:
    case DCMG_E_PARSE: return 2;
    case DCMG_E_NONCONVERGENCE:
    case DCMG_E_DIVERGENCE: return 3;
    default: return 1;
    }
}

int report(dcmg_status s) {
    if (s != DCMG_OK) std::fprintf(stderr, "error: %s\n", dcmg_last_error());
    return exit_code(s);
}

struct ModelHandle {
    dcmg_model* m = nullptr;
    ~ModelHandle() { dcmg_model_free(m); }
};

struct ScenarioHandle {
    dcmg_scenario* s = nullptr;
    ~ScenarioHandle() { dcmg_scenario_free(s); }
};

struct Text {
    char* p = nullptr;
    ~Text() { dcmg_string_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed optimal power flow simulator for stand-alone DC microgrids"};
    app.require_subcommand(1);

    std::string config, scenario, trace, reference, out_dir = ".", out_file, engine, integrator, neighbor, name;
    double step = 0, horizon = 0;

    auto* validate = app.add_subcommand("validate", "Check a network configuration");
    validate->add_option("config", config, "Network configuration (JSON)")->required();

    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write a trace and manifest");
    simulate->add_option("config", config, "Network configuration (JSON)")->required();
    simulate->add_option("scenario", scenario, "Scenario file (JSON)")->required();
    simulate->add_option("--step", step, "Integrator step size [s]");
    simulate->add_option("--horizon", horizon, "Simulated horizon [s]");
    simulate->add_option("--out", out_dir, "Output directory");
    simulate->add_option("--name", name, "Output file stem (default: scenario file stem)");
    simulate->add_option("--engine", engine, "serial or parallel")->check(CLI::IsMember({"serial", "parallel"}));
    simulate->add_option("--integrator", integrator, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
    simulate->add_option("--neighbor-info", neighbor, "exchange or measured")
        ->check(CLI::IsMember({"exchange", "measured"}));

    auto* solve = app.add_subcommand("solve", "Centralized reference solve");
    solve->add_option("config", config, "Network configuration (JSON)")->required();
    solve->add_option("--out", out_file, "Write the report here instead of stdout");

    auto* kkt = app.add_subcommand("kkt", "Re-audit the KKT residual of a trace");
    kkt->add_option("config", config, "Network configuration (JSON)")->required();
    kkt->add_option("trace", trace, "Trace file")->required();

    auto* compare = app.add_subcommand("compare", "Compare a converged trace with a reference solve");
    compare->add_option("trace", trace, "Trace file")->required();
    compare->add_option("reference", reference, "Reference report from 'solve'")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (*validate) {
        ModelHandle m;
        auto s = dcmg_model_load(config.c_str(), &m.m);
        if (s != DCMG_OK) return report(s);
        size_t n = 0, l = 0;
        dcmg_model_size(m.m, &n, &l);
        std::printf("ok: %zu microgrids, %zu lines\n", n, l);
        return 0;
    }

    if (*simulate) {
        ModelHandle m;
        ScenarioHandle sc;
        auto s = dcmg_model_load(config.c_str(), &m.m);
        if (s != DCMG_OK) return report(s);
        s = dcmg_scenario_load(scenario.c_str(), &sc.s);
        if (s != DCMG_OK) return report(s);
        dcmg_sim_overrides o;
        dcmg_sim_overrides_init(&o);
        o.step_s = step;
        o.horizon_s = horizon;
        if (!engine.empty()) o.engine = engine == "parallel" ? 1 : 0;
        if (!integrator.empty()) o.integrator = integrator == "rk4" ? 1 : 0;
        if (!neighbor.empty()) o.neighbor_info = neighbor == "measured" ? 1 : 0;
        s = dcmg_scenario_override(sc.s, &o);
        if (s != DCMG_OK) return report(s);
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (name.empty()) name = std::filesystem::path(scenario).stem().string();
        auto trace_path = (std::filesystem::path(out_dir) / (name + ".trace.csv")).string();
        auto manifest_path = (std::filesystem::path(out_dir) / (name + ".manifest.json")).string();
        dcmg_run_summary sum{};
        s = dcmg_simulate(m.m, sc.s, trace_path.c_str(), manifest_path.c_str(), &sum);
        if (s != DCMG_OK) return report(s);
        std::printf("trace: %s\nmanifest: %s\nsteps: %zu  final rhs: %.3e  box violations: %zu  converged: %s\n",
                    trace_path.c_str(), manifest_path.c_str(), sum.steps, sum.final_rhs, sum.box_violations,
                    sum.converged ? "yes" : "no");
        return sum.converged ? 0 : 3;
    }

    if (*solve) {
        ModelHandle m;
        auto s = dcmg_model_load(config.c_str(), &m.m);
        if (s != DCMG_OK) return report(s);
        Text t;
        s = dcmg_solve_reference(m.m, &t.p);
        if (s != DCMG_OK) return report(s);
        if (out_file.empty()) {
            std::printf("%s\n", t.p);
        } else {
            std::ofstream f(out_file);
            if (!f) {
                std::fprintf(stderr, "error: cannot write '%s'\n", out_file.c_str());
                return 1;
            }
            f << t.p << "\n";
        }
        return 0;
    }

    if (*kkt) {
        ModelHandle m;
        auto s = dcmg_model_load(config.c_str(), &m.m);
        if (s != DCMG_OK) return report(s);
        Text t;
        s = dcmg_audit_trace(m.m, trace.c_str(), &t.p);
        if (s != DCMG_OK) return report(s);
        std::printf("%s\n", t.p);
        auto j = nlohmann::json::parse(t.p);
        return j["final"]["kkt_max"].get<double>() <= 1e-6 ? 0 : 3;
    }

    if (*compare) {
        Text t;
        auto s = dcmg_compare(trace.c_str(), reference.c_str(), &t.p);
        if (s != DCMG_OK) return report(s);
        std::printf("%s", t.p);
        return 0;
    }
    return 0;
}

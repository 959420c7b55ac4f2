#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dcmg/dynamics.hpp"
#include "dcmg/network.hpp"
#include "dcmg/oracle.hpp"
#include "dcmg/plant.hpp"
#include "dcmg/state.hpp"

namespace dcmg {

enum class EventKind { SetLoad, SetGenMax, Disconnect, Reconnect };

const char* to_string(EventKind k);

struct ScenarioEvent {
    double time = 0.0;  // s
    EventKind kind = EventKind::SetLoad;
    int node = 0;       // node id
    double value = 0.0; // kW, SetLoad and SetGenMax only
};

struct SimConfig {
    double step = 1e-3;      // s
    double horizon = 10.0;   // s
    Integrator integrator = Integrator::Euler;
    EngineKind engine = EngineKind::Serial;
    unsigned threads = 0;
    NeighborInfo neighbor = NeighborInfo::Exchange;
    WorkingUnits units;
    std::size_t trace_every = 1;
    std::size_t kkt_every = 100;      // 0 disables
    std::size_t lyapunov_every = 1;   // 0 disables
    std::size_t plant_every = 1;
    std::size_t plant_failure_limit = 50;
    double equilibrium_tol = 1e-6;
    std::size_t equilibrium_steps = 100;
    // End the run early once every event has fired and the last segment holds
    // rhs below this value for equilibrium_steps steps. Zero runs to the horizon.
    double stop_tolerance = 0.0;
};

struct Scenario {
    std::vector<ScenarioEvent> events;
    SimConfig sim;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);
void validate_events(const GridModel& model, const std::vector<ScenarioEvent>& events);
GridModel apply_event(const GridModel& model, const ScenarioEvent& ev);

struct LyapunovStats {
    std::size_t samples = 0;
    double first = 0.0;
    double last = 0.0;
    double min_value = 0.0;
    double max_increase = 0.0;  // largest U[k+1] - U[k]
    std::size_t switches = 0;
};

struct SegmentSummary {
    double start = 0.0;
    double end = 0.0;
    std::vector<ScenarioEvent> events;  // applied at start
    GridModel model;
    bool settled = false;
    double settle_time = -1.0;
    double final_rhs = 0.0;
    PrimalState x;
    DualState d;
    PlantState plant;
    double kkt_final = 0.0;
    std::optional<ReferenceSolution> reference;
    LyapunovStats lyapunov;
};

struct ScenarioResult {
    std::vector<SegmentSummary> segments;
    std::size_t steps = 0;
    std::size_t box_violations = 0;
    double max_symmetry_error = 0.0;
    std::size_t plant_failures = 0;
    bool converged = false;
    double final_rhs = 0.0;
    WorkingUnits units;
};

struct OutputPaths {
    std::string trace;     // empty: no trace file
    std::string manifest;  // empty: no manifest
    std::string config_source;  // bytes hashed into the manifest
};

ScenarioResult run_scenario(const GridModel& model, const std::vector<ScenarioEvent>& events, const SimConfig& sim,
                            const OutputPaths& out = {});

struct TraceTable {
    WorkingUnits units;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    bool complete = false;  // end trailer present
    bool settled = false;
    std::size_t column(const std::string& name) const;
};

TraceTable read_trace(const std::string& path);

// State recorded in one trace row, mapped onto the model's layout. Loads,
// capacities and line activity are taken from the row.
void state_from_trace(const TraceTable& t, std::size_t row, GridModel& model, PrimalState& x, DualState& d);

struct ComparisonRow {
    int node = 0;
    double p_dist = 0, p_ref = 0, p_err_pct = 0;
    double ph_dist = 0, ph_ref = 0, ph_err_pct = 0;
};

std::vector<ComparisonRow> compare_with_reference(const TraceTable& trace, const std::vector<int>& ids,
                                                  const std::vector<double>& p_ref, const std::vector<double>& ph_ref,
                                                  double rhs_tol = 1e-6);
std::vector<ComparisonRow> compare_with_reference(const std::string& trace_path, const std::string& reference_path);
std::string format_comparison(const std::vector<ComparisonRow>& rows);

std::string reference_report_json(const GridModel& model, const ReferenceSolution& ref);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace dcmg

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace dcmg {

enum class ControlMode { PowerControl, VoltageControl, DroopControl };

const char* to_string(ControlMode m);
ControlMode parse_mode(const std::string& s);

struct MicrogridParams {
    int id = 0;
    double cost_a = 0.0;   // per kW^2
    double cost_b = 0.0;   // per kW
    double load = 0.0;     // kW
    double gen_max = 0.0;  // kW
    double v_min = 0.0;    // V
    double v_max = 0.0;    // V
    double droop_k = 0.13; // V^2/kW
    double v_star = 0.0;   // V^2
    ControlMode mode = ControlMode::DroopControl;
    std::optional<double> p_init;  // kW
    std::optional<double> v_init;  // V^2
};

struct Line {
    std::size_t from = 0;  // node index, not id
    std::size_t to = 0;
    double resistance = 0.0;  // ohm
};

struct ValidationOptions {
    double cost_floor = 1e-6;
    bool require_equal_vmax = true;
    bool require_connected = true;
};

// Lines keep their index for the lifetime of a run. A disconnect only flips
// line_active, so per-line state vectors keep a fixed layout.
struct GridModel {
    std::vector<MicrogridParams> microgrids;
    std::vector<Line> lines;
    std::vector<bool> line_active;
    std::vector<bool> detached;
    std::vector<std::vector<std::size_t>> adjacency;  // active neighbors
    ValidationOptions options;

    std::size_t node_count() const { return microgrids.size(); }
    std::size_t line_count() const { return lines.size(); }
    std::size_t index_of(int id) const;
    std::vector<std::vector<std::size_t>> components() const;
    void rebuild_adjacency();
};

// Throws Error(Validation) naming the field and node.
void validate(const GridModel& model);

GridModel parse_config(const std::string& json_text, const ValidationOptions& opts = {});
GridModel load_config(const std::string& path, const ValidationOptions& opts = {});
std::string to_json(const GridModel& model);

double cost(const MicrogridParams& params, double p);
double cost_gradient(const MicrogridParams& params, double p);

enum class TopologyAction { Disconnect, Reconnect };
GridModel apply_topology_change(const GridModel& model, TopologyAction action, std::size_t node);

}  // namespace dcmg

#include "dcmg/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dcmg/error.hpp"

namespace dcmg {

using nlohmann::json;

const char* to_string(ControlMode m) {
    switch (m) {
    case ControlMode::PowerControl: return "power";
    case ControlMode::VoltageControl: return "voltage";
    case ControlMode::DroopControl: return "droop";
    }
    return "?";
}

ControlMode parse_mode(const std::string& s) {
    std::string t;
    for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "power" || t == "powercontrol") return ControlMode::PowerControl;
    if (t == "voltage" || t == "voltagecontrol") return ControlMode::VoltageControl;
    if (t == "droop" || t == "droopcontrol") return ControlMode::DroopControl;
    fail(ErrorKind::Validation, "unknown control mode '" + s + "'");
}

std::size_t GridModel::index_of(int id) const {
    for (std::size_t i = 0; i < microgrids.size(); ++i)
        if (microgrids[i].id == id) return i;
    fail(ErrorKind::Argument, "unknown node id " + std::to_string(id));
}

void GridModel::rebuild_adjacency() {
    adjacency.assign(microgrids.size(), {});
    if (line_active.size() != lines.size()) line_active.assign(lines.size(), true);
    if (detached.size() != microgrids.size()) detached.assign(microgrids.size(), false);
    for (std::size_t e = 0; e < lines.size(); ++e) {
        if (!line_active[e]) continue;
        adjacency[lines[e].from].push_back(lines[e].to);
        adjacency[lines[e].to].push_back(lines[e].from);
    }
}

std::vector<std::vector<std::size_t>> GridModel::components() const {
    std::vector<std::vector<std::size_t>> out;
    std::vector<bool> seen(node_count(), false);
    for (std::size_t s = 0; s < node_count(); ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> comp{s}, stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            auto u = stack.back();
            stack.pop_back();
            for (auto w : adjacency[u])
                if (!seen[w]) {
                    seen[w] = true;
                    comp.push_back(w);
                    stack.push_back(w);
                }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

namespace {

[[noreturn]] void bad(const MicrogridParams& g, const std::string& field, const std::string& msg) {
    fail(ErrorKind::Validation, "node " + std::to_string(g.id) + ": " + field + " " + msg);
}

}  // namespace

void validate(const GridModel& model) {
    const auto& opt = model.options;
    if (model.microgrids.empty()) fail(ErrorKind::Validation, "config has no microgrids");
    std::set<int> ids;
    for (const auto& g : model.microgrids) {
        if (!ids.insert(g.id).second) bad(g, "id", "is duplicated");
        if (!(g.droop_k > 0)) bad(g, "droop_k", "must be positive");
        if (!(g.gen_max > 0)) bad(g, "gen_max_kw", "must be positive");
        if (!(g.load > 0)) bad(g, "load_kw", "must be positive");
        if (!(g.v_min > 0)) bad(g, "v_min_volts", "must be positive");
        if (!(g.v_min < g.v_max)) bad(g, "v_max_volts", "must exceed v_min_volts");
        if (!(g.cost_a >= opt.cost_floor)) bad(g, "cost_a", "is below the strong convexity floor");
        if (!std::isfinite(g.cost_b)) bad(g, "cost_b", "must be finite");
        if (!(g.v_star > 0)) bad(g, "v_star", "must be positive");
        if (g.p_init && (*g.p_init < 0 || *g.p_init > g.gen_max))
            bad(g, "initial_generation_kw", "is outside [0, gen_max]");
        if (g.v_init && (*g.v_init < g.v_min * g.v_min || *g.v_init > g.v_max * g.v_max))
            bad(g, "initial_voltage_volts", "is outside [v_min, v_max]");
    }
    if (opt.require_equal_vmax)
        for (const auto& g : model.microgrids)
            if (g.v_max != model.microgrids.front().v_max)
                bad(g, "v_max_volts", "differs from other microgrids");
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& l : model.lines) {
        if (l.from >= model.node_count() || l.to >= model.node_count())
            fail(ErrorKind::Validation, "line endpoint out of range");
        if (l.from == l.to)
            fail(ErrorKind::Validation, "line at node " + std::to_string(model.microgrids[l.from].id) + " is a self-loop");
        if (!(l.resistance > 0))
            fail(ErrorKind::Validation, "line " + std::to_string(model.microgrids[l.from].id) + "-" +
                                            std::to_string(model.microgrids[l.to].id) +
                                            ": resistance must be positive");
        auto key = std::minmax(l.from, l.to);
        if (!pairs.insert(key).second)
            fail(ErrorKind::Validation, "duplicate line between nodes " + std::to_string(model.microgrids[l.from].id) +
                                            " and " + std::to_string(model.microgrids[l.to].id));
    }
    auto comps = model.components();
    if (opt.require_connected) {
        std::size_t attached = 0;
        for (const auto& c : comps)
            if (!(c.size() == 1 && model.detached[c[0]])) ++attached;
        if (attached > 1) fail(ErrorKind::Validation, "network graph is not connected");
    }
    for (const auto& c : comps) {
        double cap = 0, load = 0;
        for (auto i : c) {
            cap += model.microgrids[i].gen_max;
            load += model.microgrids[i].load;
        }
        bool ok = c.size() == 1 ? cap >= load : cap > load;
        if (!ok)
            fail(ErrorKind::Validation, "generation capacity does not cover load in the component containing node " +
                                            std::to_string(model.microgrids[c[0]].id));
        bool anchored = false;
        for (auto i : c)
            if (model.microgrids[i].mode != ControlMode::PowerControl) anchored = true;
        if (!anchored)
            fail(ErrorKind::Validation, "component containing node " + std::to_string(model.microgrids[c[0]].id) +
                                            " has no voltage or droop controlled microgrid");
    }
}

GridModel parse_config(const std::string& text, const ValidationOptions& opts) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("config parse error: ") + e.what());
    }
    GridModel m;
    m.options = opts;
    try {
        double def_k = 0.13;
        std::optional<double> def_vstar;
        if (j.contains("defaults")) {
            const auto& d = j.at("defaults");
            if (d.contains("droop_k")) def_k = d.at("droop_k").get<double>();
            if (d.contains("v_star_volts")) def_vstar = d.at("v_star_volts").get<double>();
            if (d.contains("cost_a_floor")) m.options.cost_floor = d.at("cost_a_floor").get<double>();
        }
        int next_id = 1;
        for (const auto& g : j.at("microgrids")) {
            MicrogridParams p;
            p.id = g.value("id", next_id);
            next_id = p.id + 1;
            p.cost_a = g.at("cost_a").get<double>();
            p.cost_b = g.at("cost_b").get<double>();
            p.load = g.at("load_kw").get<double>();
            p.gen_max = g.at("gen_max_kw").get<double>();
            p.v_min = g.at("v_min_volts").get<double>();
            p.v_max = g.at("v_max_volts").get<double>();
            p.droop_k = g.value("droop_k", def_k);
            if (g.contains("v_star_volts")) {
                double vs = g.at("v_star_volts").get<double>();
                p.v_star = vs * vs;
            } else if (def_vstar) {
                p.v_star = *def_vstar * *def_vstar;
            } else {
                double mid = 0.5 * (p.v_min + p.v_max);
                p.v_star = mid * mid;
            }
            p.mode = parse_mode(g.value("mode", std::string("droop")));
            if (g.contains("initial_generation_kw")) p.p_init = g.at("initial_generation_kw").get<double>();
            if (g.contains("initial_voltage_volts")) {
                double v0 = g.at("initial_voltage_volts").get<double>();
                p.v_init = v0 * v0;
            }
            m.microgrids.push_back(p);
        }
        if (j.contains("lines"))
            for (const auto& l : j.at("lines")) {
                Line line;
                line.from = m.index_of(l.at("from").get<int>());
                line.to = m.index_of(l.at("to").get<int>());
                line.resistance = l.at("resistance_ohm").get<double>();
                m.lines.push_back(line);
            }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("config schema error: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Argument) fail(ErrorKind::Validation, e.what());
        throw;
    }
    m.line_active.assign(m.lines.size(), true);
    m.detached.assign(m.microgrids.size(), false);
    m.rebuild_adjacency();
    validate(m);
    return m;
}

GridModel load_config(const std::string& path, const ValidationOptions& opts) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), opts);
}

std::string to_json(const GridModel& model) {
    json j;
    j["microgrids"] = json::array();
    for (const auto& g : model.microgrids) {
        json o{{"id", g.id},
               {"cost_a", g.cost_a},
               {"cost_b", g.cost_b},
               {"load_kw", g.load},
               {"gen_max_kw", g.gen_max},
               {"v_min_volts", g.v_min},
               {"v_max_volts", g.v_max},
               {"droop_k", g.droop_k},
               {"v_star_volts", std::sqrt(g.v_star)},
               {"mode", to_string(g.mode)}};
        if (g.p_init) o["initial_generation_kw"] = *g.p_init;
        if (g.v_init) o["initial_voltage_volts"] = std::sqrt(*g.v_init);
        j["microgrids"].push_back(o);
    }
    j["lines"] = json::array();
    for (std::size_t e = 0; e < model.lines.size(); ++e) {
        const auto& l = model.lines[e];
        j["lines"].push_back({{"from", model.microgrids[l.from].id},
                              {"to", model.microgrids[l.to].id},
                              {"resistance_ohm", l.resistance},
                              {"active", static_cast<bool>(model.line_active[e])}});
    }
    return j.dump(2);
}

double cost(const MicrogridParams& g, double p) { return 0.5 * g.cost_a * p * p + g.cost_b * p; }

double cost_gradient(const MicrogridParams& g, double p) { return g.cost_a * p + g.cost_b; }

GridModel apply_topology_change(const GridModel& model, TopologyAction action, std::size_t node) {
    if (node >= model.node_count()) fail(ErrorKind::Argument, "unknown node index " + std::to_string(node));
    GridModel out = model;
    const int id = model.microgrids[node].id;
    if (action == TopologyAction::Disconnect) {
        if (model.detached[node]) fail(ErrorKind::Argument, "node " + std::to_string(id) + " is already disconnected");
        if (model.adjacency[node].empty()) fail(ErrorKind::Argument, "node " + std::to_string(id) + " is already isolated");
        for (std::size_t e = 0; e < out.lines.size(); ++e)
            if (out.lines[e].from == node || out.lines[e].to == node) out.line_active[e] = false;
        out.detached[node] = true;
    } else {
        if (!model.detached[node]) fail(ErrorKind::Argument, "node " + std::to_string(id) + " is not disconnected");
        out.detached[node] = false;
        for (std::size_t e = 0; e < out.lines.size(); ++e) {
            const auto& l = out.lines[e];
            if (l.from != node && l.to != node) continue;
            std::size_t other = l.from == node ? l.to : l.from;
            if (!out.detached[other]) out.line_active[e] = true;
        }
    }
    out.rebuild_adjacency();
    return out;
}

}  // namespace dcmg

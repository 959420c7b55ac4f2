#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "dcmg/kernel.hpp"
#include "dcmg/network.hpp"
#include "dcmg/state.hpp"

namespace dcmg {

double clamp(double x, double a, double b);
double positive_projection(double x, double a);

struct StateRate {
    PrimalState dx;
    DualState dd;
};

// Time derivative of (x, d) in natural units per second.
StateRate rhs(const GridModel& model, const PrimalState& x, const DualState& d, const WorkingUnits& units = {});

enum class Integrator { Euler, RK4 };
enum class EngineKind { Serial, Parallel };
// Exchange: neighbors send (rho, P, v). Measured: only rho is sent, P_ki and v_k
// are estimated from plant currents.
enum class NeighborInfo { Exchange, Measured };

Integrator parse_integrator(const std::string& s);
EngineKind parse_engine(const std::string& s);
NeighborInfo parse_neighbor_info(const std::string& s);

// Single Euler step with re-projection. Natural units in and out.
void step(const GridModel& model, PrimalState& x, DualState& d, double h, const WorkingUnits& units = {});

struct AgentView {
    std::size_t node = 0;
    double v = 0.0;                       // own v_i, V^2
    std::vector<std::size_t> arcs;        // outgoing arcs
    std::vector<double> P;                // own P_ik per arc, kW
    std::vector<double> I;                // measured I_ik per arc, A
    std::vector<double> rho_in;           // latest rho_ki per arc
};

struct NeighborEstimate {
    double P_far = 0.0;  // kW
    double v_far = 0.0;  // V^2
};

NeighborEstimate estimate_neighbor(const GridModel& model, const AgentView& view, std::size_t k);

// Synchronous round: every agent's inbox gets the current rho of each neighbor.
void exchange_messages(const GridModel& model, const DualState& d, std::vector<AgentView>& agents);
std::vector<AgentView> make_agent_views(const GridModel& model, const PrimalState& x);

struct Command {
    ControlMode mode = ControlMode::DroopControl;
    double p_ref = 0.0;      // kW, PowerControl
    double v_ref = 0.0;      // V, VoltageControl
    double p_hat_ref = 0.0;  // kW, DroopControl
};
using CommandSet = std::vector<Command>;

CommandSet emit_commands(const GridModel& model, const PrimalState& x);

struct EngineOptions {
    WorkingUnits units;
    Integrator integrator = Integrator::Euler;
    EngineKind kind = EngineKind::Serial;
    NeighborInfo neighbor = NeighborInfo::Exchange;
    unsigned threads = 0;
    double divergence_limit = 1e8;  // working units
};

class WorkerPool;

class Engine {
public:
    Engine(const GridModel& model, const EngineOptions& opts);
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const Problem& problem() const { return pb_; }
    const EngineOptions& options() const { return opts_; }
    const std::vector<double>& state() const { return x_; }
    void set_state(std::vector<double> w);
    void set_state(const PrimalState& x, const DualState& d);
    void get_state(PrimalState& x, DualState& d) const;

    // Swap in a mutated model. State carries over; arcs of removed lines are
    // zeroed and p, v are projected into the new box.
    void rebuild(const GridModel& model);

    // Plant currents per arc (A), consumed by Measured mode.
    void set_measured_currents(const std::vector<double>& I);

    // Advances by h; returns the rhs inf-norm at the start of the step.
    double advance(double h);
    std::vector<double> current_rhs();

private:
    void fill_inbox(const double* x, Inbox& in) const;
    void eval(const double* x, double* out);

    GridModel model_;
    EngineOptions opts_;
    Problem pb_;
    std::vector<double> x_, k1_, k2_, k3_, k4_, tmp_;
    std::vector<double> I_meas_;
    Inbox inbox_;
    std::unique_ptr<WorkerPool> pool_;
};

}  // namespace dcmg

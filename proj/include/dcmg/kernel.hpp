#pragma once

#include <cstddef>
#include <vector>

#include "dcmg/network.hpp"
#include "dcmg/state.hpp"

namespace dcmg {

// Normalization of the working system the dynamics run in. Zero means
// "derive from the model".
struct WorkingUnits {
    double power_kw = 0.0;    // base for p_g, P, loads, capacities
    double vsq_v2 = 0.0;      // base for v
    double phat_kw = 0.0;     // base for p_hat
    double cost = 0.0;        // divides the objective
    double isq_factor = 10.0; // current-squared base in multiples of (1000 S)^2 / W

    double isq_a2() const { return isq_factor * (1000.0 * power_kw) * (1000.0 * power_kw) / vsq_v2; }
};

WorkingUnits resolve_units(const GridModel& model, WorkingUnits u = {});

struct Layout {
    std::size_t n = 0, m = 0;
    std::size_t p = 0, v = 0, P = 0, l = 0, ph = 0, mu = 0, eps = 0, lam = 0, gam = 0, rho = 0, size = 0;
    Layout() = default;
    Layout(std::size_t n_, std::size_t m_);
};

// The model in working units, plus the arc incidence each agent needs.
struct Problem {
    Layout L;
    WorkingUnits units;
    std::vector<double> a, b, pd, pmax, vlo, vhi, kp, kh, vs;
    std::vector<double> r_ohm;   // per line, working
    std::vector<double> r_loss;  // per line, working
    double sigma = 1.0;
    std::vector<std::size_t> src, dst;  // per arc
    std::vector<bool> active;           // per line
    std::vector<std::size_t> out_begin, out_arcs;  // active outgoing arcs of each node
};

Problem make_problem(const GridModel& model, const WorkingUnits& units);

std::vector<double> to_working(const Problem& pb, const PrimalState& x, const DualState& d);
void from_working(const Problem& pb, const std::vector<double>& w, PrimalState& x, DualState& d);

// What agent i holds about the far end of each of its arcs.
struct Inbox {
    std::vector<double> P_far;    // P_ki
    std::vector<double> v_far;    // v_k
    std::vector<double> rho_far;  // rho_ki
    void resize(std::size_t arcs) {
        P_far.assign(arcs, 0.0);
        v_far.assign(arcs, 0.0);
        rho_far.assign(arcs, 0.0);
    }
};

// Fill every inbox from the neighbors' current snapshot.
void exchange_from_snapshot(const Problem& pb, const double* x, Inbox& inbox);

// F for every coordinate agent i owns. rhs = clamp(x - F) - x on p and v, -F elsewhere.
void agent_drive(const Problem& pb, const double* x, const Inbox& inbox, std::size_t i, double* F);
void agent_rhs(const Problem& pb, const double* x, const Inbox& inbox, std::size_t i, double* out);

// Coordinates of the state vector owned by agent i.
std::vector<std::size_t> owned_coordinates(const Problem& pb, std::size_t i);

void drive(const Problem& pb, const double* x, const Inbox& inbox, double* F);
void drive_to_rhs(const Problem& pb, const double* x, const double* F, double* out);
std::vector<double> full_rhs(const Problem& pb, const std::vector<double>& x);
std::vector<double> full_drive(const Problem& pb, const std::vector<double>& x);

void project_state(const Problem& pb, double* x);
double inf_norm(const std::vector<double>& v);

}  // namespace dcmg

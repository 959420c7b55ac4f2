#pragma once

#include <vector>

#include "dcmg/network.hpp"
#include "dcmg/state.hpp"

namespace dcmg {

double objective(const GridModel& model, const PrimalState& x);
double augmented_objective(const GridModel& model, const PrimalState& x);

std::vector<double> aux_y(const GridModel& model, const PrimalState& x);  // V^2
std::vector<double> aux_z(const GridModel& model, const PrimalState& x);  // kW

struct Residuals {
    std::vector<double> loss;     // kW per line
    std::vector<double> ohm;      // V^2 per line, from -> to direction
    std::vector<double> soc;      // A^2 per arc, P^2/v - l
    std::vector<double> vbox;     // V^2 per node
    std::vector<double> gbox;     // kW per node
    std::vector<double> droop;    // V^2 per node
    std::vector<double> balance;  // kW per node
    double normalized_inf = 0.0;  // each family divided by its scale
};

struct ResidualScales {
    double power_kw = 1.0;
    double vsq = 160000.0;
    double isq = 1.0e4;
};

// Inactive lines report zero residuals.
Residuals residuals(const GridModel& model, const PrimalState& x, const ResidualScales& scales = {});

// l - P^2/v per line in the from -> to direction (A^2).
std::vector<double> exactness_gap(const GridModel& model, const PrimalState& x);
// Same, for each arc.
std::vector<double> exactness_gap_arcs(const GridModel& model, const PrimalState& x);

bool socp_psd(double vi, double vk, double w);

// p_hat is left at zero.
PrimalState map_socp_to_branch(const GridModel& model, const SocpSolution& s);

double droop_reference_for(const GridModel& model, const PrimalState& x, std::size_t node);

}  // namespace dcmg

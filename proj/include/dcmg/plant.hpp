#pragma once

#include <cstddef>
#include <vector>

#include "dcmg/dynamics.hpp"
#include "dcmg/network.hpp"

namespace dcmg {

struct PlantState {
    std::vector<double> V;      // V
    std::vector<double> I;      // A per arc
    std::vector<double> Pflow;  // kW per arc
    std::vector<double> inj;    // kW, p_g - p_d
    std::vector<double> g;      // kW generation
    double residual = 0.0;
    int iterations = 0;
};

struct PlantOptions {
    int max_iterations = 50;
    double tolerance = 1e-10;
};

// Newton-Raphson power flow. An empty guess means flat start at sqrt(v_star).
PlantState solve_power_flow(const GridModel& model, const CommandSet& commands, const PlantState& guess = {},
                            const PlantOptions& opts = {});

struct Measurement {
    double V = 0.0;
    std::vector<std::size_t> arcs;
    std::vector<double> I;
    std::vector<double> Pflow;
    double g = 0.0;
};

Measurement measurements_for(const GridModel& model, const PlantState& plant, std::size_t node);

}  // namespace dcmg

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcmg/kernel.hpp"
#include "dcmg/network.hpp"
#include "dcmg/state.hpp"

namespace dcmg {

// Residuals in working units. Keys: stationarity_p, stationarity_v,
// stationarity_P, stationarity_l, stationarity_p_hat, balance, droop, loss,
// ohm, soc_feasibility, rho_sign, complementarity.
struct KktReport {
    std::map<std::string, double> rows;
    double max_residual = 0.0;
    double complementarity_worst = 0.0;
};

KktReport kkt_residual(const Problem& pb, const std::vector<double>& w);
KktReport kkt_residual(const GridModel& model, const PrimalState& x, const DualState& d,
                       const WorkingUnits& units = {});

struct BruteForceOptions {
    double coarse_step = 0.25;  // V
    double fine_step = 0.005;   // V
    int window_steps = 2;       // coarse steps searched around the incumbent
};

struct BruteForceResult {
    PrimalState x;
    std::vector<double> V;
    double cost = 0.0;
    double cost_bound = 0.0;  // certified suboptimality of the incumbent
    double p_bound = 0.0;     // resulting bound on each |p_g - p_g*|, kW
    double resolution = 0.0;
};

BruteForceResult brute_force_solve(const GridModel& model, const BruteForceOptions& opts = {});

struct ReferenceOptions {
    WorkingUnits units;
    double tolerance = 1e-9;       // on the working rhs inf-norm
    double newton_switch = 1e-4;
    double max_flow_time = 2e5;    // s
    std::optional<std::vector<double>> start;  // working units
};

struct ReferenceSolution {
    PrimalState x;
    DualState d;
    std::vector<double> w;  // working units
    Problem problem;
    double rhs_norm = 0.0;
    double flow_time = 0.0;
    int newton_iterations = 0;
};

std::vector<double> default_start(const GridModel& model, const Problem& pb);
std::vector<double> random_start(const GridModel& model, const Problem& pb, std::uint64_t seed);

ReferenceSolution centralized_reference_solve(const GridModel& model, const ReferenceOptions& opts = {});

struct LyapunovSample {
    double t = 0.0;
    double U = 0.0;
    std::vector<std::size_t> sigma_rho;  // arcs
    bool switched = false;
};

LyapunovSample lyapunov_value(const Problem& pb, const std::vector<double>& w, const std::vector<double>& w_star);
LyapunovSample lyapunov_value(const GridModel& model, const PrimalState& x, const DualState& d,
                              const PrimalState& x_star, const DualState& d_star, const WorkingUnits& units = {});

struct ExactnessCertificate {
    bool equal_vmax = false;
    bool positive_loads = false;
    bool positive_net_generation = false;
    bool increasing_cost = false;
    bool preconditions_hold() const { return equal_vmax && positive_loads && positive_net_generation && increasing_cost; }
    std::vector<double> gap;    // A^2 per line, largest magnitude over the two directions
    std::vector<bool> exact;    // per line
};

ExactnessCertificate exactness_certificate(const GridModel& model, const PrimalState& x, double tol = 1e-6);

}  // namespace dcmg

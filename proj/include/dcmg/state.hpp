#pragma once

#include <cstddef>
#include <vector>

#include "dcmg/network.hpp"

namespace dcmg {

// Directed pairs: arc 2e is lines[e].from -> lines[e].to, arc 2e+1 the reverse.
inline std::size_t arc_of(std::size_t line, bool reverse) { return 2 * line + (reverse ? 1 : 0); }
inline std::size_t line_of(std::size_t arc) { return arc / 2; }
inline std::size_t reverse_arc(std::size_t arc) { return arc ^ 1u; }
inline std::size_t arc_src(const GridModel& m, std::size_t a) {
    return (a & 1u) ? m.lines[a / 2].to : m.lines[a / 2].from;
}
inline std::size_t arc_dst(const GridModel& m, std::size_t a) {
    return (a & 1u) ? m.lines[a / 2].from : m.lines[a / 2].to;
}

// kW, V^2, A^2 conversions. Flow v/r is V^2/ohm = W.
namespace units {
inline constexpr double watts_per_kw = 1000.0;
inline double line_loss_kw(double r_ohm, double l_a2) { return r_ohm * l_a2 / watts_per_kw; }
inline double ohm_drop_v2(double r_ohm, double p_kw) { return r_ohm * p_kw * watts_per_kw; }
inline double current_sq(double p_kw, double v_v2) {
    double pw = p_kw * watts_per_kw;
    return pw * pw / v_v2;
}
}  // namespace units

struct PrimalState {
    std::vector<double> p_g;    // kW
    std::vector<double> v;      // V^2
    std::vector<double> P;      // kW per arc
    std::vector<double> l;      // A^2 per line
    std::vector<double> p_hat;  // kW

    static PrimalState zeros(std::size_t n, std::size_t m);
    double l_of(std::size_t i, std::size_t k, const GridModel& model) const;
};

// Multipliers in natural units of the cost: mu, lambda per kW; eps, gamma per V^2; rho per A^2.
struct DualState {
    std::vector<double> mu;
    std::vector<double> eps;
    std::vector<double> lambda;
    std::vector<double> gamma;
    std::vector<double> rho;

    static DualState zeros(std::size_t n, std::size_t m);
};

struct SocpSolution {
    std::vector<double> v;    // V^2
    std::vector<double> W;    // V^2 per line
    std::vector<double> p_g;  // kW
};

void check_dims(const GridModel& model, const PrimalState& x);
void check_dims(const GridModel& model, const DualState& d);

}  // namespace dcmg

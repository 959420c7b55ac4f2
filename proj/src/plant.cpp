#include "dcmg/plant.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "dcmg/error.hpp"

namespace dcmg {

namespace {

void fill_flows(const GridModel& model, PlantState& s) {
    const auto n = model.node_count(), m = model.line_count();
    s.I.assign(2 * m, 0.0);
    s.Pflow.assign(2 * m, 0.0);
    s.inj.assign(n, 0.0);
    s.g.assign(n, 0.0);
    for (std::size_t a = 0; a < 2 * m; ++a) {
        if (!model.line_active[line_of(a)]) continue;
        std::size_t i = arc_src(model, a), k = arc_dst(model, a);
        s.I[a] = (s.V[i] - s.V[k]) / model.lines[line_of(a)].resistance;
        s.Pflow[a] = s.V[i] * s.I[a] / units::watts_per_kw;
        s.inj[i] += s.Pflow[a];
    }
    for (std::size_t i = 0; i < n; ++i) s.g[i] = model.microgrids[i].load + s.inj[i];
}

}  // namespace

PlantState solve_power_flow(const GridModel& model, const CommandSet& cmd, const PlantState& guess,
                            const PlantOptions& opts) {
    const auto n = model.node_count();
    if (cmd.size() != n) fail(ErrorKind::Argument, "command set size mismatch");
    for (const auto& comp : model.components()) {
        bool anchored = false;
        for (auto i : comp)
            if (cmd[i].mode != ControlMode::PowerControl) anchored = true;
        if (!anchored)
            fail(ErrorKind::Validation, "component containing node " + std::to_string(model.microgrids[comp[0]].id) +
                                            " has no voltage-anchoring microgrid");
    }
    PlantState s;
    s.V.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (guess.V.size() == n) {
            if (!(guess.V[i] > 0)) fail(ErrorKind::Argument, "guess voltages must be positive");
            s.V[i] = guess.V[i];
        } else {
            s.V[i] = std::sqrt(model.microgrids[i].v_star);
        }
        if (cmd[i].mode == ControlMode::VoltageControl) s.V[i] = cmd[i].v_ref;
    }
    std::vector<std::size_t> unk, pos(n, n);
    for (std::size_t i = 0; i < n; ++i)
        if (cmd[i].mode != ControlMode::VoltageControl) {
            pos[i] = unk.size();
            unk.push_back(i);
        }
    const auto u = unk.size();
    Eigen::VectorXd f(u);
    Eigen::MatrixXd J(u, u);
    auto evaluate = [&]() {
        f.setZero();
        J.setZero();
        for (std::size_t r = 0; r < u; ++r) {
            std::size_t i = unk[r];
            const auto& g = model.microgrids[i];
            double inj = 0, dinj_dvi = 0;
            for (std::size_t e = 0; e < model.line_count(); ++e) {
                if (!model.line_active[e]) continue;
                const auto& ln = model.lines[e];
                if (ln.from != i && ln.to != i) continue;
                std::size_t k = ln.from == i ? ln.to : ln.from;
                double gk = 1.0 / ln.resistance / units::watts_per_kw;
                inj += s.V[i] * (s.V[i] - s.V[k]) * gk;
                dinj_dvi += (2 * s.V[i] - s.V[k]) * gk;
                if (pos[k] < u) {
                    double dinj_dvk = -s.V[i] * gk;
                    J(r, pos[k]) += cmd[i].mode == ControlMode::PowerControl ? -dinj_dvk : g.droop_k * dinj_dvk;
                }
            }
            if (cmd[i].mode == ControlMode::PowerControl) {
                f(r) = cmd[i].p_ref - g.load - inj;
                J(r, r) += -dinj_dvi;
            } else {
                f(r) = s.V[i] * s.V[i] - (g.v_star - g.droop_k * (g.load + inj - cmd[i].p_hat_ref));
                J(r, r) += 2 * s.V[i] + g.droop_k * dinj_dvi;
            }
        }
        return u ? f.lpNorm<Eigen::Infinity>() : 0.0;
    };
    double res = evaluate();
    int it = 0;
    while (res > opts.tolerance) {
        if (it >= opts.max_iterations)
            fail(ErrorKind::NonConvergence, "power flow did not converge (residual " + std::to_string(res) + ")");
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) fail(ErrorKind::Numeric, "power flow Jacobian is singular");
        Eigen::VectorXd dx = lu.solve(-f);
        double worst = 0;
        for (std::size_t r = 0; r < u; ++r) {
            s.V[unk[r]] += dx(r);
            if (!(s.V[unk[r]] > 0)) fail(ErrorKind::NonConvergence, "power flow voltage collapsed");
            worst = std::max(worst, std::abs(dx(r)) / s.V[unk[r]]);
        }
        ++it;
        double prev = res;
        res = evaluate();
        // at rounding level the squared-voltage rows cannot improve further
        if (worst < 1e-15 && res <= 100 * opts.tolerance && res >= prev) break;
    }
    s.residual = res;
    s.iterations = it;
    fill_flows(model, s);
    return s;
}

Measurement measurements_for(const GridModel& model, const PlantState& plant, std::size_t node) {
    if (node >= model.node_count()) fail(ErrorKind::Argument, "node index out of range");
    Measurement ms;
    ms.V = plant.V[node];
    ms.g = plant.g[node];
    for (std::size_t a = 0; a < 2 * model.line_count(); ++a) {
        if (!model.line_active[line_of(a)] || arc_src(model, a) != node) continue;
        ms.arcs.push_back(a);
        ms.I.push_back(plant.I[a]);
        ms.Pflow.push_back(plant.Pflow[a]);
    }
    return ms;
}

}  // namespace dcmg

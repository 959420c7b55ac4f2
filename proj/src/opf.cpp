#include "dcmg/opf.hpp"

#include <algorithm>
#include <cmath>

#include "dcmg/error.hpp"

namespace dcmg {

PrimalState PrimalState::zeros(std::size_t n, std::size_t m) {
    return PrimalState{std::vector<double>(n), std::vector<double>(n), std::vector<double>(2 * m),
                       std::vector<double>(m), std::vector<double>(n)};
}

double PrimalState::l_of(std::size_t i, std::size_t k, const GridModel& model) const {
    for (std::size_t e = 0; e < model.lines.size(); ++e) {
        const auto& ln = model.lines[e];
        if ((ln.from == i && ln.to == k) || (ln.from == k && ln.to == i)) return l[e];
    }
    fail(ErrorKind::Argument, "no line between the given nodes");
}

DualState DualState::zeros(std::size_t n, std::size_t m) {
    return DualState{std::vector<double>(n), std::vector<double>(n), std::vector<double>(2 * m),
                     std::vector<double>(2 * m), std::vector<double>(2 * m)};
}

void check_dims(const GridModel& model, const PrimalState& x) {
    const auto n = model.node_count(), m = model.line_count();
    if (x.p_g.size() != n || x.v.size() != n || x.p_hat.size() != n || x.P.size() != 2 * m || x.l.size() != m)
        fail(ErrorKind::Argument, "primal state dimensions do not match the model");
}

void check_dims(const GridModel& model, const DualState& d) {
    const auto n = model.node_count(), m = model.line_count();
    if (d.mu.size() != n || d.eps.size() != n || d.lambda.size() != 2 * m || d.gamma.size() != 2 * m ||
        d.rho.size() != 2 * m)
        fail(ErrorKind::Argument, "dual state dimensions do not match the model");
}

namespace {

void require_positive_v(const PrimalState& x) {
    for (double v : x.v)
        if (!(v > 0)) fail(ErrorKind::Numeric, "nonpositive squared voltage");
}

}  // namespace

double objective(const GridModel& model, const PrimalState& x) {
    check_dims(model, x);
    double f = 0;
    for (std::size_t i = 0; i < model.node_count(); ++i) f += cost(model.microgrids[i], x.p_g[i]);
    return f;
}

std::vector<double> aux_y(const GridModel& model, const PrimalState& x) {
    check_dims(model, x);
    std::vector<double> y(model.node_count());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto& g = model.microgrids[i];
        y[i] = x.v[i] + g.droop_k * x.p_g[i] - g.v_star - g.droop_k * x.p_hat[i];
    }
    return y;
}

std::vector<double> aux_z(const GridModel& model, const PrimalState& x) {
    check_dims(model, x);
    std::vector<double> z(model.node_count());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x.p_g[i] - model.microgrids[i].load;
    for (std::size_t a = 0; a < 2 * model.line_count(); ++a)
        if (model.line_active[line_of(a)]) z[arc_src(model, a)] -= x.P[a];
    return z;
}

double augmented_objective(const GridModel& model, const PrimalState& x) {
    double f = objective(model, x);
    for (double y : aux_y(model, x)) f += 0.5 * y * y;
    for (double z : aux_z(model, x)) f += 0.5 * z * z;
    return f;
}

Residuals residuals(const GridModel& model, const PrimalState& x, const ResidualScales& sc) {
    check_dims(model, x);
    require_positive_v(x);
    const auto n = model.node_count(), m = model.line_count();
    Residuals r;
    r.loss.assign(m, 0.0);
    r.ohm.assign(m, 0.0);
    r.soc.assign(2 * m, 0.0);
    double worst = 0;
    for (std::size_t e = 0; e < m; ++e) {
        if (!model.line_active[e]) continue;
        const auto& ln = model.lines[e];
        double Pik = x.P[2 * e], Pki = x.P[2 * e + 1];
        r.loss[e] = Pik + Pki - units::line_loss_kw(ln.resistance, x.l[e]);
        r.ohm[e] = x.v[ln.from] - x.v[ln.to] - units::ohm_drop_v2(ln.resistance, Pik - Pki);
        r.soc[2 * e] = units::current_sq(Pik, x.v[ln.from]) - x.l[e];
        r.soc[2 * e + 1] = units::current_sq(Pki, x.v[ln.to]) - x.l[e];
        worst = std::max({worst, std::abs(r.loss[e]) / sc.power_kw, std::abs(r.ohm[e]) / sc.vsq,
                          std::max(0.0, r.soc[2 * e]) / sc.isq, std::max(0.0, r.soc[2 * e + 1]) / sc.isq});
    }
    r.vbox.resize(n);
    r.gbox.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = model.microgrids[i];
        double lo = g.v_min * g.v_min, hi = g.v_max * g.v_max;
        r.vbox[i] = std::max({0.0, lo - x.v[i], x.v[i] - hi});
        r.gbox[i] = std::max({0.0, -x.p_g[i], x.p_g[i] - g.gen_max});
        worst = std::max({worst, r.vbox[i] / sc.vsq, r.gbox[i] / sc.power_kw});
    }
    r.droop = aux_y(model, x);
    r.balance = aux_z(model, x);
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max({worst, std::abs(r.droop[i]) / sc.vsq, std::abs(r.balance[i]) / sc.power_kw});
    r.normalized_inf = worst;
    return r;
}

std::vector<double> exactness_gap_arcs(const GridModel& model, const PrimalState& x) {
    check_dims(model, x);
    require_positive_v(x);
    std::vector<double> gap(2 * model.line_count(), 0.0);
    for (std::size_t a = 0; a < gap.size(); ++a) {
        if (!model.line_active[line_of(a)]) continue;
        gap[a] = x.l[line_of(a)] - units::current_sq(x.P[a], x.v[arc_src(model, a)]);
    }
    return gap;
}

std::vector<double> exactness_gap(const GridModel& model, const PrimalState& x) {
    auto arcs = exactness_gap_arcs(model, x);
    std::vector<double> gap(model.line_count());
    for (std::size_t e = 0; e < gap.size(); ++e) gap[e] = arcs[2 * e];
    return gap;
}

bool socp_psd(double vi, double vk, double w) {
    if (vi < 0 || vk < 0) return false;
    return vi * vk - w * w >= -1e-9 * std::max(1.0, vi * vk);
}

PrimalState map_socp_to_branch(const GridModel& model, const SocpSolution& s) {
    const auto n = model.node_count(), m = model.line_count();
    if (s.v.size() != n || s.p_g.size() != n || s.W.size() != m)
        fail(ErrorKind::Argument, "SOCP solution dimensions do not match the model");
    PrimalState x = PrimalState::zeros(n, m);
    x.p_g = s.p_g;
    x.v = s.v;
    for (std::size_t e = 0; e < m; ++e) {
        const auto& ln = model.lines[e];
        double vi = s.v[ln.from], vk = s.v[ln.to], w = s.W[e];
        if (w < 0 || !socp_psd(vi, vk, w))
            fail(ErrorKind::Argument, "SOCP solution violates PSD on line " + std::to_string(e));
        double r = ln.resistance;
        x.P[2 * e] = (vi - w) / r / units::watts_per_kw;
        x.P[2 * e + 1] = (vk - w) / r / units::watts_per_kw;
        x.l[e] = (vi - 2 * w + vk) / (r * r);
    }
    return x;
}

double droop_reference_for(const GridModel& model, const PrimalState& x, std::size_t node) {
    check_dims(model, x);
    if (node >= model.node_count()) fail(ErrorKind::Argument, "node index out of range");
    const auto& g = model.microgrids[node];
    return x.p_g[node] + (x.v[node] - g.v_star) / g.droop_k;
}

}  // namespace dcmg

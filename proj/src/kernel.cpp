#include "dcmg/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "dcmg/error.hpp"

namespace dcmg {

WorkingUnits resolve_units(const GridModel& model, WorkingUnits u) {
    const auto n = model.node_count();
    if (u.power_kw <= 0) {
        double cap = 0;
        for (const auto& g : model.microgrids) cap = std::max(cap, g.gen_max);
        u.power_kw = 0.5 * cap;
    }
    if (u.vsq_v2 <= 0) {
        double mid = 0;
        for (const auto& g : model.microgrids) mid += 0.5 * (g.v_min + g.v_max);
        mid /= static_cast<double>(n);
        u.vsq_v2 = mid * mid;
    }
    if (u.phat_kw <= 0) {
        double k = 0;
        for (const auto& g : model.microgrids) k += g.droop_k;
        u.phat_kw = u.vsq_v2 / (k / static_cast<double>(n));
    }
    if (u.cost <= 0) u.cost = u.power_kw / 10.0;
    if (u.isq_factor <= 0) u.isq_factor = 1.0;
    return u;
}

Layout::Layout(std::size_t n_, std::size_t m_) : n(n_), m(m_) {
    p = 0;
    v = p + n;
    P = v + n;
    l = P + 2 * m;
    ph = l + m;
    mu = ph + n;
    eps = mu + n;
    lam = eps + n;
    gam = lam + 2 * m;
    rho = gam + 2 * m;
    size = rho + 2 * m;
}

Problem make_problem(const GridModel& model, const WorkingUnits& units) {
    const auto n = model.node_count(), m = model.line_count();
    Problem pb;
    pb.L = Layout(n, m);
    pb.units = units;
    const double S = units.power_kw, W = units.vsq_v2, Sh = units.phat_kw, C = units.cost;
    for (const auto& g : model.microgrids) {
        pb.a.push_back(g.cost_a * S * S / C);
        pb.b.push_back(g.cost_b * S / C);
        pb.pd.push_back(g.load / S);
        pb.pmax.push_back(g.gen_max / S);
        pb.vlo.push_back(g.v_min * g.v_min / W);
        pb.vhi.push_back(g.v_max * g.v_max / W);
        pb.kp.push_back(g.droop_k * S / W);
        pb.kh.push_back(g.droop_k * Sh / W);
        pb.vs.push_back(g.v_star / W);
    }
    const double Lam = units.isq_a2();
    for (std::size_t e = 0; e < m; ++e) {
        double r = model.lines[e].resistance;
        pb.r_ohm.push_back(units::watts_per_kw * r * S / W);
        pb.r_loss.push_back(r * Lam / (units::watts_per_kw * S));
        pb.active.push_back(model.line_active[e]);
    }
    pb.sigma = (units::watts_per_kw * S) * (units::watts_per_kw * S) / (W * Lam);
    pb.src.resize(2 * m);
    pb.dst.resize(2 * m);
    for (std::size_t a = 0; a < 2 * m; ++a) {
        pb.src[a] = arc_src(model, a);
        pb.dst[a] = arc_dst(model, a);
    }
    pb.out_begin.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        pb.out_begin[i] = pb.out_arcs.size();
        for (std::size_t a = 0; a < 2 * m; ++a)
            if (pb.src[a] == i && pb.active[line_of(a)]) pb.out_arcs.push_back(a);
    }
    pb.out_begin[n] = pb.out_arcs.size();
    return pb;
}

std::vector<double> to_working(const Problem& pb, const PrimalState& x, const DualState& d) {
    const auto& L = pb.L;
    const auto& u = pb.units;
    const double S = u.power_kw, W = u.vsq_v2, Sh = u.phat_kw, C = u.cost, Lam = u.isq_a2();
    std::vector<double> w(L.size, 0.0);
    for (std::size_t i = 0; i < L.n; ++i) {
        w[L.p + i] = x.p_g[i] / S;
        w[L.v + i] = x.v[i] / W;
        w[L.ph + i] = x.p_hat[i] / Sh;
        w[L.mu + i] = d.mu[i] * S / C;
        w[L.eps + i] = d.eps[i] * W / C;
    }
    for (std::size_t a = 0; a < 2 * L.m; ++a) {
        w[L.P + a] = x.P[a] / S;
        w[L.lam + a] = d.lambda[a] * S / C;
        w[L.gam + a] = d.gamma[a] * W / C;
        w[L.rho + a] = d.rho[a] * Lam / C;
    }
    for (std::size_t e = 0; e < L.m; ++e) w[L.l + e] = x.l[e] / Lam;
    return w;
}

void from_working(const Problem& pb, const std::vector<double>& w, PrimalState& x, DualState& d) {
    const auto& L = pb.L;
    const auto& u = pb.units;
    const double S = u.power_kw, W = u.vsq_v2, Sh = u.phat_kw, C = u.cost, Lam = u.isq_a2();
    x = PrimalState::zeros(L.n, L.m);
    d = DualState::zeros(L.n, L.m);
    for (std::size_t i = 0; i < L.n; ++i) {
        x.p_g[i] = w[L.p + i] * S;
        x.v[i] = w[L.v + i] * W;
        x.p_hat[i] = w[L.ph + i] * Sh;
        d.mu[i] = w[L.mu + i] * C / S;
        d.eps[i] = w[L.eps + i] * C / W;
    }
    for (std::size_t a = 0; a < 2 * L.m; ++a) {
        x.P[a] = w[L.P + a] * S;
        d.lambda[a] = w[L.lam + a] * C / S;
        d.gamma[a] = w[L.gam + a] * C / W;
        d.rho[a] = w[L.rho + a] * C / Lam;
    }
    for (std::size_t e = 0; e < L.m; ++e) x.l[e] = w[L.l + e] * Lam;
}

void exchange_from_snapshot(const Problem& pb, const double* x, Inbox& inbox) {
    const auto& L = pb.L;
    if (inbox.P_far.size() != 2 * L.m) inbox.resize(2 * L.m);
    for (std::size_t a = 0; a < 2 * L.m; ++a) {
        if (!pb.active[line_of(a)]) {
            inbox.P_far[a] = inbox.v_far[a] = inbox.rho_far[a] = 0.0;
            continue;
        }
        std::size_t r = reverse_arc(a);
        inbox.P_far[a] = x[L.P + r];
        inbox.v_far[a] = x[L.v + pb.dst[a]];
        inbox.rho_far[a] = x[L.rho + r];
    }
}

void agent_drive(const Problem& pb, const double* x, const Inbox& in, std::size_t i, double* F) {
    const auto& L = pb.L;
    const double p = x[L.p + i], v = x[L.v + i], ph = x[L.ph + i];
    const double mu = x[L.mu + i], eps = x[L.eps + i];
    if (!(v > 0)) fail(ErrorKind::Numeric, "nonpositive squared voltage at node index " + std::to_string(i));
    double flow = 0, gam_sum = 0, rho_term = 0;
    for (std::size_t k = pb.out_begin[i]; k < pb.out_begin[i + 1]; ++k) {
        std::size_t a = pb.out_arcs[k];
        double P = x[L.P + a];
        flow += P;
        gam_sum += x[L.gam + a];
        rho_term += pb.sigma * x[L.rho + a] * P * P / (v * v);
    }
    const double y = v + pb.kp[i] * p - pb.vs[i] - pb.kh[i] * ph;
    const double z = p - pb.pd[i] - flow;
    const double G = pb.a[i] * p + pb.b[i];
    F[L.p + i] = G - mu + pb.kp[i] * eps + z + pb.kp[i] * y;
    F[L.v + i] = y + gam_sum + eps - rho_term;
    F[L.ph + i] = -(pb.kh[i] * eps + pb.kh[i] * y);
    F[L.mu + i] = z;
    F[L.eps + i] = -y;
    for (std::size_t k = pb.out_begin[i]; k < pb.out_begin[i + 1]; ++k) {
        std::size_t a = pb.out_arcs[k], e = line_of(a);
        double P = x[L.P + a], lam = x[L.lam + a], gam = x[L.gam + a], rho = x[L.rho + a];
        double l = x[L.l + e];
        double ro = pb.r_ohm[e], rl = pb.r_loss[e];
        F[L.P + a] = mu + lam - gam * ro + 2 * pb.sigma * rho * P / v - z;
        F[L.lam + a] = -(P + in.P_far[a] - rl * l);
        F[L.gam + a] = -(v - in.v_far[a] - ro * (P - in.P_far[a]));
        double soc = pb.sigma * P * P / v - l;
        F[L.rho + a] = (rho > 0 || soc > 0) ? -soc : 0.0;
        if ((a & 1u) == 0) F[L.l + e] = -(rl * lam + rho + in.rho_far[a]);
    }
}

namespace {

inline double clampd(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

}  // namespace

void agent_rhs(const Problem& pb, const double* x, const Inbox& in, std::size_t i, double* out) {
    const auto& L = pb.L;
    agent_drive(pb, x, in, i, out);
    out[L.p + i] = clampd(x[L.p + i] - out[L.p + i], 0.0, pb.pmax[i]) - x[L.p + i];
    out[L.v + i] = clampd(x[L.v + i] - out[L.v + i], pb.vlo[i], pb.vhi[i]) - x[L.v + i];
    for (std::size_t idx : {L.ph + i, L.mu + i, L.eps + i}) out[idx] = -out[idx];
    for (std::size_t k = pb.out_begin[i]; k < pb.out_begin[i + 1]; ++k) {
        std::size_t a = pb.out_arcs[k];
        out[L.P + a] = -out[L.P + a];
        out[L.lam + a] = -out[L.lam + a];
        out[L.gam + a] = -out[L.gam + a];
        out[L.rho + a] = -out[L.rho + a];
        if ((a & 1u) == 0) out[L.l + line_of(a)] = -out[L.l + line_of(a)];
    }
}

std::vector<std::size_t> owned_coordinates(const Problem& pb, std::size_t i) {
    const auto& L = pb.L;
    std::vector<std::size_t> c{L.p + i, L.v + i, L.ph + i, L.mu + i, L.eps + i};
    for (std::size_t k = pb.out_begin[i]; k < pb.out_begin[i + 1]; ++k) {
        std::size_t a = pb.out_arcs[k];
        for (std::size_t base : {L.P, L.lam, L.gam, L.rho}) c.push_back(base + a);
        if ((a & 1u) == 0) c.push_back(L.l + line_of(a));
    }
    return c;
}

void drive(const Problem& pb, const double* x, const Inbox& in, double* F) {
    std::fill(F, F + pb.L.size, 0.0);
    for (std::size_t i = 0; i < pb.L.n; ++i) agent_drive(pb, x, in, i, F);
}

void drive_to_rhs(const Problem& pb, const double* x, const double* F, double* out) {
    const auto& L = pb.L;
    for (std::size_t j = 0; j < L.size; ++j) out[j] = -F[j];
    for (std::size_t i = 0; i < L.n; ++i) {
        out[L.p + i] = clampd(x[L.p + i] - F[L.p + i], 0.0, pb.pmax[i]) - x[L.p + i];
        out[L.v + i] = clampd(x[L.v + i] - F[L.v + i], pb.vlo[i], pb.vhi[i]) - x[L.v + i];
    }
}

std::vector<double> full_drive(const Problem& pb, const std::vector<double>& x) {
    Inbox in;
    in.resize(2 * pb.L.m);
    exchange_from_snapshot(pb, x.data(), in);
    std::vector<double> F(pb.L.size);
    drive(pb, x.data(), in, F.data());
    return F;
}

std::vector<double> full_rhs(const Problem& pb, const std::vector<double>& x) {
    auto F = full_drive(pb, x);
    std::vector<double> out(pb.L.size);
    drive_to_rhs(pb, x.data(), F.data(), out.data());
    return out;
}

void project_state(const Problem& pb, double* x) {
    const auto& L = pb.L;
    for (std::size_t i = 0; i < L.n; ++i) {
        x[L.p + i] = clampd(x[L.p + i], 0.0, pb.pmax[i]);
        x[L.v + i] = clampd(x[L.v + i], pb.vlo[i], pb.vhi[i]);
    }
    for (std::size_t a = 0; a < 2 * L.m; ++a) x[L.rho + a] = std::max(0.0, x[L.rho + a]);
}

double inf_norm(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace dcmg

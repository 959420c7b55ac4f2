#include "dcmg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "dcmg/error.hpp"
#include "dcmg/opf.hpp"

namespace dcmg {

namespace {

inline double clampd(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

void bump(KktReport& r, const char* key, double v) {
    auto& slot = r.rows[key];
    slot = std::max(slot, std::abs(v));
}

}  // namespace

KktReport kkt_residual(const Problem& pb, const std::vector<double>& w) {
    const auto& L = pb.L;
    if (w.size() != L.size) fail(ErrorKind::Argument, "state size mismatch");
    auto F = full_drive(pb, w);
    KktReport r;
    for (const char* k : {"stationarity_p", "stationarity_v", "stationarity_P", "stationarity_l", "stationarity_p_hat",
                          "balance", "droop", "loss", "ohm", "soc_feasibility", "rho_sign", "complementarity"})
        r.rows[k] = 0.0;
    for (std::size_t i = 0; i < L.n; ++i) {
        double p = w[L.p + i], v = w[L.v + i];
        bump(r, "stationarity_p", p - clampd(p - F[L.p + i], 0.0, pb.pmax[i]));
        bump(r, "stationarity_v", v - clampd(v - F[L.v + i], pb.vlo[i], pb.vhi[i]));
        bump(r, "stationarity_p_hat", F[L.ph + i]);
        bump(r, "balance", F[L.mu + i]);
        bump(r, "droop", F[L.eps + i]);
    }
    for (std::size_t a = 0; a < 2 * L.m; ++a) {
        std::size_t e = line_of(a);
        if (!pb.active[e]) continue;
        std::size_t i = pb.src[a];
        bump(r, "stationarity_P", F[L.P + a]);
        // both directed copies of the line multiplier must be stationary in l
        bump(r, "stationarity_l", pb.r_loss[e] * w[L.lam + a] + w[L.rho + a] + w[L.rho + reverse_arc(a)]);
        bump(r, "loss", F[L.lam + a]);
        bump(r, "ohm", F[L.gam + a]);
        double soc = pb.sigma * w[L.P + a] * w[L.P + a] / w[L.v + i] - w[L.l + e];
        double rho = w[L.rho + a];
        bump(r, "soc_feasibility", std::max(0.0, soc));
        bump(r, "rho_sign", std::max(0.0, -rho));
        bump(r, "complementarity", rho * soc);
        r.complementarity_worst = std::max(r.complementarity_worst, std::abs(rho * soc));
    }
    for (const auto& [k, v] : r.rows) r.max_residual = std::max(r.max_residual, v);
    return r;
}

KktReport kkt_residual(const GridModel& model, const PrimalState& x, const DualState& d, const WorkingUnits& units) {
    check_dims(model, x);
    check_dims(model, d);
    for (double v : x.v)
        if (!(v > 0)) fail(ErrorKind::Numeric, "nonpositive squared voltage");
    auto pb = make_problem(model, resolve_units(model, units));
    return kkt_residual(pb, to_working(pb, x, d));
}

namespace {

struct GridEval {
    const GridModel& model;
    std::vector<std::pair<std::size_t, double>> nb;  // flattened (k, 1/r) per node
    std::vector<std::size_t> begin;

    explicit GridEval(const GridModel& m) : model(m) {
        begin.push_back(0);
        for (std::size_t i = 0; i < m.node_count(); ++i) {
            for (std::size_t e = 0; e < m.line_count(); ++e) {
                if (!m.line_active[e]) continue;
                const auto& ln = m.lines[e];
                if (ln.from == i) nb.emplace_back(ln.to, 1.0 / ln.resistance);
                if (ln.to == i) nb.emplace_back(ln.from, 1.0 / ln.resistance);
            }
            begin.push_back(nb.size());
        }
    }

    // cost of the physical operating point at V, or +inf if outside the generation box
    double operator()(const double* V, double* p = nullptr) const {
        double f = 0;
        for (std::size_t i = 0; i < model.node_count(); ++i) {
            double inj = 0;
            for (std::size_t j = begin[i]; j < begin[i + 1]; ++j) inj += (V[i] - V[nb[j].first]) * nb[j].second;
            const auto& g = model.microgrids[i];
            double pg = g.load + V[i] * inj / units::watts_per_kw;
            if (pg < 0 || pg > g.gen_max) return std::numeric_limits<double>::infinity();
            if (p) p[i] = pg;
            f += cost(g, pg);
        }
        return f;
    }
};

std::vector<double> axis(double lo, double hi, double step) {
    std::vector<double> out;
    long count = std::lround(std::floor((hi - lo) / step + 1e-9));
    for (long s = 0; s <= count; ++s) out.push_back(lo + static_cast<double>(s) * step);
    if (hi - out.back() > 1e-12) out.push_back(hi);
    return out;
}

}  // namespace

BruteForceResult brute_force_solve(const GridModel& model, const BruteForceOptions& opts) {
    const auto n = model.node_count();
    if (n == 0 || n > 3) fail(ErrorKind::Argument, "brute force solve supports at most 3 nodes");
    GridEval eval(model);
    std::vector<std::vector<double>> axes(n);
    for (std::size_t i = 0; i < n; ++i)
        axes[i] = axis(model.microgrids[i].v_min, model.microgrids[i].v_max, opts.coarse_step);

    auto search = [&](const std::vector<std::vector<double>>& ax, std::vector<double>& best_v) {
        double best = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> idx(n, 0);
        std::vector<double> V(n);
        for (;;) {
            for (std::size_t i = 0; i < n; ++i) V[i] = ax[i][idx[i]];
            double f = eval(V.data());
            if (f < best) {
                best = f;
                best_v = V;
            }
            std::size_t d = 0;
            while (d < n && ++idx[d] == ax[d].size()) idx[d++] = 0;
            if (d == n) break;
        }
        return best;
    };

    std::vector<double> Vc;
    double fc = search(axes, Vc);
    if (!std::isfinite(fc)) fail(ErrorKind::Validation, "instance is infeasible: no grid point meets the limits");
    std::vector<std::vector<double>> fine(n);
    double half = opts.window_steps * opts.coarse_step;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = model.microgrids[i];
        fine[i] = axis(std::max(g.v_min, Vc[i] - half), std::min(g.v_max, Vc[i] + half), opts.fine_step);
    }
    BruteForceResult res;
    res.cost = search(fine, res.V);
    res.resolution = opts.fine_step;

    // local Lipschitz constant of the cost in V (1-norm of the gradient), sampled
    // at the incumbent and the corners of one fine cell around it
    double lip = 0;
    std::vector<double> p(n);
    for (int corner = 0; corner < (1 << n); ++corner) {
        std::vector<double> Vs = res.V;
        for (std::size_t i = 0; i < n; ++i) Vs[i] += ((corner >> i) & 1 ? 0.5 : -0.5) * opts.fine_step;
        double g1 = 0;
        for (std::size_t j = 0; j < n; ++j) {
            double hstep = 1e-6;
            std::vector<double> a = Vs, b = Vs;
            a[j] += hstep;
            b[j] -= hstep;
            double fa = 0, fb = 0;
            // gradient of the unconstrained cost expression
            for (std::size_t i = 0; i < n; ++i) {
                double ia = 0, ib = 0;
                for (std::size_t q = eval.begin[i]; q < eval.begin[i + 1]; ++q) {
                    ia += (a[i] - a[eval.nb[q].first]) * eval.nb[q].second;
                    ib += (b[i] - b[eval.nb[q].first]) * eval.nb[q].second;
                }
                const auto& g = model.microgrids[i];
                fa += cost(g, g.load + a[i] * ia / units::watts_per_kw);
                fb += cost(g, g.load + b[i] * ib / units::watts_per_kw);
            }
            g1 += std::abs(fa - fb) / (2 * hstep);
        }
        lip = std::max(lip, g1);
    }
    res.cost_bound = lip * opts.fine_step;
    double alpha = std::numeric_limits<double>::infinity();
    for (const auto& g : model.microgrids) alpha = std::min(alpha, g.cost_a);
    res.p_bound = std::sqrt(2.0 * res.cost_bound / alpha);

    const auto m = model.line_count();
    res.x = PrimalState::zeros(n, m);
    eval(res.V.data(), res.x.p_g.data());
    for (std::size_t i = 0; i < n; ++i) res.x.v[i] = res.V[i] * res.V[i];
    for (std::size_t a = 0; a < 2 * m; ++a) {
        if (!model.line_active[line_of(a)]) continue;
        std::size_t i = arc_src(model, a), k = arc_dst(model, a);
        double I = (res.V[i] - res.V[k]) / model.lines[line_of(a)].resistance;
        res.x.P[a] = res.V[i] * I / units::watts_per_kw;
        if ((a & 1u) == 0) res.x.l[line_of(a)] = I * I;
    }
    for (std::size_t i = 0; i < n; ++i) res.x.p_hat[i] = droop_reference_for(model, res.x, i);
    return res;
}

std::vector<double> default_start(const GridModel& model, const Problem& pb) {
    const auto n = model.node_count(), m = model.line_count();
    PrimalState x = PrimalState::zeros(n, m);
    DualState d = DualState::zeros(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = model.microgrids[i];
        x.p_g[i] = g.p_init ? *g.p_init : std::min(g.load, g.gen_max);
        x.v[i] = g.v_init ? *g.v_init : clampd(g.v_star, g.v_min * g.v_min, g.v_max * g.v_max);
        x.p_hat[i] = x.p_g[i];
    }
    return to_working(pb, x, d);
}

std::vector<double> random_start(const GridModel& model, const Problem& pb, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto w = default_start(model, pb);
    const auto& L = pb.L;
    for (std::size_t i = 0; i < L.n; ++i) {
        w[L.p + i] = pb.pmax[i] * u01(rng);
        w[L.v + i] = pb.vlo[i] + (pb.vhi[i] - pb.vlo[i]) * u01(rng);
        w[L.ph + i] = w[L.p + i] * pb.units.power_kw / pb.units.phat_kw;
    }
    return w;
}

namespace {

void rk4_step(const Problem& pb, std::vector<double>& x, double h) {
    const auto N = x.size();
    auto k1 = full_rhs(pb, x);
    std::vector<double> t(N);
    auto stage = [&](const std::vector<double>& k, double c) {
        for (std::size_t j = 0; j < N; ++j) t[j] = x[j] + c * k[j];
        project_state(pb, t.data());
        return full_rhs(pb, t);
    };
    auto k2 = stage(k1, 0.5 * h);
    auto k3 = stage(k2, 0.5 * h);
    auto k4 = stage(k3, h);
    for (std::size_t j = 0; j < N; ++j) x[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    project_state(pb, x.data());
}

// Step-doubling control on the projected flow.
double flow(const Problem& pb, std::vector<double>& x, double target, double max_time, double& h) {
    double t = 0;
    double norm = inf_norm(full_rhs(pb, x));
    while (norm > target && t < max_time) {
        auto big = x, small = x;
        rk4_step(pb, big, h);
        rk4_step(pb, small, 0.5 * h);
        rk4_step(pb, small, 0.5 * h);
        double err = 0, scale = 1;
        for (std::size_t j = 0; j < x.size(); ++j) {
            err = std::max(err, std::abs(big[j] - small[j]));
            scale = std::max(scale, std::abs(small[j]));
        }
        if (!std::isfinite(err)) fail(ErrorKind::Divergence, "reference flow diverged");
        if (err <= 1e-8 * scale) {
            x.swap(small);
            t += h;
            norm = inf_norm(full_rhs(pb, x));
            if (err < 1e-10 * scale) h = std::min(h * 1.5, 0.5);
        } else {
            h *= 0.5;
            if (h < 1e-9) fail(ErrorKind::NonConvergence, "reference flow step size underflow");
        }
    }
    return t;
}

// Reduced coordinates: one lambda and one gamma per line, so the directed
// copies stay symmetric; arcs of inactive lines stay at zero.
Eigen::MatrixXd reduced_basis(const Problem& pb) {
    const auto& L = pb.L;
    std::vector<std::vector<std::pair<std::size_t, double>>> cols;
    auto inactive_arc = [&](std::size_t j, std::size_t base) { return !pb.active[line_of(j - base)]; };
    for (std::size_t j = 0; j < L.size; ++j) {
        if (j >= L.P && j < L.P + 2 * L.m && inactive_arc(j, L.P)) continue;
        if (j >= L.l && j < L.l + L.m && !pb.active[j - L.l]) continue;
        if (j >= L.rho && inactive_arc(j, L.rho)) continue;
        if (j >= L.lam && j < L.rho) {
            bool gam = j >= L.gam;
            std::size_t a = j - (gam ? L.gam : L.lam);
            if (!pb.active[line_of(a)] || (a & 1u)) continue;
            cols.push_back({{j, 1.0}, {j + 1, gam ? -1.0 : 1.0}});
            continue;
        }
        cols.push_back({{j, 1.0}});
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L.size), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (auto [j, v] : cols[c]) B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = v;
    return B;
}

bool newton_polish(const Problem& pb, std::vector<double>& x, double tol, int& iters) {
    const auto N = x.size();
    const Eigen::MatrixXd B = reduced_basis(pb);
    const auto R = B.cols();
    double norm = inf_norm(full_rhs(pb, x));
    for (int k = 0; k < 20 && norm > tol; ++k) {
        auto r0 = full_rhs(pb, x);
        Eigen::MatrixXd J(static_cast<Eigen::Index>(N), R);
        for (Eigen::Index c = 0; c < R; ++c) {
            double scale = 1.0;
            for (std::size_t j = 0; j < N; ++j)
                if (B(static_cast<Eigen::Index>(j), c) != 0.0) scale = std::max(scale, std::abs(x[j]));
            double hs = 1e-7 * scale;
            auto a = x, b = x;
            for (std::size_t j = 0; j < N; ++j) {
                a[j] += hs * B(static_cast<Eigen::Index>(j), c);
                b[j] -= hs * B(static_cast<Eigen::Index>(j), c);
            }
            auto ra = full_rhs(pb, a), rb = full_rhs(pb, b);
            for (std::size_t i = 0; i < N; ++i) J(static_cast<Eigen::Index>(i), c) = (ra[i] - rb[i]) / (2 * hs);
        }
        Eigen::VectorXd f = Eigen::Map<Eigen::VectorXd>(r0.data(), static_cast<Eigen::Index>(N));
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J.rows(), J.cols());
        // threshold has to be in place before the factorization
        cod.setThreshold(1e-10);
        cod.compute(J);
        Eigen::VectorXd dx = B * cod.solve(-f);
        auto trial = x;
        for (std::size_t j = 0; j < N; ++j) trial[j] += dx(static_cast<Eigen::Index>(j));
        project_state(pb, trial.data());
        double tn = inf_norm(full_rhs(pb, trial));
        ++iters;
        if (!(tn < norm)) return false;
        x.swap(trial);
        norm = tn;
    }
    return norm <= tol;
}

}  // namespace

ReferenceSolution centralized_reference_solve(const GridModel& model, const ReferenceOptions& opts) {
    ReferenceSolution out;
    out.problem = make_problem(model, resolve_units(model, opts.units));
    const auto& pb = out.problem;
    std::vector<double> x = opts.start ? *opts.start : default_start(model, pb);
    if (x.size() != pb.L.size) fail(ErrorKind::Argument, "start vector size mismatch");
    project_state(pb, x.data());
    double h = 0.05, elapsed = 0, target = opts.newton_switch;
    for (;;) {
        elapsed += flow(pb, x, target, opts.max_flow_time - elapsed, h);
        double norm = inf_norm(full_rhs(pb, x));
        if (norm <= opts.tolerance) break;
        auto trial = x;
        if (newton_polish(pb, trial, opts.tolerance, out.newton_iterations)) {
            x.swap(trial);
            break;
        }
        if (elapsed >= opts.max_flow_time) {
            if (norm <= opts.tolerance) break;
            fail(ErrorKind::NonConvergence, "reference solve did not reach the tolerance (rhs " + std::to_string(norm) + ")");
        }
        target = std::max(opts.tolerance, norm * 0.1);
    }
    out.w = x;
    out.rhs_norm = inf_norm(full_rhs(pb, x));
    out.flow_time = elapsed;
    from_working(pb, x, out.x, out.d);
    return out;
}

LyapunovSample lyapunov_value(const Problem& pb, const std::vector<double>& w, const std::vector<double>& ws) {
    const auto& L = pb.L;
    if (w.size() != L.size || ws.size() != L.size) fail(ErrorKind::Argument, "state size mismatch");
    auto F = full_drive(pb, w);
    LyapunovSample s;
    for (std::size_t a = 0; a < 2 * L.m; ++a) {
        if (!pb.active[line_of(a)]) continue;
        double soc = pb.sigma * w[L.P + a] * w[L.P + a] / w[L.v + pb.src[a]] - w[L.l + line_of(a)];
        if (w[L.rho + a] < 1e-12 && soc < -1e-12) {
            s.sigma_rho.push_back(a);
            F[L.rho + a] = 0.0;
        } else {
            F[L.rho + a] = -soc;
        }
    }
    double U = 0;
    for (std::size_t j = 0; j < L.size; ++j) {
        double H = w[j] - F[j];
        if (j >= L.p && j < L.p + L.n) H = clampd(H, 0.0, pb.pmax[j - L.p]);
        if (j >= L.v && j < L.v + L.n) H = clampd(H, pb.vlo[j - L.v], pb.vhi[j - L.v]);
        double dH = H - w[j];
        double dx = w[j] - ws[j];
        // lambda and gamma are one multiplier per line held as two directed copies
        double wt = (j >= L.lam && j < L.rho) ? 0.5 : 1.0;
        U += wt * (-F[j] * dH - 0.5 * dH * dH + 0.5 * dx * dx);
    }
    s.U = U;
    return s;
}

LyapunovSample lyapunov_value(const GridModel& model, const PrimalState& x, const DualState& d,
                              const PrimalState& x_star, const DualState& d_star, const WorkingUnits& units) {
    auto pb = make_problem(model, resolve_units(model, units));
    for (double v : x.v)
        if (!(v > 0)) fail(ErrorKind::Numeric, "nonpositive squared voltage");
    return lyapunov_value(pb, to_working(pb, x, d), to_working(pb, x_star, d_star));
}

ExactnessCertificate exactness_certificate(const GridModel& model, const PrimalState& x, double tol) {
    ExactnessCertificate c;
    c.equal_vmax = true;
    c.positive_loads = true;
    c.increasing_cost = true;
    for (const auto& g : model.microgrids) {
        if (g.v_max != model.microgrids.front().v_max) c.equal_vmax = false;
        if (!(g.load > 0)) c.positive_loads = false;
        if (!(g.cost_a > 0 && g.cost_b >= 0)) c.increasing_cost = false;
    }
    c.positive_net_generation = true;
    for (const auto& comp : model.components()) {
        double net = 0;
        for (auto i : comp) net += model.microgrids[i].gen_max - model.microgrids[i].load;
        if (comp.size() > 1 ? !(net > 0) : !(net >= 0)) c.positive_net_generation = false;
    }
    auto arcs = exactness_gap_arcs(model, x);
    c.gap.assign(model.line_count(), 0.0);
    c.exact.assign(model.line_count(), true);
    for (std::size_t e = 0; e < model.line_count(); ++e) {
        double g = std::abs(arcs[2 * e]) >= std::abs(arcs[2 * e + 1]) ? arcs[2 * e] : arcs[2 * e + 1];
        c.gap[e] = g;
        c.exact[e] = std::abs(g) <= tol;
    }
    return c;
}

}  // namespace dcmg

#include "dcmg/dynamics.hpp"

#include <algorithm>
#include <barrier>
#include <cmath>
#include <functional>
#include <thread>

#include "dcmg/error.hpp"

namespace dcmg {

double clamp(double x, double a, double b) {
    if (a > b) fail(ErrorKind::Argument, "clamp bounds are inverted");
    return std::min(b, std::max(a, x));
}

double positive_projection(double x, double a) { return (a > 0 || x > 0) ? x : 0.0; }

Integrator parse_integrator(const std::string& s) {
    if (s == "euler") return Integrator::Euler;
    if (s == "rk4") return Integrator::RK4;
    fail(ErrorKind::Argument, "unknown integrator '" + s + "'");
}

EngineKind parse_engine(const std::string& s) {
    if (s == "serial") return EngineKind::Serial;
    if (s == "parallel") return EngineKind::Parallel;
    fail(ErrorKind::Argument, "unknown engine '" + s + "'");
}

NeighborInfo parse_neighbor_info(const std::string& s) {
    if (s == "exchange") return NeighborInfo::Exchange;
    if (s == "measured") return NeighborInfo::Measured;
    fail(ErrorKind::Argument, "unknown neighbor information mode '" + s + "'");
}

StateRate rhs(const GridModel& model, const PrimalState& x, const DualState& d, const WorkingUnits& units) {
    check_dims(model, x);
    check_dims(model, d);
    auto pb = make_problem(model, resolve_units(model, units));
    auto w = to_working(pb, x, d);
    auto r = full_rhs(pb, w);
    StateRate out;
    from_working(pb, r, out.dx, out.dd);
    return out;
}

void step(const GridModel& model, PrimalState& x, DualState& d, double h, const WorkingUnits& units) {
    if (!(h > 0)) fail(ErrorKind::Argument, "step size must be positive");
    check_dims(model, x);
    check_dims(model, d);
    auto pb = make_problem(model, resolve_units(model, units));
    auto w = to_working(pb, x, d);
    auto r = full_rhs(pb, w);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += h * r[j];
    project_state(pb, w.data());
    for (double v : w)
        if (!std::isfinite(v)) fail(ErrorKind::Divergence, "state became nonfinite");
    from_working(pb, w, x, d);
}

NeighborEstimate estimate_neighbor(const GridModel& model, const AgentView& view, std::size_t k) {
    if (!(view.v > 0)) fail(ErrorKind::Numeric, "nonpositive squared voltage");
    for (std::size_t j = 0; j < view.arcs.size(); ++j) {
        std::size_t a = view.arcs[j];
        if (arc_dst(model, a) != k) continue;
        double r = model.lines[line_of(a)].resistance;
        double I = view.I[j];
        NeighborEstimate est;
        est.P_far = units::line_loss_kw(r, I * I) - view.P[j];
        double vk = std::sqrt(view.v) - r * I;
        est.v_far = vk * vk;
        return est;
    }
    fail(ErrorKind::Argument, "node is not a neighbor");
}

std::vector<AgentView> make_agent_views(const GridModel& model, const PrimalState& x) {
    std::vector<AgentView> views(model.node_count());
    for (std::size_t i = 0; i < views.size(); ++i) {
        views[i].node = i;
        views[i].v = x.v[i];
    }
    for (std::size_t a = 0; a < 2 * model.line_count(); ++a) {
        if (!model.line_active[line_of(a)]) continue;
        auto& v = views[arc_src(model, a)];
        v.arcs.push_back(a);
        v.P.push_back(x.P[a]);
        v.I.push_back(0.0);
        v.rho_in.push_back(0.0);
    }
    return views;
}

void exchange_messages(const GridModel& model, const DualState& d, std::vector<AgentView>& agents) {
    for (auto& ag : agents) {
        ag.rho_in.resize(ag.arcs.size());
        for (std::size_t j = 0; j < ag.arcs.size(); ++j) ag.rho_in[j] = d.rho[reverse_arc(ag.arcs[j])];
    }
    (void)model;
}

CommandSet emit_commands(const GridModel& model, const PrimalState& x) {
    check_dims(model, x);
    CommandSet cmds(model.node_count());
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        cmds[i].mode = model.microgrids[i].mode;
        switch (cmds[i].mode) {
        case ControlMode::PowerControl: cmds[i].p_ref = x.p_g[i]; break;
        case ControlMode::VoltageControl: cmds[i].v_ref = std::sqrt(x.v[i]); break;
        case ControlMode::DroopControl: cmds[i].p_hat_ref = x.p_hat[i]; break;
        }
    }
    return cmds;
}

// Fixed set of threads released once per evaluation. Each agent is always
// computed by the same code path, so results match the serial loop bit for bit.
class WorkerPool {
public:
    WorkerPool(unsigned threads, std::size_t agents) : agents_(agents), start_(threads + 1), done_(threads + 1) {
        for (unsigned t = 0; t < threads; ++t)
            workers_.emplace_back([this, t, threads] {
                for (;;) {
                    start_.arrive_and_wait();
                    if (stop_) return;
                    std::size_t lo = agents_ * t / threads, hi = agents_ * (t + 1) / threads;
                    job_(lo, hi);
                    done_.arrive_and_wait();
                }
            });
    }
    ~WorkerPool() {
        stop_ = true;
        start_.arrive_and_wait();
        for (auto& w : workers_) w.join();
    }
    void run(const std::function<void(std::size_t, std::size_t)>& job) {
        job_ = job;
        start_.arrive_and_wait();
        done_.arrive_and_wait();
    }

private:
    std::size_t agents_;
    std::barrier<> start_, done_;
    std::function<void(std::size_t, std::size_t)> job_;
    bool stop_ = false;
    std::vector<std::thread> workers_;
};

Engine::Engine(const GridModel& model, const EngineOptions& opts) : model_(model), opts_(opts) {
    opts_.units = resolve_units(model, opts.units);
    pb_ = make_problem(model_, opts_.units);
    x_.assign(pb_.L.size, 0.0);
    inbox_.resize(2 * pb_.L.m);
    I_meas_.assign(2 * pb_.L.m, 0.0);
    if (opts_.kind == EngineKind::Parallel) {
        unsigned t = opts_.threads ? opts_.threads : std::max(2u, std::thread::hardware_concurrency());
        t = static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(1, pb_.L.n)));
        pool_ = std::make_unique<WorkerPool>(t, pb_.L.n);
    }
}

Engine::~Engine() = default;

void Engine::set_state(std::vector<double> w) {
    if (w.size() != pb_.L.size) fail(ErrorKind::Argument, "state size mismatch");
    x_ = std::move(w);
}

void Engine::set_state(const PrimalState& x, const DualState& d) {
    check_dims(model_, x);
    check_dims(model_, d);
    x_ = to_working(pb_, x, d);
}

void Engine::get_state(PrimalState& x, DualState& d) const { from_working(pb_, x_, x, d); }

void Engine::rebuild(const GridModel& model) {
    if (model.node_count() != model_.node_count() || model.line_count() != model_.line_count())
        fail(ErrorKind::Argument, "rebuild cannot change the model dimensions");
    model_ = model;
    pb_ = make_problem(model_, opts_.units);
    const auto& L = pb_.L;
    for (std::size_t e = 0; e < L.m; ++e) {
        if (pb_.active[e]) continue;
        x_[L.l + e] = 0.0;
        for (std::size_t a : {2 * e, 2 * e + 1})
            for (std::size_t base : {L.P, L.lam, L.gam, L.rho}) x_[base + a] = 0.0;
    }
    project_state(pb_, x_.data());
    if (pool_) {
        unsigned t = opts_.threads ? opts_.threads : std::max(2u, std::thread::hardware_concurrency());
        t = static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(1, pb_.L.n)));
        pool_ = std::make_unique<WorkerPool>(t, pb_.L.n);
    }
}

void Engine::set_measured_currents(const std::vector<double>& I) {
    if (I.size() != I_meas_.size()) fail(ErrorKind::Argument, "current vector size mismatch");
    I_meas_ = I;
}

void Engine::fill_inbox(const double* x, Inbox& in) const {
    exchange_from_snapshot(pb_, x, in);
    if (opts_.neighbor != NeighborInfo::Measured) return;
    const auto& L = pb_.L;
    const auto& u = opts_.units;
    for (std::size_t a = 0; a < 2 * L.m; ++a) {
        if (!pb_.active[line_of(a)]) continue;
        double r = model_.lines[line_of(a)].resistance;
        double I = I_meas_[a];
        double Pik = x[L.P + a] * u.power_kw;
        double vi = x[L.v + pb_.src[a]] * u.vsq_v2;
        in.P_far[a] = (units::line_loss_kw(r, I * I) - Pik) / u.power_kw;
        double vk = std::sqrt(vi) - r * I;
        in.v_far[a] = vk * vk / u.vsq_v2;
    }
}

void Engine::eval(const double* x, double* out) {
    fill_inbox(x, inbox_);
    std::fill(out, out + pb_.L.size, 0.0);
    if (pool_) {
        pool_->run([&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) agent_rhs(pb_, x, inbox_, i, out);
        });
    } else {
        for (std::size_t i = 0; i < pb_.L.n; ++i) agent_rhs(pb_, x, inbox_, i, out);
    }
}

std::vector<double> Engine::current_rhs() {
    std::vector<double> r(pb_.L.size);
    eval(x_.data(), r.data());
    return r;
}

double Engine::advance(double h) {
    if (!(h > 0)) fail(ErrorKind::Argument, "step size must be positive");
    const std::size_t N = pb_.L.size;
    k1_.resize(N);
    eval(x_.data(), k1_.data());
    double norm = 0;
    for (double v : k1_) norm = std::max(norm, std::abs(v));
    if (opts_.integrator == Integrator::Euler) {
        for (std::size_t j = 0; j < N; ++j) x_[j] += h * k1_[j];
    } else {
        k2_.resize(N);
        k3_.resize(N);
        k4_.resize(N);
        tmp_.resize(N);
        auto stage = [&](const std::vector<double>& k, double c, std::vector<double>& dst) {
            for (std::size_t j = 0; j < N; ++j) tmp_[j] = x_[j] + c * k[j];
            project_state(pb_, tmp_.data());
            eval(tmp_.data(), dst.data());
        };
        stage(k1_, 0.5 * h, k2_);
        stage(k2_, 0.5 * h, k3_);
        stage(k3_, h, k4_);
        for (std::size_t j = 0; j < N; ++j) x_[j] += h / 6.0 * (k1_[j] + 2 * k2_[j] + 2 * k3_[j] + k4_[j]);
    }
    project_state(pb_, x_.data());
    for (double v : x_)
        if (!std::isfinite(v) || std::abs(v) > opts_.divergence_limit)
            fail(ErrorKind::Divergence, "state diverged; reduce the step size");
    return norm;
}

}  // namespace dcmg

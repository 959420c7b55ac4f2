#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dcmg/dynamics.hpp"
#include "dcmg/error.hpp"
#include "dcmg/kernel.hpp"
#include "dcmg/opf.hpp"
#include "dcmg/oracle.hpp"
#include "dcmg/plant.hpp"
#include "support.hpp"

using namespace dcmg;

namespace {

GridModel single_droop_node() {
    return parse_config(R"({"microgrids": [{"id": 1, "cost_a": 0.03, "cost_b": 1, "load_kw": 20,
        "gen_max_kw": 40, "v_min_volts": 380, "v_max_volts": 420, "mode": "droop"}]})");
}

GridModel six_node_path() {
    auto m = testing::table1();
    m.lines.clear();
    for (std::size_t i = 0; i + 1 < 6; ++i) m.lines.push_back(Line{i, i + 1, 0.25});
    m.line_active.assign(5, true);
    m.rebuild_adjacency();
    validate(m);
    return m;
}

}  // namespace

TEST_CASE("projections") {
    CHECK(clamp(5, 0, 10) == 5);
    CHECK(clamp(-3, 0, 10) == 0);
    CHECK(clamp(99, 0, 10) == 10);
    CHECK_THROWS_AS(clamp(1, 2, 0), Error);
    CHECK(positive_projection(-2, 0) == 0);
    CHECK(positive_projection(-2, 1) == -2);
    CHECK(positive_projection(3, 0) == 3);
}

TEST_CASE("parsers") {
    CHECK(parse_integrator("rk4") == Integrator::RK4);
    CHECK(parse_integrator("euler") == Integrator::Euler);
    CHECK(parse_engine("parallel") == EngineKind::Parallel);
    CHECK(parse_neighbor_info("measured") == NeighborInfo::Measured);
    CHECK_THROWS_AS(parse_integrator("leapfrog"), Error);
}

TEST_CASE("rhs vanishes at a KKT point") {
    for (const char* name : {"two_node_asym", "three_node_mesh"}) {
        auto m = testing::fixture(name);
        auto ref = centralized_reference_solve(m);
        REQUIRE(kkt_residual(ref.problem, ref.w).max_residual < 1e-6);
        auto rate = rhs(m, ref.x, ref.d);
        double worst = 0;
        for (auto* v : {&rate.dx.p_g, &rate.dx.v, &rate.dx.P, &rate.dx.l, &rate.dx.p_hat, &rate.dd.mu, &rate.dd.eps,
                        &rate.dd.lambda, &rate.dd.gamma, &rate.dd.rho})
            for (double r : *v) worst = std::max(worst, std::abs(r));
        CHECK(worst <= 1e-6);
        CHECK(inf_norm(full_rhs(ref.problem, ref.w)) <= 1e-6);
    }
}

TEST_CASE("isolated droop node in balance") {
    auto m = single_droop_node();
    auto x = PrimalState::zeros(1, 0);
    auto d = DualState::zeros(1, 0);
    const auto& g = m.microgrids[0];
    x.p_g[0] = g.load;
    x.v[0] = g.v_star;
    x.p_hat[0] = g.load;
    d.mu[0] = cost_gradient(g, g.load);
    auto rate = rhs(m, x, d);
    CHECK(std::abs(rate.dx.p_g[0]) < 1e-12);
    CHECK(std::abs(rate.dd.mu[0]) < 1e-12);
    CHECK(std::abs(rate.dx.v[0]) < 1e-9);
    CHECK(std::abs(rate.dx.p_hat[0]) < 1e-9);
}

TEST_CASE("saturated generation does not move outward") {
    auto m = testing::fixture("two_node_capped");
    auto x = PrimalState::zeros(2, 1);
    auto d = DualState::zeros(2, 1);
    for (std::size_t i = 0; i < 2; ++i) {
        x.v[i] = m.microgrids[i].v_star;
        x.p_hat[i] = m.microgrids[i].load;
        x.p_g[i] = m.microgrids[i].load;
    }
    x.p_g[0] = m.microgrids[0].gen_max;
    d.mu[0] = 50.0;
    auto rate = rhs(m, x, d);
    CHECK(rate.dx.p_g[0] == 0.0);
    d.mu[0] = -50.0;
    CHECK(rhs(m, x, d).dx.p_g[0] < 0.0);
}

TEST_CASE("euler steps stay in the box") {
    auto m = testing::table1();
    auto pb = make_problem(m, resolve_units(m));
    PrimalState x;
    DualState d;
    from_working(pb, default_start(m, pb), x, d);
    for (int k = 0; k < 3000; ++k) {
        step(m, x, d, 1e-3);
        for (std::size_t i = 0; i < 6; ++i) {
            const auto& g = m.microgrids[i];
            REQUIRE(x.p_g[i] >= 0.0);
            REQUIRE(x.p_g[i] <= g.gen_max);
            REQUIRE(x.v[i] >= g.v_min * g.v_min);
            REQUIRE(x.v[i] <= g.v_max * g.v_max);
        }
    }
}

TEST_CASE("step at an equilibrium is a fixed point") {
    auto m = testing::fixture("three_node_star");
    auto ref = centralized_reference_solve(m);
    auto x = ref.x;
    auto d = ref.d;
    step(m, x, d, 1e-3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(x.p_g[i] - ref.x.p_g[i]) < 1e-9);
        CHECK(std::abs(x.v[i] - ref.x.v[i]) < 1e-9 * ref.x.v[i]);
        CHECK(std::abs(x.p_hat[i] - ref.x.p_hat[i]) < 1e-9);
        CHECK(std::abs(d.mu[i] - ref.d.mu[i]) < 1e-9);
    }
}

TEST_CASE("oversized step trips the divergence detector") {
    auto m = testing::table1();
    Engine eng(m, EngineOptions{});
    eng.set_state(default_start(m, eng.problem()));
    int steps = 0;
    bool diverged = false;
    try {
        for (; steps < 1000; ++steps) eng.advance(10.0);
    } catch (const Error& e) {
        diverged = e.kind() == ErrorKind::Divergence;
    }
    CHECK(diverged);
    CHECK(steps < 1000);
}

TEST_CASE("rk4 and euler reach the same equilibrium") {
    auto m = testing::fixture("two_node_asym");
    EngineOptions eo;
    Engine eu(m, eo);
    eo.integrator = Integrator::RK4;
    Engine rk(m, eo);
    eu.set_state(default_start(m, eu.problem()));
    rk.set_state(default_start(m, rk.problem()));
    for (int k = 0; k < 20000; ++k) rk.advance(0.02);
    for (int k = 0; k < 400000; ++k) eu.advance(1e-3);
    PrimalState xe, xr;
    DualState de, dr;
    eu.get_state(xe, de);
    rk.get_state(xr, dr);
    CHECK(inf_norm(rk.current_rhs()) < 1e-8);
    for (std::size_t i = 0; i < 2; ++i) CHECK(xe.p_g[i] == doctest::Approx(xr.p_g[i]).epsilon(1e-7));
}

TEST_CASE("neighbor estimate from local measurements") {
    auto m = testing::fixture("two_node_asym");
    SUBCASE("no flow") {
        auto x = PrimalState::zeros(2, 1);
        x.v = {170000.0, 170000.0};
        auto views = make_agent_views(m, x);
        auto est = estimate_neighbor(m, views[0], 1);
        CHECK(est.P_far == x.P[0]);
        CHECK(est.v_far == doctest::Approx(x.v[0]).epsilon(1e-15));
    }
    SUBCASE("voltage drops along positive current") {
        auto x = PrimalState::zeros(2, 1);
        x.v = {170000.0, 170000.0};
        auto views = make_agent_views(m, x);
        views[0].I[0] = 10.0;
        views[0].P[0] = std::sqrt(x.v[0]) * 10.0 / 1000.0;
        CHECK(estimate_neighbor(m, views[0], 1).v_far < views[0].v);
        CHECK_THROWS_AS(estimate_neighbor(m, views[0], 0), Error);
    }
    SUBCASE("matches the plant") {
        CommandSet cmds(2);
        cmds[0].mode = ControlMode::DroopControl;
        cmds[0].p_hat_ref = 4.0;
        cmds[1].mode = ControlMode::VoltageControl;
        cmds[1].v_ref = 420.0;
        auto plant = solve_power_flow(m, cmds);
        auto x = PrimalState::zeros(2, 1);
        for (std::size_t i = 0; i < 2; ++i) x.v[i] = plant.V[i] * plant.V[i];
        x.P = plant.Pflow;
        auto views = make_agent_views(m, x);
        for (std::size_t i = 0; i < 2; ++i) {
            views[i].I[0] = plant.I[views[i].arcs[0]];
            auto est = estimate_neighbor(m, views[i], 1 - i);
            CHECK(est.P_far == doctest::Approx(plant.Pflow[reverse_arc(views[i].arcs[0])]).epsilon(1e-9));
            CHECK(est.v_far == doctest::Approx(x.v[1 - i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("message exchange") {
    SUBCASE("two nodes") {
        auto m = testing::fixture("two_node_sym");
        auto x = PrimalState::zeros(2, 1);
        auto d = DualState::zeros(2, 1);
        d.rho = {0.25, 0.75};
        auto views = make_agent_views(m, x);
        exchange_messages(m, d, views);
        REQUIRE(views[0].rho_in.size() == 1);
        CHECK(views[0].rho_in[0] == 0.75);
        CHECK(views[1].rho_in[0] == 0.25);
    }
    SUBCASE("disconnected node") {
        auto m = testing::table1();
        m.microgrids[5].gen_max = 50.0;
        m = apply_topology_change(m, TopologyAction::Disconnect, 5);
        auto x = PrimalState::zeros(6, 5);
        auto views = make_agent_views(m, x);
        exchange_messages(m, DualState::zeros(6, 5), views);
        CHECK(views[5].rho_in.empty());
        CHECK(views[4].rho_in.size() == 1);
    }
    SUBCASE("path inbox sizes follow degree") {
        auto m = six_node_path();
        auto views = make_agent_views(m, PrimalState::zeros(6, 5));
        exchange_messages(m, DualState::zeros(6, 5), views);
        for (std::size_t i = 0; i < 6; ++i) CHECK(views[i].rho_in.size() == m.adjacency[i].size());
        CHECK(views[0].rho_in.size() == 1);
        CHECK(views[3].rho_in.size() == 2);
    }
}

TEST_CASE("commands follow the control mode") {
    auto m = testing::table1();
    auto x = PrimalState::zeros(6, 5);
    for (std::size_t i = 0; i < 6; ++i) {
        x.p_g[i] = 40.0 + i;
        x.v[i] = 160000.0;
        x.p_hat[i] = 30.0 + i;
    }
    auto cmds = emit_commands(m, x);
    REQUIRE(cmds.size() == 6);
    for (std::size_t i : {0u, 5u}) {
        CHECK(cmds[i].mode == ControlMode::DroopControl);
        CHECK(cmds[i].p_hat_ref == x.p_hat[i]);
        CHECK(cmds[i].p_ref == 0.0);
        CHECK(cmds[i].v_ref == 0.0);
    }
    for (std::size_t i : {1u, 4u}) {
        CHECK(cmds[i].mode == ControlMode::PowerControl);
        CHECK(cmds[i].p_ref == x.p_g[i]);
        CHECK(cmds[i].v_ref == 0.0);
    }
    for (std::size_t i : {2u, 3u}) {
        CHECK(cmds[i].mode == ControlMode::VoltageControl);
        CHECK(cmds[i].v_ref == 400.0);
        CHECK(cmds[i].p_ref == 0.0);
    }
}

TEST_CASE("agent rhs ignores non-neighbors") {
    auto m = testing::table1();
    auto pb = make_problem(m, resolve_units(m));
    auto w = random_start(m, pb, 42);
    Inbox in;
    in.resize(2 * m.line_count());
    exchange_from_snapshot(pb, w.data(), in);
    // node 1 (index 0) only talks to node 2 (index 1)
    std::vector<double> base(pb.L.size), after(pb.L.size);
    agent_rhs(pb, w.data(), in, 0, base.data());
    auto w2 = w;
    for (std::size_t j : {2u, 3u, 4u, 5u})
        for (std::size_t c : owned_coordinates(pb, j)) w2[c] += 0.37;
    Inbox in2;
    in2.resize(2 * m.line_count());
    exchange_from_snapshot(pb, w2.data(), in2);
    agent_rhs(pb, w2.data(), in2, 0, after.data());
    for (std::size_t c : owned_coordinates(pb, 0)) CHECK(base[c] == after[c]);
}

#include <cmath>

#include "doctest.h"
#include "dcmg/error.hpp"
#include "dcmg/plant.hpp"
#include "support.hpp"

using namespace dcmg;

namespace {

GridModel two_bus(const char* mode1, const char* mode2, double r) {
    std::string s = R"({"microgrids": [
      {"id": 1, "cost_a": 0.03, "cost_b": 1, "load_kw": 10, "gen_max_kw": 30, "v_min_volts": 380, "v_max_volts": 420, "droop_k": 0.13, "mode": "M1"},
      {"id": 2, "cost_a": 0.03, "cost_b": 1, "load_kw": 10, "gen_max_kw": 30, "v_min_volts": 380, "v_max_volts": 420, "droop_k": 0.13, "mode": "M2"}],
      "lines": [{"from": 1, "to": 2, "resistance_ohm": R}]})";
    s.replace(s.find("M1"), 2, mode1);
    s.replace(s.find("M2"), 2, mode2);
    s.replace(s.find("R}"), 1, std::to_string(r));
    return parse_config(s);
}

}  // namespace

TEST_CASE("identical droop nodes share voltage") {
    auto m = two_bus("droop", "droop", 0.4);
    CommandSet c(2);
    for (auto& x : c) {
        x.mode = ControlMode::DroopControl;
        x.p_hat_ref = 10.0;
    }
    auto pl = solve_power_flow(m, c);
    CHECK(pl.V[0] == doctest::Approx(pl.V[1]).epsilon(1e-12));
    CHECK(std::abs(pl.I[0]) < 1e-9);
    CHECK(pl.g[0] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(pl.g[1] == doctest::Approx(10.0).epsilon(1e-9));
    auto a = measurements_for(m, pl, 0), b = measurements_for(m, pl, 1);
    CHECK(std::abs(a.I[0]) < 1e-9);
    CHECK(std::abs(b.I[0]) < 1e-9);
}

TEST_CASE("voltage and power bus against the closed form") {
    double r = 0.35;
    auto m = two_bus("voltage", "power", r);
    CommandSet c(2);
    c[0].mode = ControlMode::VoltageControl;
    c[0].v_ref = 400.0;
    c[1].mode = ControlMode::PowerControl;
    for (double p_ref : {4.0, 10.0, 22.5}) {
        c[1].p_ref = p_ref;
        auto pl = solve_power_flow(m, c);
        // 1000 (p_ref - d) = V2 (V2 - V1) / r
        double inj = p_ref - m.microgrids[1].load;
        double V2 = 0.5 * (400.0 + std::sqrt(400.0 * 400.0 + 4000.0 * r * inj));
        CHECK(pl.V[0] == 400.0);
        CHECK(std::abs(pl.V[1] - V2) < 1e-9);
        CHECK(pl.g[1] == doctest::Approx(p_ref).epsilon(1e-12));
    }
}

TEST_CASE("isolated droop node") {
    auto m = parse_config(R"({"microgrids": [{"id": 1, "cost_a": 0.03, "cost_b": 1, "load_kw": 20,
        "gen_max_kw": 40, "v_min_volts": 380, "v_max_volts": 420, "droop_k": 0.12, "mode": "droop"}]})");
    CommandSet c(1);
    c[0].mode = ControlMode::DroopControl;
    c[0].p_hat_ref = 17.0;
    auto pl = solve_power_flow(m, c);
    const auto& g = m.microgrids[0];
    CHECK(pl.V[0] == doctest::Approx(std::sqrt(g.v_star - g.droop_k * (g.load - 17.0))).epsilon(1e-12));
    CHECK(pl.g[0] == doctest::Approx(g.load).epsilon(1e-12));
}

TEST_CASE("plant identities on the six node system") {
    auto m = testing::table1();
    CommandSet c(6);
    for (std::size_t i = 0; i < 6; ++i) {
        c[i].mode = m.microgrids[i].mode;
        c[i].p_ref = 45.0;
        c[i].v_ref = 418.0 - i;
        c[i].p_hat_ref = 44.0;
    }
    auto pl = solve_power_flow(m, c);
    CHECK(pl.residual <= 1e-10);
    double gen = 0, load = 0, loss = 0;
    for (std::size_t i = 0; i < 6; ++i) {
        gen += pl.g[i];
        load += m.microgrids[i].load;
        auto ms = measurements_for(m, pl, i);
        CHECK(ms.V == pl.V[i]);
        for (std::size_t j = 0; j < ms.arcs.size(); ++j)
            CHECK(std::abs(ms.Pflow[j] - ms.V * ms.I[j] / 1000.0) <= 1e-12 * std::max(1.0, std::abs(ms.Pflow[j])));
    }
    for (std::size_t e = 0; e < 5; ++e) {
        const auto& ln = m.lines[e];
        double I = pl.I[2 * e];
        CHECK(pl.I[2 * e + 1] == doctest::Approx(-I).epsilon(1e-12));
        CHECK(I == doctest::Approx((pl.V[ln.from] - pl.V[ln.to]) / ln.resistance).epsilon(1e-9));
        CHECK(pl.Pflow[2 * e] + pl.Pflow[2 * e + 1] == doctest::Approx(ln.resistance * I * I / 1000.0).epsilon(1e-9));
        loss += ln.resistance * I * I / 1000.0;
    }
    CHECK(gen == doctest::Approx(load + loss).epsilon(1e-10));
    CHECK(pl.g[1] == doctest::Approx(45.0));
    CHECK(pl.V[2] == 416.0);
    for (std::size_t i : {0u, 5u}) {
        const auto& g = m.microgrids[i];
        CHECK(pl.V[i] * pl.V[i] == doctest::Approx(g.v_star - g.droop_k * (pl.g[i] - 44.0)).epsilon(1e-12));
    }
}

TEST_CASE("component without an anchor is rejected") {
    auto m = two_bus("power", "droop", 0.4);
    CommandSet c(2);
    c[0].mode = ControlMode::PowerControl;
    c[1].mode = ControlMode::PowerControl;
    CHECK_THROWS_AS(solve_power_flow(m, c), Error);
}

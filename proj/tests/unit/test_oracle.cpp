#include <algorithm>
#include <cmath>

#include "../frozen.hpp"
#include "doctest.h"
#include "dcmg/error.hpp"
#include "dcmg/kernel.hpp"
#include "dcmg/opf.hpp"
#include "dcmg/oracle.hpp"
#include "support.hpp"

using namespace dcmg;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

}  // namespace

TEST_CASE("brute force on the symmetric pair") {
    auto m = testing::fixture("two_node_sym");
    auto bf = brute_force_solve(m);
    CHECK(std::abs(bf.V[0] - bf.V[1]) <= bf.resolution);
    CHECK(bf.x.p_g[0] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(bf.x.p_g[1] == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("brute force on the asymmetric pair") {
    auto m = testing::fixture("two_node_asym");
    auto bf = brute_force_solve(m);
    CHECK(bf.x.p_g[1] > bf.x.p_g[0]);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(bf.x.p_g[i] == doctest::Approx(frozen::brute_two_node_asym[i]).epsilon(1e-6));
        CHECK(bf.V[i] == doctest::Approx(frozen::brute_two_node_asym_volts[i]).epsilon(1e-9));
        CHECK(std::abs(bf.x.p_g[i] - frozen::conic_fixtures()[0].p_g[i]) <= bf.p_bound);
    }
    CHECK(bf.p_bound > 0.0);
    CHECK(bf.p_bound < 0.05);
}

TEST_CASE("brute force rejects a capacity deficit") {
    auto m = testing::fixture("two_node_asym");
    m.options.require_connected = true;
    m.microgrids[0].gen_max = 4.0;
    m.microgrids[1].gen_max = 5.0;
    try {
        brute_force_solve(m);
        FAIL("expected infeasible");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("infeasible") != std::string::npos);
    }
    CHECK_THROWS_AS(brute_force_solve(testing::table1()), Error);
}

TEST_CASE("reference solve agrees with both oracles") {
    for (const auto& fx : frozen::conic_fixtures()) {
        CAPTURE(fx.name);
        auto m = testing::fixture(fx.name);
        auto ref = centralized_reference_solve(m);
        auto bf = brute_force_solve(m);
        CHECK(ref.rhs_norm <= 1e-9);
        CHECK(kkt_residual(ref.problem, ref.w).max_residual <= 1e-6);
        for (std::size_t i = 0; i < m.node_count(); ++i) {
            CHECK(std::abs(ref.x.p_g[i] - fx.p_g[i]) <= 1e-5 * std::max(1.0, fx.p_g[i]));
            CHECK(std::abs(ref.x.p_g[i] - bf.x.p_g[i]) <= bf.p_bound);
        }
    }
}

TEST_CASE("reference solve on the six node config") {
    auto m = testing::table1();
    auto ref = centralized_reference_solve(m);
    for (std::size_t i = 0; i < 6; ++i) CHECK(rel(ref.x.p_g[i], frozen::six_node_base[i]) <= 1e-5);
    for (std::size_t i = 0; i < 6; ++i) m.microgrids[i].gen_max = std::vector<double>{60, 55, 60, 65, 48, 50}[i];
    auto cap = centralized_reference_solve(m);
    for (std::size_t i = 0; i < 6; ++i) CHECK(rel(cap.x.p_g[i], frozen::six_node_capacity[i]) <= 1e-5);
}

TEST_CASE("unique optimum from random starts") {
    auto m = testing::fixture("three_node_mesh");
    auto base = centralized_reference_solve(m);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ReferenceOptions opt;
        opt.start = random_start(m, base.problem, seed);
        auto r = centralized_reference_solve(m, opt);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(r.x.p_g[i] - base.x.p_g[i]) <= 1e-6);
    }
}

TEST_CASE("droop coefficients do not move the optimum") {
    for (const char* name : {"three_node_path", "two_node_capped"}) {
        auto m = testing::fixture(name);
        auto a = centralized_reference_solve(m);
        auto m2 = m;
        for (auto& g : m2.microgrids) g.droop_k *= 2;
        auto b = centralized_reference_solve(m2);
        auto close = [](const std::vector<double>& x, const std::vector<double>& y) {
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(x[i] - y[i]) > 1e-6 * std::max(1.0, std::abs(x[i]))) return false;
            return true;
        };
        CHECK(close(a.x.p_g, b.x.p_g));
        CHECK(close(a.x.v, b.x.v));
        CHECK(close(a.x.P, b.x.P));
        CHECK(close(a.x.l, b.x.l));
        for (std::size_t i = 0; i < m.node_count(); ++i) {
            CHECK(b.x.p_hat[i] == doctest::Approx(droop_reference_for(m2, b.x, i)).epsilon(1e-9));
            CHECK(std::abs(b.x.p_hat[i] - a.x.p_hat[i]) > 1.0);
        }
    }
}

TEST_CASE("kkt residual responds to multipliers") {
    auto m = testing::fixture("three_node_path");
    auto ref = centralized_reference_solve(m);
    auto w = ref.w;
    const auto& L = ref.problem.L;
    CHECK(kkt_residual(ref.problem, w).rows.at("stationarity_P") < 1e-9);
    w[L.mu + 0] += 1.0;
    auto rep = kkt_residual(ref.problem, w);
    CHECK(rep.rows.at("stationarity_P") == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(rep.rows.at("stationarity_p") == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(rep.rows.at("balance") < 1e-9);
}

TEST_CASE("kkt stationarity with zero duals is the marginal cost") {
    auto m = testing::fixture("two_node_sym");
    auto x = PrimalState::zeros(2, 1);
    for (std::size_t i = 0; i < 2; ++i) {
        x.p_g[i] = m.microgrids[i].load;
        x.v[i] = 405.0 * 405.0;
        x.p_hat[i] = droop_reference_for(m, x, i);
    }
    // projected residual saturates at the distance to the box; keep G inside it
    WorkingUnits u;
    u.cost = 100.0;
    auto units = resolve_units(m, u);
    auto rep = kkt_residual(m, x, DualState::zeros(2, 1), units);
    double G = cost_gradient(m.microgrids[0], x.p_g[0]) * units.power_kw / units.cost;
    CHECK(rep.rows.at("stationarity_p") == doctest::Approx(G).epsilon(1e-12));
    CHECK(rep.rows.at("stationarity_p") >= m.microgrids[0].cost_b * units.power_kw / units.cost);
}

TEST_CASE("lyapunov function vanishes at the equilibrium") {
    auto m = testing::fixture("three_node_star");
    auto ref = centralized_reference_solve(m);
    auto s = lyapunov_value(ref.problem, ref.w, ref.w);
    CHECK(s.U == doctest::Approx(0.0));
    auto w = ref.w;
    w[ref.problem.L.p] += 0.1;
    CHECK(lyapunov_value(ref.problem, w, ref.w).U > 0.0);
    auto nat = lyapunov_value(m, ref.x, ref.d, ref.x, ref.d);
    CHECK(std::abs(nat.U) < 1e-18);
}

TEST_CASE("exactness certificate") {
    auto m = testing::fixture("three_node_mesh");
    auto ref = centralized_reference_solve(m);
    auto cert = exactness_certificate(m, ref.x);
    CHECK(cert.preconditions_hold());
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(cert.exact[e]);
        CHECK(std::abs(cert.gap[e]) <= 1e-6);
    }

    auto slack = ref.x;
    slack.l[1] += 2.0;
    auto c2 = exactness_certificate(m, slack);
    CHECK_FALSE(c2.exact[1]);
    CHECK(c2.gap[1] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(c2.exact[0]);

    auto uneq = m;
    uneq.options.require_equal_vmax = false;
    uneq.microgrids[2].v_max = 425.0;
    auto c3 = exactness_certificate(uneq, ref.x);
    CHECK_FALSE(c3.equal_vmax);
    CHECK_FALSE(c3.preconditions_hold());
    CHECK(c3.exact[0]);
}

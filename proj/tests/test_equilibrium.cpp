#include "doctest.h"

#include <cmath>

#include "commutesim/equilibrium.hpp"
#include "commutesim/errors.hpp"
#include "commutesim/rng.hpp"

using namespace commutesim;

TEST_CASE("vickrey window for the 40-agent corridor") {
    VickreyBenchmark b = vickrey_window(40, 60.0, 540.0, 1.0, 10.0, 3.0, 30.0);
    CHECK(b.window_start_min == doctest::Approx(503.636363636).epsilon(1e-9));
    CHECK(b.window_end_min == doctest::Approx(543.636363636).epsilon(1e-9));
    CHECK(b.rush_length_min == doctest::Approx(40.0));
    REQUIRE(b.equilibrium_cost.has_value());
    CHECK(*b.equilibrium_cost == doctest::Approx(90.0 + 400.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("vickrey identity beta*(t*-start) == gamma*(end-t*)") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const double n = 1 + rng.below(200);
        const double s = rng.uniform(5.0, 200.0);
        const double beta = rng.uniform(0.1, 5.0);
        const double gamma = rng.uniform(0.1, 20.0);
        VickreyBenchmark b = vickrey_window(n, s, 540.0, beta, gamma);
        CHECK(beta * (540.0 - b.window_start_min) ==
              doctest::Approx(gamma * (b.window_end_min - 540.0)).epsilon(1e-9));
        CHECK(b.window_end_min - b.window_start_min ==
              doctest::Approx(n / s * 60.0).epsilon(1e-9));
    }
}

TEST_CASE("symmetric weights center the window on t*") {
    VickreyBenchmark b = vickrey_window(40, 60.0, 540.0, 2.0, 2.0);
    CHECK(b.window_start_min == doctest::Approx(520.0));
    CHECK(b.window_end_min == doctest::Approx(560.0));
}

TEST_CASE("beta=2 gamma=8 window") {
    VickreyBenchmark b = vickrey_window(40, 60.0, 540.0, 2.0, 8.0);
    CHECK(b.window_start_min == doctest::Approx(508.0));  // 8:28
    CHECK(b.window_end_min == doctest::Approx(548.0));    // 9:08
    CHECK(2.0 * (540.0 - b.window_start_min) == doctest::Approx(8.0 * (b.window_end_min - 540.0)));
}

TEST_CASE("wardrop split for the benchmark two-route network") {
    std::vector<RouteOption> routes{{1, 20.0, 3.0}, {2, 40.0, 1.0}};
    WardropBenchmark b = wardrop_split_linear(routes, 40.0);
    REQUIRE(b.flows.size() == 2);
    CHECK(b.flows[0] == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(b.flows[1] == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(b.common_time_min == doctest::Approx(65.0).epsilon(1e-12));
    CHECK(b.is_interior);
}

TEST_CASE("identical routes split evenly") {
    std::vector<RouteOption> routes{{1, 12.0, 2.0}, {2, 12.0, 2.0}};
    WardropBenchmark b = wardrop_split_linear(routes, 30.0);
    CHECK(b.flows[0] == doctest::Approx(15.0));
    CHECK(b.flows[1] == doctest::Approx(15.0));
}

TEST_CASE("interior split matches a grid-search oracle") {
    // Oracle: scan f1 over [0, N] in 1e-3 steps minimizing |t1 - t2|.
    std::vector<RouteOption> routes{{1, 10.0, 2.0}, {2, 30.0, 1.0}};
    const double n = 30.0;
    double best_f1 = 0.0, best_gap = 1e18;
    for (double f1 = 0.0; f1 <= n + 1e-12; f1 += 1e-3) {
        const double gap = std::abs(routes[0].travel_time(f1) - routes[1].travel_time(n - f1));
        if (gap < best_gap) {
            best_gap = gap;
            best_f1 = f1;
        }
    }
    WardropBenchmark b = wardrop_split_linear(routes, n);
    CHECK(b.flows[0] == doctest::Approx(best_f1).epsilon(1e-3));
    CHECK(b.flows[0] == doctest::Approx(50.0 / 3.0).epsilon(1e-9));
    CHECK(b.common_time_min == doctest::Approx(130.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("corner solution leaves the dear route empty") {
    std::vector<RouteOption> routes{{1, 10.0, 1.0}, {2, 100.0, 1.0}};
    WardropBenchmark b = wardrop_split_linear(routes, 20.0);
    CHECK(b.flows[0] == doctest::Approx(20.0));
    CHECK(b.flows[1] == doctest::Approx(0.0));
    CHECK_FALSE(b.is_interior);
    // no profitable deviation: the would-be entrant meets 100 + 1 > 30
    CHECK(routes[0].travel_time(20.0) < routes[1].travel_time(1.0));
}

TEST_CASE("degenerate all-zero-slope instance") {
    std::vector<RouteOption> eq{{1, 7.0, 0.0}, {2, 7.0, 0.0}};
    WardropBenchmark b = wardrop_split_linear(eq, 10.0);
    CHECK(b.flows[0] == doctest::Approx(5.0));
    CHECK_FALSE(b.degeneracy_note.empty());

    std::vector<RouteOption> uneq{{1, 7.0, 0.0}, {2, 9.0, 0.0}};
    CHECK_THROWS_AS(wardrop_split_linear(uneq, 10.0), Error);
}

TEST_CASE("no profitable continuous deviation at the wardrop split") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RouteOption> routes{
            {1, rng.uniform(0.0, 50.0), rng.uniform(0.1, 5.0)},
            {2, rng.uniform(0.0, 50.0), rng.uniform(0.1, 5.0)},
        };
        const double n = 1.0 + rng.below(100);
        WardropBenchmark b = wardrop_split_linear(routes, n);
        const double delta = 1e-3;
        for (int from = 0; from < 2; ++from) {
            const int to = 1 - from;
            if (b.flows[from] < delta) continue;
            const double t_from = routes[from].travel_time(b.flows[from]);
            const double t_to_after = routes[to].travel_time(b.flows[to] + delta);
            CHECK(t_to_after >= t_from - 1e-6);
        }
    }
}

TEST_CASE("integer bruteforce contains the known split and rejects deviation") {
    std::vector<RouteOption> routes{{1, 20.0, 3.0}, {2, 40.0, 1.0}};
    auto stable = integer_equilibrium_bruteforce(routes, 40);
    bool has_15_25 = false;
    for (auto [f1, f2] : stable)
        if (f1 == 15 && f2 == 25) has_15_25 = true;
    CHECK(has_15_25);
    // hand check at (15,25): switcher to 2 gets 66 > 65, switcher to 1 gets 68 > 65
    CHECK(routes[1].travel_time(26) == 66.0);
    CHECK(routes[0].travel_time(16) == 68.0);
}

TEST_CASE("integer bruteforce on tiny symmetric instance") {
    std::vector<RouteOption> routes{{1, 5.0, 1.0}, {2, 5.0, 1.0}};
    auto stable = integer_equilibrium_bruteforce(routes, 2);
    REQUIRE(stable.size() == 1);
    CHECK(stable[0] == std::pair<int, int>(1, 1));
}

TEST_CASE("integer bruteforce corner") {
    std::vector<RouteOption> routes{{1, 10.0, 1.0}, {2, 100.0, 1.0}};
    auto stable = integer_equilibrium_bruteforce(routes, 20);
    REQUIRE(stable.size() == 1);
    CHECK(stable[0] == std::pair<int, int>(20, 0));
}

TEST_CASE("wardrop split agrees with integer equilibria within one agent") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RouteOption> routes{
            {1, std::floor(rng.uniform(0.0, 40.0)), std::floor(rng.uniform(1.0, 4.0))},
            {2, std::floor(rng.uniform(0.0, 40.0)), std::floor(rng.uniform(1.0, 4.0))},
        };
        const int n = 2 + static_cast<int>(rng.below(80));
        WardropBenchmark b = wardrop_split_linear(routes, n);
        auto stable = integer_equilibrium_bruteforce(routes, n);
        REQUIRE_FALSE(stable.empty());
        bool close = false;
        for (auto [f1, f2] : stable)
            if (std::abs(f1 - b.flows[0]) <= 1.0 + 1e-9) close = true;
        CHECK(close);
    }
}

TEST_CASE("single-agent oracle departs to arrive exactly on time") {
    BottleneckCorridor c{30.0, 60.0};
    PersonaSpec p;
    p.preferred_arrival = TimeOfDay{540.0};
    p.cost_weights = CostWeights{1.0, 3.0, 10.0};
    auto r = bottleneck_best_response_oracle(1, c, p, 0.5, 50);
    CHECK(r.converged);
    REQUIRE(r.departures.size() == 1);
    CHECK(r.departures[0] == doctest::Approx(510.0));
    CHECK(r.mean_cost == doctest::Approx(90.0));
}

TEST_CASE("symmetric-weight oracle straddles t*") {
    BottleneckCorridor c{10.0, 60.0};
    PersonaSpec p;
    p.preferred_arrival = TimeOfDay{540.0};
    p.cost_weights = CostWeights{2.0, 3.0, 2.0};
    auto r = bottleneck_best_response_oracle(6, c, p, 0.5, 200);
    // analytic window is [537, 543]; allow a grid slop on each side
    CHECK(r.min_arrival_min >= 537.0 - 1.0);
    CHECK(r.max_arrival_min <= 543.0 + 1.0);
}

TEST_CASE("small oracle run lands near the analytic cost") {
    BottleneckCorridor c{30.0, 60.0};
    PersonaSpec p;
    p.preferred_arrival = TimeOfDay{540.0};
    p.cost_weights = CostWeights{1.0, 3.0, 10.0};
    auto r = bottleneck_best_response_oracle(10, c, p, 0.5, 200);
    const double eq = 90.0 + (10.0 / 11.0) * 10.0;
    CHECK(std::abs(r.mean_cost - eq) <= 0.05 * eq);
    // every agent sits within epsilon of its grid-best deviation by definition
    CHECK(r.epsilon >= 0.0);
}

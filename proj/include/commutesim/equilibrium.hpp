#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "commutesim/scenario.hpp"
#include "commutesim/traffic.hpp"

namespace commutesim {

struct VickreyBenchmark {
    double window_start_min = 0.0;
    double window_end_min = 0.0;
    double rush_length_min = 0.0;
    // Present when alpha and the free-flow time are supplied.
    std::optional<double> equilibrium_cost;
};

// start = t* - gamma/(beta+gamma) * N/s, end = t* + beta/(beta+gamma) * N/s,
// cost = alpha*T_ff + beta*gamma/(beta+gamma) * N/s.
VickreyBenchmark vickrey_window(double n_agents, double capacity_per_hour, double t_star_min,
                                double beta, double gamma,
                                std::optional<double> alpha = std::nullopt,
                                std::optional<double> free_flow_min = std::nullopt);

struct WardropBenchmark {
    std::vector<double> flows;  // by route order
    double common_time_min = 0.0;
    bool is_interior = false;
    std::string degeneracy_note;  // empty unless the instance is degenerate
};

// Continuous user equilibrium for linear latencies: equal times on all used
// routes, unused routes no cheaper.
WardropBenchmark wardrop_split_linear(const std::vector<RouteOption>& routes, double n_agents);

// Integer splits (f1, f2) where a unilateral switcher from either route would
// weakly increase its own time. Two-route instances only.
std::vector<std::pair<int, int>> integer_equilibrium_bruteforce(
    const std::vector<RouteOption>& routes, int n_agents);

struct BestResponseOracleResult {
    std::vector<double> departures;  // by agent id, best iterate visited
    std::vector<TravelOutcome> outcomes;
    double mean_cost = 0.0;
    double min_cost = 0.0;
    double max_cost = 0.0;
    double min_arrival_min = 0.0;
    double max_arrival_min = 0.0;
    // Largest unilateral grid-deviation gain at the returned profile and the
    // iterate (pass number) it was found at.
    double epsilon = 0.0;
    int best_iterate = 0;
    int iterations = 0;
    bool converged = false;  // a full pass with no moves
};

// Independent check of vickrey_window: round-robin best response on a departure
// grid, evaluated pessimistically (a mover joins behind agents already at the
// chosen slot). Exact best-response dynamics cycle in this game, so the result
// is the visited profile with the smallest maximum deviation gain; convergence
// status is reported, not required.
BestResponseOracleResult bottleneck_best_response_oracle(int n_agents,
                                                         const BottleneckCorridor& corridor,
                                                         const PersonaSpec& persona,
                                                         double grid_step_min, int max_iters);

}  // namespace commutesim

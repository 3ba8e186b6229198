#pragma once

#include <optional>
#include <vector>

#include "commutesim/scenario.hpp"

namespace commutesim {

struct TravelDecision {
    int agent_id = 0;
    int day = 0;
    std::optional<double> departure_min;  // bottleneck case
    std::optional<int> route_id;          // route case
};

struct TravelOutcome {
    int agent_id = 0;
    int day = 0;
    double departure_min = 0.0;
    double arrival_min = 0.0;
    double travel_time_min = 0.0;
    double queue_delay_min = 0.0;
    double schedule_dev_min = 0.0;  // arrival - preferred arrival (signed)
    double cost = 0.0;
    std::optional<int> route_id;
};

// cost = alpha * travel_time + beta * max(0, t* - arrival) + gamma * max(0, arrival - t*)
double schedule_cost(double travel_time_min, double arrival_min, const PersonaSpec& persona);

// Point queue at the corridor exit: agents traverse at free flow, then exit in
// (departure, agent_id) order with consecutive exits at least one headway apart.
// Outcomes are returned in input order.
std::vector<TravelOutcome> simulate_bottleneck_day(const std::vector<TravelDecision>& decisions,
                                                   const BottleneckCorridor& corridor,
                                                   const PersonaSpec& persona);

// Static loading: t_r = b_r + a_r * (count on route r); everyone departs at the
// scenario's nominal departure time. Outcome cost is the travel time itself.
std::vector<TravelOutcome> simulate_route_day(const std::vector<TravelDecision>& decisions,
                                              const std::vector<RouteOption>& routes,
                                              const PersonaSpec& persona,
                                              TimeOfDay nominal_departure);

}  // namespace commutesim

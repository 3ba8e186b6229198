#include "commutesim/traffic.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "commutesim/errors.hpp"

namespace commutesim {

double schedule_cost(double travel_time_min, double arrival_min, const PersonaSpec& persona) {
    const double dev = arrival_min - persona.preferred_arrival.minutes;
    const auto& w = persona.cost_weights;
    return w.invehicle_per_min * travel_time_min + w.early_per_min * std::max(0.0, -dev) +
           w.late_per_min * std::max(0.0, dev);
}

std::vector<TravelOutcome> simulate_bottleneck_day(const std::vector<TravelDecision>& decisions,
                                                   const BottleneckCorridor& corridor,
                                                   const PersonaSpec& persona) {
    std::vector<std::size_t> order(decisions.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        if (!decisions[i].departure_min)
            throw Error(ErrorKind::WrongCase,
                        "simulate_bottleneck_day: decision for agent " +
                            std::to_string(decisions[i].agent_id) + " has no departure_time");
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double da = *decisions[a].departure_min, db = *decisions[b].departure_min;
        if (da != db) return da < db;
        return decisions[a].agent_id < decisions[b].agent_id;
    });

    const double h = corridor.headway_min();
    const double t_ff = corridor.free_flow_min;
    std::vector<TravelOutcome> out(decisions.size());
    double prev_exit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& d = decisions[order[k]];
        const double dep = *d.departure_min;
        const double exit_t = std::max(dep + t_ff, prev_exit + h);
        prev_exit = exit_t;
        TravelOutcome o;
        o.agent_id = d.agent_id;
        o.day = d.day;
        o.departure_min = dep;
        o.arrival_min = exit_t;
        o.travel_time_min = exit_t - dep;
        o.queue_delay_min = o.travel_time_min - t_ff;
        o.schedule_dev_min = exit_t - persona.preferred_arrival.minutes;
        o.cost = schedule_cost(o.travel_time_min, o.arrival_min, persona);
        out[order[k]] = o;
    }
    return out;
}

std::vector<TravelOutcome> simulate_route_day(const std::vector<TravelDecision>& decisions,
                                              const std::vector<RouteOption>& routes,
                                              const PersonaSpec& persona,
                                              TimeOfDay nominal_departure) {
    std::map<int, const RouteOption*> by_id;
    for (const auto& r : routes) by_id[r.route_id] = &r;

    std::map<int, int> flows;
    for (const auto& d : decisions) {
        if (!d.route_id)
            throw Error(ErrorKind::WrongCase, "simulate_route_day: decision for agent " +
                                                  std::to_string(d.agent_id) + " has no route_id");
        if (!by_id.count(*d.route_id))
            throw Error(ErrorKind::Validation,
                        "simulate_route_day: unknown route_id " + std::to_string(*d.route_id));
        flows[*d.route_id] += 1;
    }

    std::vector<TravelOutcome> out;
    out.reserve(decisions.size());
    for (const auto& d : decisions) {
        const RouteOption& r = *by_id.at(*d.route_id);
        const double tt = r.travel_time(static_cast<double>(flows[r.route_id]));
        TravelOutcome o;
        o.agent_id = d.agent_id;
        o.day = d.day;
        o.departure_min = nominal_departure.minutes;
        o.arrival_min = nominal_departure.minutes + tt;
        o.travel_time_min = tt;
        o.queue_delay_min = tt - r.intercept_min;
        o.schedule_dev_min = o.arrival_min - persona.preferred_arrival.minutes;
        o.cost = tt;  // route-choice agents minimize travel time
        o.route_id = r.route_id;
        out.push_back(o);
    }
    return out;
}

}  // namespace commutesim

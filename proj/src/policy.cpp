#include "commutesim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "commutesim/errors.hpp"
#include "commutesim/rng.hpp"

namespace commutesim {

PolicyDecision HeuristicPolicy::decide(const AgentState& state, int day) const {
    PolicyDecision out;
    out.decision = scenario_.case_kind == CaseKind::BottleneckDeparture
                       ? decide_departure(state, day)
                       : decide_route(state, day);
    return out;
}

TravelDecision HeuristicPolicy::decide_departure(const AgentState& state, int day) const {
    const auto& p = state.persona;
    const auto& hp = scenario_.heuristic;
    const double t_star = p.preferred_arrival.minutes;
    const double h = scenario_.corridor ? scenario_.corridor->headway_min() : 1.0;
    const double t_ff = scenario_.corridor ? scenario_.corridor->free_flow_min : 0.0;

    double dep;
    if (day == 1 || state.history.empty()) {
        const double typical =
            state.long_term.has_typical ? state.long_term.typical_travel_time_min : t_ff;
        Rng rng(decision_stream_seed(scenario_.master_seed, state.agent_id, day));
        dep = t_star - typical + rng.uniform(-hp.day1_jitter_min, hp.day1_jitter_min);
    } else {
        const MemoryEntry& y = state.history.back();
        const double dep_y = y.outcome.departure_min;
        const double dev_y = y.outcome.schedule_dev_min;
        const double cost_y = y.outcome.cost;
        const double best = state.long_term.best_cost_seen;
        const double lambda = p.tom_damping;

        if (dev_y > 0) {
            // Lateness forces a move regardless of cost inertia: correct the
            // observed lateness fully plus a damped one-headway margin (the
            // shift stays below dev + h, so the anticipation never overshoots
            // into the depart-earlier spiral).
            dep = dep_y - (dev_y + lambda * h);
        } else if (cost_y <= (1.0 + p.inertia_band) * best) {
            dep = dep_y;  // inertia: yesterday was close enough to the best seen
        } else if (-dev_y > 2.0 * h) {
            // Too early and yesterday's cost is out of band: creep toward t*,
            // at most one service slot per day.
            dep = dep_y + std::min(lambda * (-dev_y) / 2.0, h);
        } else {
            dep = dep_y;
        }
    }
    dep = std::clamp(quantize_minute(dep), t_star - hp.clamp_before_pref_min,
                     t_star + hp.clamp_after_pref_min);

    TravelDecision d;
    d.agent_id = state.agent_id;
    d.day = day;
    d.departure_min = dep;
    return d;
}

TravelDecision HeuristicPolicy::decide_route(const AgentState& state, int day) const {
    const auto& routes = scenario_.routes;
    const auto& hp = scenario_.heuristic;
    const double n = static_cast<double>(scenario_.n_agents);
    const std::size_t m = routes.size();

    TravelDecision d;
    d.agent_id = state.agent_id;
    d.day = day;

    if (day == 1 || state.history.empty()) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < m; ++r) {
            if (routes[r].intercept_min < routes[best].intercept_min ||
                (routes[r].intercept_min == routes[best].intercept_min &&
                 routes[r].route_id < routes[best].route_id))
                best = r;
        }
        d.route_id = routes[best].route_id;
        return d;
    }

    const MemoryEntry& y = state.history.back();
    if (!y.outcome.route_id)
        throw Error(ErrorKind::WrongCase, "heuristic route policy on non-route history");
    const int cur_id = *y.outcome.route_id;
    std::size_t cur = m;
    for (std::size_t r = 0; r < m; ++r)
        if (routes[r].route_id == cur_id) cur = r;
    if (cur == m) throw Error(ErrorKind::Validation, "yesterday's route no longer in route set");

    // Current route: yesterday's realized time. Other routes: infer the crowd
    // on the current route from that time via the posted latency parameters,
    // assume the remaining travelers sit on the alternatives, and anticipate
    // joining them (+1).
    const double est_cur = y.outcome.travel_time_min;
    double f_cur;
    if (routes[cur].slope_min_per_agent > 0.0)
        f_cur = std::clamp((est_cur - routes[cur].intercept_min) / routes[cur].slope_min_per_agent,
                           1.0, n);
    else
        f_cur = n / static_cast<double>(m);

    std::vector<double> est(m);
    for (std::size_t r = 0; r < m; ++r) {
        if (r == cur) {
            est[r] = est_cur;
        } else {
            const double f_guess = (n - f_cur) / static_cast<double>(m - 1);
            est[r] = routes[r].travel_time(f_guess + 1.0);
        }
    }

    std::size_t alt = m;
    for (std::size_t r = 0; r < m; ++r) {
        if (r == cur) continue;
        if (alt == m || est[r] < est[alt] ||
            (est[r] == est[alt] && routes[r].route_id < routes[alt].route_id))
            alt = r;
    }

    if (est_cur <= est[alt] + hp.route_stay_margin_min) {
        d.route_id = cur_id;
        return d;
    }

    // Dissatisfied: move with probability scaled by the relative loss.
    const double gap = est_cur - est[alt];
    const double p_move =
        (1.0 - hp.switch_keep_prob) * std::min(1.0, gap / std::max(est_cur, 1e-9));
    Rng rng(decision_stream_seed(scenario_.master_seed, state.agent_id, day));
    if (rng.uniform01() < p_move) {
        if (rng.uniform01() < state.persona.exploration_rate)
            d.route_id = routes[rng.below(m)].route_id;
        else
            d.route_id = routes[alt].route_id;
    } else {
        d.route_id = cur_id;
    }
    return d;
}

ReplayPolicy::ReplayPolicy(const Scenario& scenario) : scenario_(scenario) {
    if (!scenario_.replay)
        throw Error(ErrorKind::Validation, "replay policy requires a replay_script");
}

PolicyDecision ReplayPolicy::decide(const AgentState& state, int day) const {
    const auto key = std::make_pair(state.agent_id, day);
    PolicyDecision out;
    out.decision.agent_id = state.agent_id;
    out.decision.day = day;
    const auto& script = *scenario_.replay;
    if (scenario_.case_kind == CaseKind::BottleneckDeparture) {
        auto it = script.departures.find(key);
        if (it == script.departures.end())
            throw Error(ErrorKind::MissingEntry,
                        "replay script has no departure for (agent " +
                            std::to_string(state.agent_id) + ", day " + std::to_string(day) + ")");
        out.decision.departure_min = it->second;
    } else {
        auto it = script.routes.find(key);
        if (it == script.routes.end())
            throw Error(ErrorKind::MissingEntry,
                        "replay script has no route for (agent " + std::to_string(state.agent_id) +
                            ", day " + std::to_string(day) + ")");
        out.decision.route_id = it->second;
    }
    return out;
}

}  // namespace commutesim

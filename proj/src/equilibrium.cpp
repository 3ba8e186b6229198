#include "commutesim/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "commutesim/errors.hpp"

namespace commutesim {

VickreyBenchmark vickrey_window(double n_agents, double capacity_per_hour, double t_star_min,
                                double beta, double gamma, std::optional<double> alpha,
                                std::optional<double> free_flow_min) {
    if (n_agents < 1) throw Error(ErrorKind::Validation, "vickrey_window: N must be >= 1");
    if (capacity_per_hour <= 0)
        throw Error(ErrorKind::Validation, "vickrey_window: capacity must be > 0");
    if (beta <= 0 || gamma <= 0)
        throw Error(ErrorKind::Validation, "vickrey_window: beta and gamma must be > 0");

    VickreyBenchmark b;
    b.rush_length_min = n_agents / capacity_per_hour * 60.0;
    b.window_start_min = t_star_min - gamma / (beta + gamma) * b.rush_length_min;
    b.window_end_min = t_star_min + beta / (beta + gamma) * b.rush_length_min;
    if (alpha && free_flow_min)
        b.equilibrium_cost =
            *alpha * *free_flow_min + beta * gamma / (beta + gamma) * b.rush_length_min;
    return b;
}

WardropBenchmark wardrop_split_linear(const std::vector<RouteOption>& routes, double n_agents) {
    if (routes.size() < 2)
        throw Error(ErrorKind::Validation, "wardrop_split_linear: need at least 2 routes");
    for (const auto& r : routes)
        if (r.slope_min_per_agent < 0 || r.intercept_min < 0)
            throw Error(ErrorKind::Validation, "wardrop_split_linear: negative route parameter");

    const std::size_t m = routes.size();
    bool all_zero_slope = true;
    for (const auto& r : routes) all_zero_slope &= r.slope_min_per_agent == 0.0;
    if (all_zero_slope) {
        double b0 = routes[0].intercept_min;
        for (const auto& r : routes)
            if (r.intercept_min != b0)
                throw Error(ErrorKind::Validation,
                            "wardrop_split_linear: all slopes zero with unequal intercepts");
        WardropBenchmark out;
        out.flows.assign(m, n_agents / static_cast<double>(m));
        out.common_time_min = b0;
        out.is_interior = true;
        out.degeneracy_note = "all slopes zero with equal intercepts: any split is an "
                              "equilibrium; returning the uniform split";
        return out;
    }

    // Water filling over the common time tau: route r carries (tau - b_r)/a_r
    // once tau exceeds b_r. A zero-slope route with b_r < tau absorbs freely,
    // capping tau at its intercept.
    auto used_flow = [&](double tau) {
        double total = 0.0;
        for (const auto& r : routes) {
            if (tau <= r.intercept_min) continue;
            if (r.slope_min_per_agent == 0.0) return std::numeric_limits<double>::infinity();
            total += (tau - r.intercept_min) / r.slope_min_per_agent;
        }
        return total;
    };

    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& r : routes) {
        lo = std::min(lo, r.intercept_min);
        hi = std::max(hi, r.intercept_min + r.slope_min_per_agent * n_agents);
    }
    hi = std::max(hi, lo + 1.0);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (used_flow(mid) < n_agents)
            lo = mid;
        else
            hi = mid;
    }
    const double tau = 0.5 * (lo + hi);

    WardropBenchmark out;
    out.flows.assign(m, 0.0);
    double assigned = 0.0;
    std::size_t zero_slope_used = m;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& r = routes[i];
        if (tau > r.intercept_min && r.slope_min_per_agent > 0.0) {
            out.flows[i] = (tau - r.intercept_min) / r.slope_min_per_agent;
            assigned += out.flows[i];
        } else if (r.slope_min_per_agent == 0.0 && tau >= r.intercept_min - 1e-9) {
            zero_slope_used = i;
        }
    }
    double residual = n_agents - assigned;
    if (residual > 1e-9 && zero_slope_used < m) {
        out.flows[zero_slope_used] += residual;
        residual = 0.0;
    } else if (std::abs(residual) > 1e-9) {
        // Distribute rounding residue over used routes proportionally to 1/a.
        double wsum = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (out.flows[i] > 0.0) wsum += 1.0 / routes[i].slope_min_per_agent;
        if (wsum > 0.0)
            for (std::size_t i = 0; i < m; ++i)
                if (out.flows[i] > 0.0)
                    out.flows[i] += residual / routes[i].slope_min_per_agent / wsum;
    }

    // Two-route interior case has a closed form; prefer it for exactness.
    if (m == 2 && routes[0].slope_min_per_agent + routes[1].slope_min_per_agent > 0.0) {
        double f1 = (routes[1].intercept_min - routes[0].intercept_min +
                     routes[1].slope_min_per_agent * n_agents) /
                    (routes[0].slope_min_per_agent + routes[1].slope_min_per_agent);
        f1 = std::clamp(f1, 0.0, n_agents);
        out.flows = {f1, n_agents - f1};
    }

    int used = 0;
    for (std::size_t i = 0; i < m; ++i)
        if (out.flows[i] > 1e-12) ++used;
    out.is_interior = used == static_cast<int>(m);
    double t_used = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        if (out.flows[i] > 1e-12) t_used = routes[i].travel_time(out.flows[i]);
    out.common_time_min = t_used;
    return out;
}

std::vector<std::pair<int, int>> integer_equilibrium_bruteforce(
    const std::vector<RouteOption>& routes, int n_agents) {
    if (routes.size() != 2)
        throw Error(ErrorKind::Validation, "integer_equilibrium_bruteforce: two routes only");
    if (n_agents > 10000)
        throw Error(ErrorKind::Validation, "integer_equilibrium_bruteforce: N too large");

    std::vector<std::pair<int, int>> stable;
    for (int f1 = 0; f1 <= n_agents; ++f1) {
        const int f2 = n_agents - f1;
        const double t1 = routes[0].travel_time(f1);
        const double t2 = routes[1].travel_time(f2);
        bool ok = true;
        if (f1 > 0 && routes[1].travel_time(f2 + 1) < t1) ok = false;  // 1 -> 2 profits
        if (f2 > 0 && routes[0].travel_time(f1 + 1) < t2) ok = false;  // 2 -> 1 profits
        if (ok) stable.emplace_back(f1, f2);
    }
    return stable;
}

namespace {

// Exit time of a single extra departure inserted into a fixed sorted profile,
// assuming the newcomer yields to agents already departing at the same instant.
struct DeviationEvaluator {
    std::vector<double> sorted_deps;  // other agents, ascending
    std::vector<double> prefix_max;   // max over j<=k of dep_j + T_ff - h*j
    double t_ff, h;

    void build(const std::vector<double>& others, double free_flow, double headway) {
        t_ff = free_flow;
        h = headway;
        sorted_deps = others;
        std::sort(sorted_deps.begin(), sorted_deps.end());
        prefix_max.resize(sorted_deps.size());
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < sorted_deps.size(); ++j) {
            m = std::max(m, sorted_deps[j] + t_ff - h * static_cast<double>(j));
            prefix_max[j] = m;
        }
    }

    double exit_time(double dep) const {
        const auto it = std::upper_bound(sorted_deps.begin(), sorted_deps.end(), dep);
        const std::size_t pos = static_cast<std::size_t>(it - sorted_deps.begin());
        double base = dep + t_ff - h * static_cast<double>(pos);
        if (pos > 0) base = std::max(base, prefix_max[pos - 1]);
        return base + h * static_cast<double>(pos);
    }
};

}  // namespace

BestResponseOracleResult bottleneck_best_response_oracle(int n_agents,
                                                         const BottleneckCorridor& corridor,
                                                         const PersonaSpec& persona,
                                                         double grid_step_min, int max_iters) {
    if (grid_step_min <= 0)
        throw Error(ErrorKind::Validation, "bottleneck_best_response_oracle: grid step must be > 0");

    const double t_star = persona.preferred_arrival.minutes;
    const double lo = t_star - 180.0;
    const double hi = t_star + 60.0;
    const int n_grid = static_cast<int>(std::round((hi - lo) / grid_step_min)) + 1;
    std::vector<double> grid(n_grid);
    for (int i = 0; i < n_grid; ++i) grid[i] = lo + i * grid_step_min;

    const double h = corridor.headway_min();
    const double t_ff = corridor.free_flow_min;
    auto cost_at = [&](double dep, double exit_t) {
        return schedule_cost(exit_t - dep, exit_t, persona);
    };

    std::vector<double> deps(n_agents, t_star - t_ff);

    auto simulate = [&](const std::vector<double>& profile) {
        std::vector<TravelDecision> ds(n_agents);
        for (int a = 0; a < n_agents; ++a) {
            ds[a].agent_id = a;
            ds[a].departure_min = profile[a];
        }
        return simulate_bottleneck_day(ds, corridor, persona);
    };

    // Max unilateral deviation gain over the grid, pessimistic slot evaluation.
    auto max_gain = [&](const std::vector<double>& profile,
                        const std::vector<TravelOutcome>& outcomes) {
        double worst = 0.0;
        DeviationEvaluator ev;
        std::vector<double> others(n_agents - 1);
        for (int a = 0; a < n_agents; ++a) {
            int k = 0;
            for (int j = 0; j < n_agents; ++j)
                if (j != a) others[k++] = profile[j];
            ev.build(others, t_ff, h);
            double best = std::numeric_limits<double>::infinity();
            for (double d : grid) best = std::min(best, cost_at(d, ev.exit_time(d)));
            worst = std::max(worst, outcomes[a].cost - best);
        }
        return worst;
    };

    BestResponseOracleResult result;
    std::vector<double> best_profile = deps;
    double best_epsilon = std::numeric_limits<double>::infinity();
    int best_pass = 0;

    int pass = 0;
    bool converged = false;
    DeviationEvaluator ev;
    std::vector<double> others(n_agents > 1 ? n_agents - 1 : 0);
    while (pass < max_iters && !converged) {
        ++pass;
        int moved = 0;
        for (int a = 0; a < n_agents; ++a) {
            int k = 0;
            for (int j = 0; j < n_agents; ++j)
                if (j != a) others[k++] = deps[j];
            ev.build(others, t_ff, h);
            const double cur = deps[a];
            double cur_cost = cost_at(cur, ev.exit_time(cur));
            double best_c = cur_cost;
            double best_d = cur;
            for (double d : grid) {
                const double c = cost_at(d, ev.exit_time(d));
                if (c < best_c - 1e-12 ||
                    (std::abs(c - best_c) <= 1e-12 && std::abs(d - cur) < std::abs(best_d - cur))) {
                    best_c = c;
                    best_d = d;
                }
            }
            if (best_d != cur && cur_cost - best_c > 1e-9) {
                deps[a] = best_d;
                ++moved;
            }
        }
        auto outcomes = simulate(deps);
        const double eps = max_gain(deps, outcomes);
        if (eps < best_epsilon) {
            best_epsilon = eps;
            best_profile = deps;
            best_pass = pass;
        }
        if (moved == 0) converged = true;
    }

    result.departures = best_profile;
    result.outcomes = simulate(best_profile);
    result.epsilon = best_epsilon;
    result.best_iterate = best_pass;
    result.iterations = pass;
    result.converged = converged;

    double sum = 0.0;
    result.min_cost = std::numeric_limits<double>::infinity();
    result.max_cost = -std::numeric_limits<double>::infinity();
    result.min_arrival_min = std::numeric_limits<double>::infinity();
    result.max_arrival_min = -std::numeric_limits<double>::infinity();
    for (const auto& o : result.outcomes) {
        sum += o.cost;
        result.min_cost = std::min(result.min_cost, o.cost);
        result.max_cost = std::max(result.max_cost, o.cost);
        result.min_arrival_min = std::min(result.min_arrival_min, o.arrival_min);
        result.max_arrival_min = std::max(result.max_arrival_min, o.arrival_min);
    }
    result.mean_cost = sum / static_cast<double>(n_agents);
    return result;
}

}  // namespace commutesim

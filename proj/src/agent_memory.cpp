#include "commutesim/agent_memory.hpp"

#include <algorithm>
#include <cmath>

#include "commutesim/errors.hpp"
#include "commutesim/rng.hpp"

namespace commutesim {

namespace {

void fold_entry(LongTermStats& lt, const MemoryEntry& entry) {
    const double tt = entry.outcome.travel_time_min;
    if (!lt.has_typical) {
        lt.typical_travel_time_min = quantize_5min(tt);
        lt.has_typical = true;
    } else {
        lt.typical_travel_time_min =
            quantize_5min(0.8 * lt.typical_travel_time_min + 0.2 * tt);
    }
    if (!lt.has_best || entry.outcome.cost < lt.best_cost_seen) {
        lt.best_cost_seen = entry.outcome.cost;
        lt.has_best = true;
    }
    if (entry.outcome.route_id) {
        RouteStat& rs = lt.route_stats[*entry.outcome.route_id];
        rs.last_time_min = tt;
        rs.last_day = entry.day;
        rs.visit_count += 1;
    }
    lt.entries_count += 1;
}

}  // namespace

AgentState make_agent_state(int agent_id, const PersonaSpec& persona, std::uint64_t master_seed) {
    AgentState s;
    s.agent_id = agent_id;
    s.persona = persona;
    s.rng_seed = mix_seed(mix_seed(master_seed) ^ static_cast<std::uint64_t>(agent_id));
    return s;
}

void record_outcome(AgentState& state, const MemoryEntry& entry) {
    const int expected = state.history.empty() ? 1 : state.history.back().day + 1;
    if (entry.day != expected)
        throw Error(ErrorKind::Validation,
                    "record_outcome: out-of-order day " + std::to_string(entry.day) +
                        " (expected " + std::to_string(expected) + ")");
    if (entry.outcome.day != entry.day)
        throw Error(ErrorKind::Validation, "record_outcome: outcome.day != entry.day");
    state.history.push_back(entry);
    fold_entry(state.long_term, entry);
}

ShortTermView short_term_view(const AgentState& state, int k) {
    if (k < 1) throw Error(ErrorKind::Validation, "short_term_view: K must be >= 1");
    ShortTermView v;
    const std::size_t n = state.history.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(k));
    v.entries.assign(state.history.end() - take, state.history.end());
    if (v.entries.empty()) return v;

    double sum = 0.0;
    for (const auto& e : v.entries) {
        sum += e.outcome.travel_time_min;
        if (e.outcome.schedule_dev_min > 0) ++v.late_count;
        if (e.outcome.schedule_dev_min < 0) ++v.early_count;
    }
    const double m = static_cast<double>(v.entries.size());
    v.mean_tt = sum / m;

    double ss = 0.0;
    for (const auto& e : v.entries) {
        const double d = e.outcome.travel_time_min - v.mean_tt;
        ss += d * d;
    }
    v.tt_stdev = std::sqrt(ss / m);

    if (v.entries.size() >= 2) {
        // Least-squares slope of TT against the entry index.
        const double xbar = (m - 1.0) / 2.0;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < v.entries.size(); ++i) {
            const double dx = static_cast<double>(i) - xbar;
            num += dx * (v.entries[i].outcome.travel_time_min - v.mean_tt);
            den += dx * dx;
        }
        const double slope = num / den;
        if (std::abs(slope) >= 0.1) v.trend_sign = slope > 0 ? 1 : -1;
    }
    return v;
}

LongTermStats rebuild_long_term(const AgentState& state) {
    LongTermStats lt;
    for (const auto& e : state.history) fold_entry(lt, e);
    return lt;
}

}  // namespace commutesim

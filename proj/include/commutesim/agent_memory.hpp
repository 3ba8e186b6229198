#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "commutesim/scenario.hpp"
#include "commutesim/traffic.hpp"

namespace commutesim {

struct MemoryEntry {
    int day = 0;
    TravelDecision decision;
    TravelOutcome outcome;
};

struct RouteStat {
    double last_time_min = 0.0;
    int last_day = 0;
    int visit_count = 0;
};

struct LongTermStats {
    // "Fuzzy impression": EMA of travel time (weight 0.2 on the new observation)
    // quantized to a 5-minute grid after each update.
    double typical_travel_time_min = 0.0;
    bool has_typical = false;
    double best_cost_seen = 0.0;
    bool has_best = false;
    std::map<int, RouteStat> route_stats;
    int entries_count = 0;
};

struct ShortTermView {
    std::vector<MemoryEntry> entries;  // last K, most recent last
    double mean_tt = 0.0;
    double tt_stdev = 0.0;  // population stdev
    int late_count = 0;     // schedule_dev > 0
    int early_count = 0;    // schedule_dev < 0
    int trend_sign = 0;     // sign of least-squares TT slope; |slope| < 0.1 -> 0
};

struct AgentState {
    int agent_id = 0;
    PersonaSpec persona;
    std::vector<MemoryEntry> history;
    LongTermStats long_term;
    std::uint64_t rng_seed = 0;  // per-agent stream root
};

AgentState make_agent_state(int agent_id, const PersonaSpec& persona, std::uint64_t master_seed);

// Appends an entry (entry.day must be last recorded day + 1, or 1 on empty
// history) and refreshes the long-term stats incrementally.
void record_outcome(AgentState& state, const MemoryEntry& entry);

ShortTermView short_term_view(const AgentState& state, int k);

// Reference fold over the full history; equals the incrementally maintained
// stats (property-tested).
LongTermStats rebuild_long_term(const AgentState& state);

}  // namespace commutesim

#pragma once

#include <string>
#include <vector>

#include "commutesim/engine.hpp"
#include "commutesim/equilibrium.hpp"

namespace commutesim {

struct IntervalShareTable {
    std::vector<double> bin_edges_min;  // 15-minute, hour-aligned; covers all observations
    struct Group {
        int day_from = 0;
        int day_to = 0;
        std::vector<double> departure_shares_pct;  // per bin, sums to 100
        std::vector<double> arrival_shares_pct;
    };
    std::vector<Group> groups;
    int group_days = 10;
};

IntervalShareTable interval_share_table(const RunLog& log, int group_days);

// Integral over [start, end] of |empirical CDF - uniform CDF|, in minutes.
// Observations outside the window clamp the empirical CDF to 0/1.
double emd_to_uniform(const std::vector<double>& arrivals_min, double window_start_min,
                      double window_end_min);

struct GapPoint {
    int day = 0;
    double flow_gap = 0.0;       // route case: |f1 - f1*|
    double emd_min = 0.0;        // bottleneck case
    double cost_gap = 0.0;       // bottleneck case: |mean cost - equilibrium cost|
};

std::vector<GapPoint> equilibrium_gap(const RunLog& log, const VickreyBenchmark& benchmark);
std::vector<GapPoint> equilibrium_gap(const RunLog& log, const WardropBenchmark& benchmark);

// what: "days" (one row per day), "agent_days" (one row per agent-day),
// "intervals" (Table-style 15-minute shares). Returns the paths written.
std::vector<std::string> export_csv(const RunLog& log, const std::string& what,
                                    const std::string& out_dir, int group_days = 10);

std::string interval_table_csv(const IntervalShareTable& table, double t_star_min);

}  // namespace commutesim

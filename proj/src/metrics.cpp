#include "commutesim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "commutesim/errors.hpp"
#include "commutesim/time_util.hpp"

namespace commutesim {

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

IntervalShareTable interval_share_table(const RunLog& log, int group_days) {
    if (log.days.empty())
        throw Error(ErrorKind::Validation, "interval_share_table: empty run log");
    if (group_days < 1)
        throw Error(ErrorKind::Validation, "interval_share_table: group_days must be >= 1");

    double lo = 1e18, hi = -1e18;
    for (const auto& day : log.days)
        for (const auto& o : day.outcomes) {
            lo = std::min({lo, o.departure_min, o.arrival_min});
            hi = std::max({hi, o.departure_min, o.arrival_min});
        }
    const double bin = 15.0;
    double start = std::floor(lo / bin) * bin;
    double end = std::ceil(hi / bin) * bin;
    if (end <= start) end = start + bin;
    const int n_bins = static_cast<int>(std::lround((end - start) / bin));

    IntervalShareTable table;
    table.group_days = group_days;
    for (int b = 0; b <= n_bins; ++b) table.bin_edges_min.push_back(start + b * bin);

    for (std::size_t g0 = 0; g0 < log.days.size(); g0 += group_days) {
        const std::size_t g1 = std::min(log.days.size(), g0 + group_days);
        IntervalShareTable::Group group;
        group.day_from = log.days[g0].day;
        group.day_to = log.days[g1 - 1].day;
        std::vector<int> dep_counts(n_bins, 0), arr_counts(n_bins, 0);
        long total = 0;
        for (std::size_t d = g0; d < g1; ++d) {
            for (const auto& o : log.days[d].outcomes) {
                const int bd = std::clamp(
                    static_cast<int>(std::floor((o.departure_min - start) / bin)), 0, n_bins - 1);
                const int ba = std::clamp(
                    static_cast<int>(std::floor((o.arrival_min - start) / bin)), 0, n_bins - 1);
                dep_counts[bd] += 1;
                arr_counts[ba] += 1;
                ++total;
            }
        }
        for (int b = 0; b < n_bins; ++b) {
            group.departure_shares_pct.push_back(100.0 * dep_counts[b] / total);
            group.arrival_shares_pct.push_back(100.0 * arr_counts[b] / total);
        }
        table.groups.push_back(std::move(group));
    }
    return table;
}

double emd_to_uniform(const std::vector<double>& arrivals_min, double window_start_min,
                      double window_end_min) {
    if (arrivals_min.empty()) throw Error(ErrorKind::Validation, "emd_to_uniform: no arrivals");
    if (!(window_start_min < window_end_min))
        throw Error(ErrorKind::Validation, "emd_to_uniform: window start must precede end");

    std::vector<double> xs = arrivals_min;
    std::sort(xs.begin(), xs.end());
    const double L = window_end_min - window_start_min;
    const double n = static_cast<double>(xs.size());

    // Breakpoints of the empirical step function clipped to the window.
    std::vector<double> pts;
    pts.push_back(window_start_min);
    for (double x : xs)
        if (x > window_start_min && x < window_end_min) pts.push_back(x);
    pts.push_back(window_end_min);

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double p0 = pts[i], p1 = pts[i + 1];
        if (p1 <= p0) continue;
        // Empirical CDF is constant on (p0, p1).
        const double c =
            static_cast<double>(std::upper_bound(xs.begin(), xs.end(), p0) - xs.begin()) / n;
        const double f0 = c - (p0 - window_start_min) / L;
        const double f1 = c - (p1 - window_start_min) / L;
        const double w = p1 - p0;
        if (f0 * f1 >= 0.0) {
            total += std::abs(f0 + f1) / 2.0 * w;
        } else {
            const double t = f0 / (f0 - f1);  // zero crossing
            total += (std::abs(f0) * t + std::abs(f1) * (1.0 - t)) / 2.0 * w;
        }
    }
    return total;
}

std::vector<GapPoint> equilibrium_gap(const RunLog& log, const VickreyBenchmark& benchmark) {
    if (log.scenario.case_kind != CaseKind::BottleneckDeparture)
        throw Error(ErrorKind::WrongCase, "equilibrium_gap: Vickrey benchmark on a route-case log");
    std::vector<GapPoint> series;
    for (const auto& day : log.days) {
        GapPoint p;
        p.day = day.day;
        std::vector<double> arrivals;
        arrivals.reserve(day.outcomes.size());
        for (const auto& o : day.outcomes) arrivals.push_back(o.arrival_min);
        p.emd_min =
            emd_to_uniform(arrivals, benchmark.window_start_min, benchmark.window_end_min);
        if (benchmark.equilibrium_cost)
            p.cost_gap = std::abs(day.mean_cost - *benchmark.equilibrium_cost);
        series.push_back(p);
    }
    return series;
}

std::vector<GapPoint> equilibrium_gap(const RunLog& log, const WardropBenchmark& benchmark) {
    if (log.scenario.case_kind != CaseKind::TwoRoute)
        throw Error(ErrorKind::WrongCase, "equilibrium_gap: Wardrop benchmark on a bottleneck log");
    std::vector<GapPoint> series;
    for (const auto& day : log.days) {
        GapPoint p;
        p.day = day.day;
        // |f_r - f_r*| for the first route (two-route instances); benchmark
        // flows follow the scenario's route order.
        const int rid = log.scenario.routes.empty() ? 1 : log.scenario.routes.front().route_id;
        const auto it = day.route_flows.find(rid);
        const double f1 = it == day.route_flows.end() ? 0.0 : it->second;
        const double f1_star = benchmark.flows.empty() ? 0.0 : benchmark.flows.front();
        p.flow_gap = std::abs(f1 - f1_star);
        series.push_back(p);
    }
    return series;
}

std::string interval_table_csv(const IntervalShareTable& table, double t_star_min) {
    std::string csv = "kind,bin_start_min,bin_label";
    for (const auto& g : table.groups)
        csv += ",d" + std::to_string(g.day_from) + "-d" + std::to_string(g.day_to);
    csv += "\n";
    const int n_bins = static_cast<int>(table.bin_edges_min.size()) - 1;
    for (const char* kind : {"departure", "arrival"}) {
        const bool arrival = std::string(kind) == "arrival";
        for (int b = 0; b < n_bins; ++b) {
            const double b0 = table.bin_edges_min[b];
            const double b1 = table.bin_edges_min[b + 1];
            std::string label = format_hhmm(b0) + "-" + format_hhmm(b1);
            // Late-bin marker: bins starting at or after t* (an arrival at
            // exactly t* is on time, so its bin starts the marked region).
            if (arrival && b0 >= t_star_min) label += "*";
            csv += std::string(kind) + "," + fmt(b0) + "," + label;
            for (const auto& g : table.groups)
                csv += "," + fmt(arrival ? g.arrival_shares_pct[b] : g.departure_shares_pct[b]);
            csv += "\n";
        }
    }
    return csv;
}

std::vector<std::string> export_csv(const RunLog& log, const std::string& what,
                                    const std::string& out_dir, int group_days) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;

    auto write_file = [&](const std::string& name, const std::string& content) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
        out << content;
        written.push_back(path);
    };

    if (what == "days") {
        std::string csv = "day,mean_tt_min,max_tt_min,mean_cost,late_share,hist_l1_vs_prev,"
                          "max_flow_delta_vs_prev";
        std::vector<int> rids;
        for (const auto& r : log.scenario.routes) rids.push_back(r.route_id);
        for (int rid : rids) csv += ",f" + std::to_string(rid);
        csv += "\n";
        for (const auto& d : log.days) {
            csv += std::to_string(d.day) + "," + fmt(d.mean_tt) + "," + fmt(d.max_tt) + "," +
                   fmt(d.mean_cost) + "," + fmt(d.late_share) + "," + fmt(d.hist_l1_vs_prev) +
                   "," + std::to_string(d.max_flow_delta_vs_prev);
            for (int rid : rids) {
                const auto it = d.route_flows.find(rid);
                csv += "," + std::to_string(it == d.route_flows.end() ? 0 : it->second);
            }
            csv += "\n";
        }
        write_file("days.csv", csv);
    } else if (what == "agent_days") {
        std::string csv =
            "day,agent_id,departure_min,departure_hhmm,arrival_min,arrival_hhmm,"
            "travel_time_min,queue_delay_min,schedule_dev_min,cost,route_id\n";
        for (const auto& d : log.days) {
            for (const auto& o : d.outcomes) {
                csv += std::to_string(d.day) + "," + std::to_string(o.agent_id) + "," +
                       fmt(o.departure_min) + "," + format_hhmm(o.departure_min) + "," +
                       fmt(o.arrival_min) + "," + format_hhmm(o.arrival_min) + "," +
                       fmt(o.travel_time_min) + "," + fmt(o.queue_delay_min) + "," +
                       fmt(o.schedule_dev_min) + "," + fmt(o.cost) + "," +
                       (o.route_id ? std::to_string(*o.route_id) : "") + "\n";
            }
        }
        write_file("agent_days.csv", csv);
    } else if (what == "intervals") {
        const IntervalShareTable table = interval_share_table(log, group_days);
        write_file("intervals.csv",
                   interval_table_csv(table, log.scenario.persona.preferred_arrival.minutes));
    } else {
        throw Error(ErrorKind::Validation, "export: unknown selector '" + what +
                                               "' (use days | agent_days | intervals)");
    }
    return written;
}

}  // namespace commutesim

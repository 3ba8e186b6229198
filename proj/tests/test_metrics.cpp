#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commutesim/errors.hpp"
#include "commutesim/metrics.hpp"
#include "commutesim/rng.hpp"

using namespace commutesim;

namespace {

RunLog log_with_outcomes(const std::vector<std::vector<std::pair<double, double>>>& days_dep_arr,
                         CaseKind kind = CaseKind::BottleneckDeparture) {
    RunLog log;
    log.scenario = kind == CaseKind::BottleneckDeparture ? builtin_scenario("bottleneck_40")
                                                         : builtin_scenario("two_route_40");
    int day = 0;
    for (const auto& recs : days_dep_arr) {
        DayRecord r;
        r.day = ++day;
        int agent = 0;
        for (auto [dep, arr] : recs) {
            TravelOutcome o;
            o.agent_id = agent++;
            o.day = r.day;
            o.departure_min = dep;
            o.arrival_min = arr;
            o.travel_time_min = arr - dep;
            r.outcomes.push_back(o);
        }
        log.days.push_back(r);
    }
    return log;
}

}  // namespace

TEST_CASE("interval shares from a hand-counted example") {
    // three observations in one group: 8:05, 8:10 -> [8:00,8:15); 8:20 -> [8:15,8:30)
    RunLog log = log_with_outcomes({{{485.0, 485.0}, {490.0, 490.0}, {500.0, 500.0}}});
    IntervalShareTable t = interval_share_table(log, 10);
    REQUIRE(t.groups.size() == 1);
    CHECK(t.bin_edges_min.front() == 480.0);
    REQUIRE(t.groups[0].departure_shares_pct.size() >= 2);
    CHECK(t.groups[0].departure_shares_pct[0] == doctest::Approx(66.6666667));
    CHECK(t.groups[0].departure_shares_pct[1] == doctest::Approx(33.3333333));
}

TEST_CASE("a single-bin day is 100 percent") {
    RunLog log = log_with_outcomes({{{481.0, 482.0}, {483.0, 484.0}}});
    IntervalShareTable t = interval_share_table(log, 10);
    CHECK(t.groups[0].departure_shares_pct[0] == doctest::Approx(100.0));
    CHECK(t.groups[0].arrival_shares_pct[0] == doctest::Approx(100.0));
}

TEST_CASE("shares sum to 100 within 0.01 and are multiples of 0.25 for 400 observations") {
    Rng rng(11);
    std::vector<std::vector<std::pair<double, double>>> days;
    for (int d = 0; d < 10; ++d) {
        std::vector<std::pair<double, double>> recs;
        for (int a = 0; a < 40; ++a) {
            const double dep = quantize_minute(rng.uniform(470.0, 530.0));
            recs.push_back({dep, dep + rng.uniform(30.0, 60.0)});
        }
        days.push_back(recs);
    }
    RunLog log = log_with_outcomes(days);
    IntervalShareTable t = interval_share_table(log, 10);
    REQUIRE(t.groups.size() == 1);
    double dep_sum = 0.0, arr_sum = 0.0;
    for (double v : t.groups[0].departure_shares_pct) {
        dep_sum += v;
        CHECK(std::abs(v / 0.25 - std::round(v / 0.25)) < 1e-9);
    }
    for (double v : t.groups[0].arrival_shares_pct) arr_sum += v;
    CHECK(dep_sum == doctest::Approx(100.0).epsilon(1e-4));
    CHECK(arr_sum == doctest::Approx(100.0).epsilon(1e-4));
}

TEST_CASE("partial final group still sums to 100") {
    Rng rng(12);
    std::vector<std::vector<std::pair<double, double>>> days;
    for (int d = 0; d < 13; ++d) {  // 13 days -> groups of 10 and 3
        std::vector<std::pair<double, double>> recs;
        for (int a = 0; a < 7; ++a) {
            const double dep = rng.uniform(450.0, 560.0);
            recs.push_back({dep, dep + 30.0});
        }
        days.push_back(recs);
    }
    RunLog log = log_with_outcomes(days);
    IntervalShareTable t = interval_share_table(log, 10);
    REQUIRE(t.groups.size() == 2);
    CHECK(t.groups[1].day_from == 11);
    CHECK(t.groups[1].day_to == 13);
    for (const auto& g : t.groups) {
        double sum = 0.0;
        for (double v : g.departure_shares_pct) sum += v;
        CHECK(sum == doctest::Approx(100.0).epsilon(1e-4));
    }
}

TEST_CASE("emd of a uniform grid is below the discretization bound") {
    const double lo = 503.6363636, hi = 543.6363636;
    const double L = hi - lo;
    for (int n : {10, 40, 400}) {
        std::vector<double> xs;
        for (int i = 0; i < n; ++i) xs.push_back(lo + (i + 0.5) / n * L);
        CHECK(emd_to_uniform(xs, lo, hi) <= L / (2.0 * n) + 1e-9);
    }
}

TEST_CASE("all arrivals at the window start give half the window") {
    std::vector<double> xs(25, 500.0);
    CHECK(emd_to_uniform(xs, 500.0, 540.0) == doctest::Approx(20.0));
}

TEST_CASE("emd is zero only when the empirical cdf tracks the uniform") {
    const double lo = 0.0, hi = 10.0;
    std::vector<double> grid;
    for (int i = 0; i < 1000; ++i) grid.push_back(lo + (i + 0.5) / 1000.0 * (hi - lo));
    CHECK(emd_to_uniform(grid, lo, hi) < 0.01);
    std::vector<double> lumped(1000, 2.5);
    CHECK(emd_to_uniform(lumped, lo, hi) > 1.0);
}

TEST_CASE("emd rejects empty input and inverted windows") {
    CHECK_THROWS_AS(emd_to_uniform({}, 0.0, 1.0), Error);
    CHECK_THROWS_AS(emd_to_uniform({1.0}, 5.0, 4.0), Error);
}

TEST_CASE("observations outside the window clamp to cdf 0/1") {
    // everything far before the window start behaves like mass at the start
    std::vector<double> early(10, 100.0);
    CHECK(emd_to_uniform(early, 500.0, 540.0) == doctest::Approx(20.0));
}

TEST_CASE("route-case gap series") {
    RunLog log;
    log.scenario = builtin_scenario("two_route_40");
    for (int d = 1; d <= 3; ++d) {
        DayRecord r;
        r.day = d;
        r.route_flows = d == 1 ? std::map<int, int>{{1, 40}, {2, 0}}
                               : std::map<int, int>{{1, 15}, {2, 25}};
        log.days.push_back(r);
    }
    WardropBenchmark b = wardrop_split_linear(log.scenario.routes, 40.0);
    auto series = equilibrium_gap(log, b);
    REQUIRE(series.size() == 3);
    CHECK(series[0].flow_gap == doctest::Approx(25.0));
    CHECK(series[1].flow_gap == doctest::Approx(0.0));
    CHECK(series[2].flow_gap == doctest::Approx(0.0));
}

TEST_CASE("empty log gives an empty gap series") {
    RunLog log;
    log.scenario = builtin_scenario("two_route_40");
    WardropBenchmark b = wardrop_split_linear(log.scenario.routes, 40.0);
    CHECK(equilibrium_gap(log, b).empty());
}

TEST_CASE("case mismatch is rejected") {
    RunLog log;
    log.scenario = builtin_scenario("two_route_40");
    VickreyBenchmark vb = vickrey_window(40, 60.0, 540.0, 1.0, 10.0);
    CHECK_THROWS_AS(equilibrium_gap(log, vb), Error);
}

TEST_CASE("bottleneck gap series reports emd and cost gap") {
    Scenario s = builtin_scenario("bottleneck_40");
    s.n_agents = 8;
    s.horizon_days = 3;
    RunLog log = run_scenario(s);
    VickreyBenchmark b = vickrey_window(8, 60.0, 540.0, 1.0, 10.0, 3.0, 30.0);
    auto series = equilibrium_gap(log, b);
    REQUIRE(series.size() == 3);
    for (const auto& p : series) {
        CHECK(p.emd_min >= 0.0);
        CHECK(p.cost_gap >= 0.0);
    }
}

TEST_CASE("exports write stable csv headers") {
    Scenario s = builtin_scenario("two_route_40");
    s.n_agents = 4;
    s.horizon_days = 3;
    RunLog log = run_scenario(s);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "cs_export_test").string();
    std::filesystem::remove_all(dir);

    auto days_files = export_csv(log, "days", dir);
    REQUIRE(days_files.size() == 1);
    std::ifstream df(days_files[0]);
    std::string header;
    std::getline(df, header);
    CHECK(header ==
          "day,mean_tt_min,max_tt_min,mean_cost,late_share,hist_l1_vs_prev,"
          "max_flow_delta_vs_prev,f1,f2");

    auto agent_files = export_csv(log, "agent_days", dir);
    std::ifstream af(agent_files[0]);
    std::getline(af, header);
    CHECK(header ==
          "day,agent_id,departure_min,departure_hhmm,arrival_min,arrival_hhmm,travel_time_min,"
          "queue_delay_min,schedule_dev_min,cost,route_id");
    int rows = 0;
    std::string line;
    while (std::getline(af, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 12);  // 4 agents x 3 days

    auto interval_files = export_csv(log, "intervals", dir);
    std::ifstream inf(interval_files[0]);
    std::getline(inf, header);
    CHECK(header.rfind("kind,bin_start_min,bin_label", 0) == 0);

    CHECK_THROWS_AS(export_csv(log, "nonsense", dir), Error);
}

TEST_CASE("late arrival bins are starred from t* on") {
    RunLog log = log_with_outcomes({{{480.0, 535.0}, {480.0, 545.0}}});
    IntervalShareTable t = interval_share_table(log, 10);
    std::string csv = interval_table_csv(t, 540.0);
    CHECK(csv.find("09:00-09:15*") != std::string::npos);
    CHECK(csv.find("08:45-09:00*") == std::string::npos);
}

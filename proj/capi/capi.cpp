#include "commutesim.h"

#include <cstring>
#include <fstream>
#include <string>

#include "commutesim/engine.hpp"
#include "commutesim/equilibrium.hpp"
#include "commutesim/errors.hpp"
#include "commutesim/gateway.hpp"
#include "commutesim/metrics.hpp"
#include "commutesim/scenario.hpp"
#include "commutesim/time_util.hpp"

using namespace commutesim;
using nlohmann::json;

struct cs_scenario {
    Scenario value;
};
struct cs_runlog {
    RunLog value;
};
struct cs_mock_server {
    MockLlmServer server;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& message) {
    g_last_error = message;
    return code;
}

int code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Parse:
        case ErrorKind::Validation:
        case ErrorKind::OutOfRange:
        case ErrorKind::WrongCase:
            return CS_ERR_VALIDATION;
        default:
            return CS_ERR_RUNTIME;
    }
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return CS_OK;
    } catch (const Error& e) {
        return fail(code_for(e), e.what());
    } catch (const std::exception& e) {
        return fail(CS_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(CS_ERR_RUNTIME, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json benchmark_json_for(const Scenario& s) {
    json j;
    if (s.case_kind == CaseKind::BottleneckDeparture) {
        const auto& c = *s.corridor;
        const auto& w = s.persona.cost_weights;
        VickreyBenchmark b = vickrey_window(s.n_agents, c.capacity_per_hour,
                                            s.persona.preferred_arrival.minutes, w.early_per_min,
                                            w.late_per_min, w.invehicle_per_min, c.free_flow_min);
        j["kind"] = "vickrey";
        j["window_start_min"] = b.window_start_min;
        j["window_end_min"] = b.window_end_min;
        j["window_start_hhmm"] = format_hhmm(b.window_start_min);
        j["window_end_hhmm"] = format_hhmm(b.window_end_min);
        j["rush_length_min"] = b.rush_length_min;
        j["equilibrium_cost"] = *b.equilibrium_cost;
    } else {
        WardropBenchmark b = wardrop_split_linear(s.routes, s.n_agents);
        j["kind"] = "wardrop";
        json flows = json::object();
        for (std::size_t i = 0; i < s.routes.size(); ++i)
            flows[std::to_string(s.routes[i].route_id)] = b.flows[i];
        j["flows"] = flows;
        j["common_time_min"] = b.common_time_min;
        j["is_interior"] = b.is_interior;
        if (!b.degeneracy_note.empty()) j["degeneracy_note"] = b.degeneracy_note;
        if (s.routes.size() == 2) {
            json splits = json::array();
            for (const auto& [f1, f2] : integer_equilibrium_bruteforce(s.routes, s.n_agents))
                splits.push_back(json::array({f1, f2}));
            j["integer_equilibria"] = splits;
        }
    }
    return j;
}

json day_summary(const DayRecord& r) {
    json flows = json::object();
    for (const auto& [rid, c] : r.route_flows) flows[std::to_string(rid)] = c;
    return {{"day", r.day},
            {"mean_tt", r.mean_tt},
            {"mean_cost", r.mean_cost},
            {"late_share", r.late_share},
            {"flows", flows},
            {"hist_l1_vs_prev", r.hist_l1_vs_prev},
            {"llm_fallbacks", r.llm_fallbacks},
            {"llm_self_corrections", r.llm_self_corrections}};
}

}  // namespace

extern "C" {

const char* cs_version(void) { return "commutesim 1.0.0"; }

const char* cs_last_error(void) { return g_last_error.c_str(); }

void cs_string_free(char* s) { delete[] s; }

int cs_scenario_load(const char* path, cs_scenario** out) {
    return guarded([&] { *out = new cs_scenario{load_scenario(path)}; });
}

int cs_scenario_builtin(const char* name, cs_scenario** out) {
    return guarded([&] { *out = new cs_scenario{builtin_scenario(name)}; });
}

int cs_scenario_from_json(const char* json_text, cs_scenario** out) {
    return guarded([&] {
        json j = json::parse(json_text, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Parse, "scenario JSON does not parse");
        *out = new cs_scenario{scenario_from_json(j)};
    });
}

int cs_scenario_to_json(const cs_scenario* s, char** out_json) {
    return guarded([&] { *out_json = dup_string(scenario_to_json(s->value).dump(2)); });
}

int cs_scenario_apply_overrides(const cs_scenario* s, const char* overrides_json,
                                cs_scenario** out) {
    return guarded([&] {
        json j = json::parse(overrides_json, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Parse, "override JSON does not parse");
        *out = new cs_scenario{apply_overrides(s->value, j)};
    });
}

int cs_scenario_validate(const cs_scenario* s, char** out_violations_json) {
    return guarded([&] {
        json arr = json::array();
        for (const auto& v : validate_scenario(s->value))
            arr.push_back({{"field", v.field}, {"message", v.message}, {"fatal", v.fatal}});
        *out_violations_json = dup_string(arr.dump());
    });
}

int cs_scenario_save(const cs_scenario* s, const char* path) {
    return guarded([&] { save_scenario(s->value, path); });
}

void cs_scenario_free(cs_scenario* s) { delete s; }

int cs_builtin_names(char** out_json) {
    return guarded([&] {
        json arr = json::array();
        for (const auto& n : builtin_scenario_names()) arr.push_back(n);
        *out_json = dup_string(arr.dump());
    });
}

int cs_run(const cs_scenario* s, const char* runlog_path, cs_day_callback on_day, void* user,
           cs_runlog** out) {
    return guarded([&] {
        auto violations = validate_scenario(s->value);
        std::string fatal;
        for (const auto& v : violations)
            if (v.fatal) fatal += (fatal.empty() ? "" : "; ") + v.field + ": " + v.message;
        if (!fatal.empty()) throw Error(ErrorKind::Validation, fatal);

        Engine::DayCallback cb;
        if (on_day)
            cb = [&](const DayRecord& r) { on_day(day_summary(r).dump().c_str(), user); };
        RunLog log = run_scenario(s->value, runlog_path ? runlog_path : "", cb);
        *out = new cs_runlog{std::move(log)};
    });
}

int cs_runlog_load(const char* path, cs_runlog** out) {
    return guarded([&] { *out = new cs_runlog{load_runlog(path)}; });
}

int cs_runlog_save(const cs_runlog* log, const char* path) {
    return guarded([&] { save_runlog(log->value, path); });
}

int cs_runlog_summary(const cs_runlog* log, char** out_json) {
    return guarded([&] {
        const RunLog& l = log->value;
        json j = {{"days", l.days.size()},
                  {"n_agents", l.scenario.n_agents},
                  {"case_kind", to_string(l.scenario.case_kind)},
                  {"policy_kind", l.policy_kind},
                  {"master_seed", l.master_seed},
                  {"convergence",
                   {{"verdict", to_string(l.convergence.verdict)},
                    {"day", l.convergence.day ? json(*l.convergence.day) : json(nullptr)}}},
                  {"llm_totals",
                   {{"fallbacks", l.total_llm_fallbacks},
                    {"self_corrections", l.total_llm_self_corrections}}}};
        if (!l.days.empty()) {
            json flows = json::object();
            for (const auto& [rid, c] : l.days.back().route_flows)
                flows[std::to_string(rid)] = c;
            j["final_flows"] = flows;
            j["final_mean_cost"] = l.days.back().mean_cost;
            j["final_late_share"] = l.days.back().late_share;
        }
        if (!l.cassette_path.empty())
            j["cassette"] = {{"path", l.cassette_path}, {"digest", l.cassette_digest}};
        if (!l.prompt_template_hash.empty()) j["prompt_template_hash"] = l.prompt_template_hash;
        *out_json = dup_string(j.dump(2));
    });
}

void cs_runlog_free(cs_runlog* log) { delete log; }

int cs_benchmark(const cs_scenario* s, char** out_json) {
    return guarded([&] {
        auto violations = validate_scenario(s->value);
        for (const auto& v : violations)
            if (v.fatal) throw Error(ErrorKind::Validation, v.field + ": " + v.message);
        *out_json = dup_string(benchmark_json_for(s->value).dump(2));
    });
}

int cs_report(const cs_runlog* log, const char* benchmark_json, const char* out_dir,
              int group_days, char** out_summary_json) {
    return guarded([&] {
        const RunLog& l = log->value;
        json b = json::parse(benchmark_json, nullptr, false);
        if (b.is_discarded()) throw Error(ErrorKind::Parse, "benchmark JSON does not parse");
        const std::string kind = b.value("kind", "");

        std::vector<GapPoint> gaps;
        if (kind == "vickrey") {
            if (l.scenario.case_kind != CaseKind::BottleneckDeparture)
                throw Error(ErrorKind::WrongCase, "vickrey benchmark vs route-case run log");
            VickreyBenchmark vb;
            vb.window_start_min = b.at("window_start_min").get<double>();
            vb.window_end_min = b.at("window_end_min").get<double>();
            vb.rush_length_min = b.value("rush_length_min", 0.0);
            if (b.contains("equilibrium_cost"))
                vb.equilibrium_cost = b.at("equilibrium_cost").get<double>();
            gaps = equilibrium_gap(l, vb);
        } else if (kind == "wardrop") {
            if (l.scenario.case_kind != CaseKind::TwoRoute)
                throw Error(ErrorKind::WrongCase, "wardrop benchmark vs bottleneck-case run log");
            WardropBenchmark wb;
            for (const auto& r : l.scenario.routes)
                wb.flows.push_back(b.at("flows").at(std::to_string(r.route_id)).get<double>());
            wb.common_time_min = b.value("common_time_min", 0.0);
            gaps = equilibrium_gap(l, wb);
        } else {
            throw Error(ErrorKind::Validation, "benchmark JSON: unknown kind '" + kind + "'");
        }

        export_csv(l, "days", out_dir, group_days);
        export_csv(l, "intervals", out_dir, group_days);
        {
            std::string csv = kind == "vickrey" ? "day,emd_min,cost_gap\n" : "day,flow_gap\n";
            for (const auto& g : gaps) {
                if (kind == "vickrey")
                    csv += std::to_string(g.day) + "," + std::to_string(g.emd_min) + "," +
                           std::to_string(g.cost_gap) + "\n";
                else
                    csv += std::to_string(g.day) + "," + std::to_string(g.flow_gap) + "\n";
            }
            std::string path = std::string(out_dir) + "/gaps.csv";
            std::ofstream f(path, std::ios::binary);
            if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
            f << csv;
        }

        json summary = {{"convergence",
                         {{"verdict", to_string(l.convergence.verdict)},
                          {"day", l.convergence.day ? json(*l.convergence.day) : json(nullptr)}}},
                        {"benchmark_kind", kind}};
        if (!gaps.empty()) {
            if (kind == "vickrey") {
                summary["final_emd_min"] = gaps.back().emd_min;
                summary["final_cost_gap"] = gaps.back().cost_gap;
            } else {
                summary["final_flow_gap"] = gaps.back().flow_gap;
            }
        }
        *out_summary_json = dup_string(summary.dump(2));
    });
}

int cs_export(const cs_runlog* log, const char* what, const char* out_dir, int group_days,
              char** out_files_json) {
    return guarded([&] {
        json arr = json::array();
        for (const auto& p : export_csv(log->value, what, out_dir, group_days)) arr.push_back(p);
        *out_files_json = dup_string(arr.dump());
    });
}

int cs_mock_server_start(const char* rules_json, int port, cs_mock_server** out) {
    return guarded([&] {
        json j = json::parse(rules_json, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Parse, "mock rules JSON does not parse");
        *out = new cs_mock_server{MockLlmServer(MockLlmServer::rules_from_json(j), port)};
    });
}

int cs_mock_server_port(const cs_mock_server* m) { return m->server.port(); }

int cs_mock_server_url(const cs_mock_server* m, char** out_url) {
    return guarded([&] { *out_url = dup_string(m->server.endpoint_url()); });
}

void cs_mock_server_stop(cs_mock_server* m) { delete m; }

}  // extern "C"

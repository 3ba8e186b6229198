// commute: scenario runner, benchmark calculator, and report generator.
// Talks to the core exclusively through the C API in commutesim.h.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "commutesim.h"

#include "CLI11.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct ScenarioHandle {
    cs_scenario* ptr = nullptr;
    ~ScenarioHandle() { cs_scenario_free(ptr); }
};
struct RunlogHandle {
    cs_runlog* ptr = nullptr;
    ~RunlogHandle() { cs_runlog_free(ptr); }
};

std::string take_string(char* s) {
    std::string out = s ? s : "";
    cs_string_free(s);
    return out;
}

int report_error(int code) {
    std::fprintf(stderr, "error: %s\n", cs_last_error());
    return code == CS_ERR_VALIDATION ? kExitValidation : kExitRuntime;
}

// Options shared by subcommands that need a scenario.
struct ScenarioArgs {
    std::string builtin;
    std::string path;
    std::vector<std::string> overrides;  // key=value, flattened into JSON below

    void attach(CLI::App* cmd) {
        auto* b = cmd->add_option("--builtin", builtin, "builtin scenario name");
        auto* s = cmd->add_option("--scenario", path, "scenario JSON file");
        b->excludes(s);
        cmd->add_option("--set", overrides,
                        "override a scenario field, e.g. --set master_seed=7 "
                        "--set persona.exploration_rate=0.1");
    }
};

json value_from_text(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (!v.is_discarded()) return v;
    return json(text);  // bare string
}

// key.path=value pairs -> nested JSON document
json overrides_to_json(const std::vector<std::string>& kvs) {
    json doc = json::object();
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq);
        json value = value_from_text(kv.substr(eq + 1));
        json* node = &doc;
        std::stringstream ss(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
        (*node)[parts.back()] = value;
    }
    return doc;
}

int open_scenario(const ScenarioArgs& args, ScenarioHandle& handle,
                  const json& extra_overrides = json::object()) {
    int rc;
    if (!args.builtin.empty())
        rc = cs_scenario_builtin(args.builtin.c_str(), &handle.ptr);
    else if (!args.path.empty())
        rc = cs_scenario_load(args.path.c_str(), &handle.ptr);
    else {
        std::fprintf(stderr, "error: give --builtin NAME or --scenario FILE\n");
        return kExitValidation;
    }
    if (rc != CS_OK) return report_error(rc);

    json merged = overrides_to_json(args.overrides);
    merged.merge_patch(extra_overrides);
    if (!merged.empty()) {
        cs_scenario* patched = nullptr;
        rc = cs_scenario_apply_overrides(handle.ptr, merged.dump().c_str(), &patched);
        if (rc != CS_OK) return report_error(rc);
        cs_scenario_free(handle.ptr);
        handle.ptr = patched;
    }
    return -1;  // keep going
}

void write_manifest(const std::string& out_dir, const json& entries) {
    std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::binary);
    f << entries.dump(2) << "\n";
}

void print_day_line(const char* day_summary_json, void*) {
    json j = json::parse(day_summary_json);
    std::string line = "day " + std::to_string(j.at("day").get<int>());
    char buf[64];
    std::snprintf(buf, sizeof(buf), "  mean_tt=%.1f  mean_cost=%.1f  late=%.0f%%",
                  j.at("mean_tt").get<double>(), j.at("mean_cost").get<double>(),
                  j.at("late_share").get<double>() * 100.0);
    line += buf;
    const json& flows = j.at("flows");
    if (!flows.empty()) {
        line += "  flows=[";
        bool first = true;
        for (const auto& [rid, c] : flows.items()) {
            if (!first) line += ", ";
            line += rid + ":" + std::to_string(c.get<int>());
            first = false;
        }
        line += "]";
    }
    if (j.at("llm_fallbacks").get<int>() > 0)
        line += "  fallbacks=" + std::to_string(j.at("llm_fallbacks").get<int>());
    std::printf("%s\n", line.c_str());
}

int cmd_run(const ScenarioArgs& sargs, const std::string& out_dir, int group_days, bool quiet) {
    ScenarioHandle scenario;
    if (int rc = open_scenario(sargs, scenario); rc >= 0) return rc;

    fs::create_directories(out_dir);
    const std::string runlog_path = (fs::path(out_dir) / "runlog.jsonl").string();

    RunlogHandle log;
    int rc = cs_run(scenario.ptr, runlog_path.c_str(), quiet ? nullptr : print_day_line, nullptr,
                    &log.ptr);
    if (rc != CS_OK) return report_error(rc);

    char* summary_text = nullptr;
    if ((rc = cs_runlog_summary(log.ptr, &summary_text)) != CS_OK) return report_error(rc);
    std::string summary = take_string(summary_text);

    json manifest_files = json::array({runlog_path});
    for (const char* what : {"days", "agent_days", "intervals"}) {
        char* files = nullptr;
        if ((rc = cs_export(log.ptr, what, out_dir.c_str(), group_days, &files)) != CS_OK)
            return report_error(rc);
        for (const auto& p : json::parse(take_string(files))) manifest_files.push_back(p);
    }

    char* scenario_text = nullptr;
    if ((rc = cs_scenario_to_json(scenario.ptr, &scenario_text)) != CS_OK)
        return report_error(rc);
    const std::string scn_path = (fs::path(out_dir) / "scenario.resolved.json").string();
    std::ofstream(scn_path, std::ios::binary) << take_string(scenario_text) << "\n";
    manifest_files.push_back(scn_path);

    write_manifest(out_dir, json{{"artifacts", manifest_files}, {"summary", json::parse(summary)}});
    std::printf("%s\n", summary.c_str());
    std::printf("run log: %s\n", runlog_path.c_str());
    return 0;
}

int cmd_benchmark(const ScenarioArgs& sargs, const std::string& out_path) {
    ScenarioHandle scenario;
    if (int rc = open_scenario(sargs, scenario); rc >= 0) return rc;

    char* text = nullptr;
    int rc = cs_benchmark(scenario.ptr, &text);
    if (rc != CS_OK) return report_error(rc);
    std::string body = take_string(text);

    json j = json::parse(body);
    if (j.at("kind") == "vickrey") {
        std::printf("Vickrey bottleneck benchmark\n");
        std::printf("  arrival window : %s - %s\n",
                    j.at("window_start_hhmm").get<std::string>().c_str(),
                    j.at("window_end_hhmm").get<std::string>().c_str());
        std::printf("  rush length    : %.2f min\n", j.at("rush_length_min").get<double>());
        std::printf("  equilibrium cost: %.2f\n", j.at("equilibrium_cost").get<double>());
    } else {
        std::printf("Wardrop user-equilibrium benchmark\n");
        for (const auto& [rid, f] : j.at("flows").items())
            std::printf("  route %s flow  : %.3f\n", rid.c_str(), f.get<double>());
        std::printf("  common time    : %.3f min\n", j.at("common_time_min").get<double>());
    }
    if (!out_path.empty()) {
        std::ofstream(out_path, std::ios::binary) << body << "\n";
        std::printf("benchmark file: %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_report(const std::string& runlog_path, const std::string& benchmark_path,
               const std::string& out_dir, int group_days) {
    RunlogHandle log;
    int rc = cs_runlog_load(runlog_path.c_str(), &log.ptr);
    if (rc != CS_OK) return report_error(rc);

    std::ifstream bf(benchmark_path);
    if (!bf) {
        std::fprintf(stderr, "error: cannot open benchmark file %s\n", benchmark_path.c_str());
        return kExitValidation;
    }
    std::stringstream ss;
    ss << bf.rdbuf();

    fs::create_directories(out_dir);
    char* summary = nullptr;
    rc = cs_report(log.ptr, ss.str().c_str(), out_dir.c_str(), group_days, &summary);
    if (rc != CS_OK) return report_error(rc);
    std::string text = take_string(summary);
    write_manifest(out_dir, json{{"artifacts", json::array({out_dir + "/days.csv",
                                                            out_dir + "/intervals.csv",
                                                            out_dir + "/gaps.csv"})},
                                 {"summary", json::parse(text)}});
    std::printf("%s\n", text.c_str());
    return 0;
}

int cmd_export_scenario(const std::string& name, const std::string& out_path) {
    ScenarioHandle scenario;
    int rc = cs_scenario_builtin(name.c_str(), &scenario.ptr);
    if (rc != CS_OK) return report_error(rc);
    if ((rc = cs_scenario_save(scenario.ptr, out_path.c_str())) != CS_OK)
        return report_error(rc);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_record_cassette(const ScenarioArgs& sargs, const std::string& cassette,
                        const std::string& endpoint, const std::string& mock_script,
                        bool quiet) {
    // Recording forces llm policy + record mode onto the scenario.
    json extra = {{"policy_kind", "llm"},
                  {"llm", {{"gateway", {{"mode", "record"}, {"cassette_path", cassette}}}}}};

    cs_mock_server* mock = nullptr;
    if (!mock_script.empty()) {
        std::ifstream f(mock_script);
        if (!f) {
            std::fprintf(stderr, "error: cannot open mock script %s\n", mock_script.c_str());
            return kExitValidation;
        }
        std::stringstream ss;
        ss << f.rdbuf();
        int rc = cs_mock_server_start(ss.str().c_str(), 0, &mock);
        if (rc != CS_OK) return report_error(rc);
        char* url = nullptr;
        cs_mock_server_url(mock, &url);
        extra["llm"]["gateway"]["endpoint_url"] = take_string(url);
        std::printf("mock endpoint on port %d\n", cs_mock_server_port(mock));
    } else if (!endpoint.empty()) {
        extra["llm"]["gateway"]["endpoint_url"] = endpoint;
        extra["llm"]["gateway"]["mode"] = "record";
    }

    ScenarioHandle scenario;
    int result = 0;
    if (int rc = open_scenario(sargs, scenario, extra); rc >= 0) {
        result = rc;
    } else {
        if (fs::exists(cassette)) fs::remove(cassette);
        RunlogHandle log;
        int rc2 = cs_run(scenario.ptr, nullptr, quiet ? nullptr : print_day_line, nullptr,
                         &log.ptr);
        if (rc2 != CS_OK)
            result = report_error(rc2);
        else
            std::printf("cassette written: %s\n", cassette.c_str());
    }
    if (mock) cs_mock_server_stop(mock);
    return result;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"day-to-day commute simulator (bottleneck departure-time and route choice)"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run a scenario and write a run log + exports");
    ScenarioArgs run_args;
    run_args.attach(run);
    std::string run_out = "out";
    int run_group_days = 10;
    bool run_quiet = false;
    run->add_option("--out", run_out, "output directory")->capture_default_str();
    run->add_option("--group-days", run_group_days, "interval table day grouping")
        ->capture_default_str();
    run->add_flag("--quiet", run_quiet, "suppress per-day lines");
    // Common overrides as first-class flags (sugar over --set).
    std::string run_seed, run_days, run_policy, run_threads, run_gateway_mode, run_cassette;
    run->add_option("--seed", run_seed, "master seed override");
    run->add_option("--days", run_days, "horizon override");
    run->add_option("--policy", run_policy, "heuristic | llm | replay");
    run->add_option("--threads", run_threads, "decision-phase threads");
    run->add_option("--gateway-mode", run_gateway_mode, "live | record | replay");
    run->add_option("--cassette", run_cassette, "cassette path for llm record/replay");
    // reflection-mechanism ablations (llm policy)
    std::string tog_cot, tog_tom, tog_bounded, tog_selfcorr;
    run->add_option("--cot", tog_cot, "on | off")->check(CLI::IsMember({"on", "off"}));
    run->add_option("--tom", tog_tom, "on | off")->check(CLI::IsMember({"on", "off"}));
    run->add_option("--bounded-rationality", tog_bounded, "on | off")
        ->check(CLI::IsMember({"on", "off"}));
    run->add_option("--self-correction", tog_selfcorr, "on | off")
        ->check(CLI::IsMember({"on", "off"}));

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "print and save the analytic benchmark");
    ScenarioArgs bench_args;
    bench_args.attach(bench);
    std::string bench_out;
    bench->add_option("--out", bench_out, "write benchmark JSON here");

    // report
    auto* report = app.add_subcommand("report", "tables and gap series from a run log");
    std::string rep_log, rep_bench, rep_out = "report";
    int rep_group_days = 10;
    report->add_option("--runlog", rep_log, "run log (JSON lines)")->required();
    report->add_option("--benchmark", rep_bench, "benchmark JSON from `commute benchmark`")
        ->required();
    report->add_option("--out", rep_out, "output directory")->capture_default_str();
    report->add_option("--group-days", rep_group_days, "interval table day grouping")
        ->capture_default_str();

    // export-scenario
    auto* exp = app.add_subcommand("export-scenario", "write a builtin scenario as JSON");
    std::string exp_name, exp_out;
    exp->add_option("name", exp_name, "builtin name")->required();
    exp->add_option("--out", exp_out, "output file")->required();

    // record-cassette
    auto* rec = app.add_subcommand("record-cassette",
                                   "run the llm policy in record mode to produce a cassette");
    ScenarioArgs rec_args;
    rec_args.attach(rec);
    std::string rec_cassette, rec_endpoint, rec_mock;
    bool rec_quiet = false;
    rec->add_option("--cassette", rec_cassette, "cassette output path")->required();
    rec->add_option("--endpoint", rec_endpoint, "live chat-completions endpoint URL");
    rec->add_option("--mock-script", rec_mock, "serve an in-process scripted endpoint");
    rec->add_flag("--quiet", rec_quiet, "suppress per-day lines");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (!run_seed.empty()) run_args.overrides.push_back("master_seed=" + run_seed);
            if (!run_days.empty()) run_args.overrides.push_back("horizon_days=" + run_days);
            if (!run_policy.empty()) run_args.overrides.push_back("policy_kind=" + run_policy);
            if (!run_threads.empty())
                run_args.overrides.push_back("engine.threads=" + run_threads);
            if (!run_gateway_mode.empty())
                run_args.overrides.push_back("llm.gateway.mode=" + run_gateway_mode);
            if (!run_cassette.empty())
                run_args.overrides.push_back("llm.gateway.cassette_path=" + run_cassette);
            auto toggle = [&](const std::string& key, const std::string& v) {
                if (!v.empty())
                    run_args.overrides.push_back("llm.toggles." + key +
                                                 (v == "on" ? "=true" : "=false"));
            };
            toggle("cot", tog_cot);
            toggle("tom", tog_tom);
            toggle("bounded_rationality", tog_bounded);
            toggle("self_correction", tog_selfcorr);
            return cmd_run(run_args, run_out, run_group_days, run_quiet);
        }
        if (bench->parsed()) return cmd_benchmark(bench_args, bench_out);
        if (report->parsed()) return cmd_report(rep_log, rep_bench, rep_out, rep_group_days);
        if (exp->parsed()) return cmd_export_scenario(exp_name, exp_out);
        if (rec->parsed())
            return cmd_record_cassette(rec_args, rec_cassette, rec_endpoint, rec_mock, rec_quiet);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "commutesim/agent_memory.hpp"
#include "commutesim/policy.hpp"
#include "commutesim/scenario.hpp"
#include "commutesim/traffic.hpp"

namespace commutesim {

struct DayRecord {
    int day = 0;
    std::vector<TravelDecision> decisions;  // by agent id
    std::vector<TravelOutcome> outcomes;    // by agent id
    // Aggregates (recomputable from the outcome list).
    double mean_tt = 0.0;
    double max_tt = 0.0;
    double mean_cost = 0.0;
    double late_share = 0.0;
    std::map<int, int> route_flows;               // route case
    std::map<int, int> departure_histogram;       // 1-minute bins (floor of minutes)
    // Convergence metrics vs the previous day (0 on day 1).
    double hist_l1_vs_prev = 0.0;
    int max_flow_delta_vs_prev = 0;
    // LLM policy bookkeeping. prompt_digest folds the day's per-agent prompt
    // hashes (agent order), so toggle ablations are visible in the log.
    int llm_fallbacks = 0;
    int llm_self_corrections = 0;
    std::string llm_prompt_digest;
};

enum class ConvergenceVerdict { Converged, NotConverged, InsufficientData };

const char* to_string(ConvergenceVerdict v);

struct ConvergenceResult {
    ConvergenceVerdict verdict = ConvergenceVerdict::InsufficientData;
    std::optional<int> day;  // first converged day
};

struct RunLog {
    Scenario scenario;  // snapshot with resolved defaults
    std::uint64_t master_seed = 0;
    std::string policy_kind;
    std::string prompt_template_hash;  // llm policy only
    std::string cassette_path;
    std::string cassette_digest;
    std::string gateway_mode;
    std::vector<DayRecord> days;
    ConvergenceResult convergence;
    int total_llm_fallbacks = 0;
    int total_llm_self_corrections = 0;
};

nlohmann::json day_record_to_json(const DayRecord& r);
DayRecord day_record_from_json(const nlohmann::json& j);

// JSON lines: header object, one DayRecord per line, then a footer with the
// convergence verdict. A truncated file (crash) still loads as a valid prefix.
void save_runlog(const RunLog& log, const std::string& path);
RunLog load_runlog(const std::string& path);

// Converged at day d when, for `window` consecutive days ending at d, the L1
// distance between consecutive normalized departure histograms is <= epsilon
// and (route case) no route's flow changed by more than one agent.
ConvergenceResult check_convergence(const std::vector<DayRecord>& days, int window,
                                    double epsilon, CaseKind kind);

class Engine {
public:
    explicit Engine(const Scenario& scenario);

    // Phase 1: all decisions from day-1 states (parallel over agents when
    // scenario.engine.threads > 1); phase 2: one traffic simulation; phase 3:
    // sequential memory updates.
    DayRecord run_day(std::vector<AgentState>& states, int day);

    using DayCallback = std::function<void(const DayRecord&)>;
    RunLog run(const DayCallback& on_day = nullptr);

    // Header fields (scenario snapshot, policy metadata) without day records.
    RunLog log_stub() const;

    const DecisionPolicy& policy() const { return *policy_; }

private:
    const Scenario& scenario_;
    std::unique_ptr<DecisionPolicy> policy_;
    std::shared_ptr<class LlmGateway> gateway_;  // llm policy only
    std::string prompt_template_hash_;
};

// Convenience wrapper: construct an Engine, run, optionally stream the log to
// `runlog_path` incrementally (header first, then a line per day, footer last).
RunLog run_scenario(const Scenario& scenario, const std::string& runlog_path = "",
                    const Engine::DayCallback& on_day = nullptr);

}  // namespace commutesim

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "commutesim/agent_memory.hpp"
#include "commutesim/gateway.hpp"
#include "commutesim/policy.hpp"
#include "commutesim/scenario.hpp"

namespace commutesim {

// Generated from prompts/*.txt at build time.
std::map<std::string, std::string> builtin_prompt_texts();

class PromptTemplates {
public:
    static PromptTemplates builtin();
    static PromptTemplates load_dir(const std::string& dir);

    const std::string& text(const std::string& name) const;
    // Stable digest over (name, normalized content) pairs; recorded in run logs.
    std::string set_hash() const;

private:
    std::map<std::string, std::string> texts_;
};

struct DecisionSchema {
    CaseKind kind = CaseKind::BottleneckDeparture;
    double departure_lo_min = 0.0;  // bottleneck case bounds
    double departure_hi_min = 0.0;
    std::vector<int> route_ids;  // route case
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    DecisionSchema schema;
};

struct ParsedDecision {
    double departure_min = 0.0;  // bottleneck case
    int route_id = 0;            // route case
    std::string rationale_text;
    std::string raw_response;
};

// Deterministic render of the agent's persona, memory, and the toggled
// reflection fragments. Toggled-off mechanisms contribute no text.
PromptBundle build_prompt(const AgentState& state, int day, const Scenario& scenario,
                          const ReflectionToggles& toggles, const PromptTemplates& templates);

// Extracts the first balanced JSON object matching the schema. Throws
// Error{Parse} when nothing parses, Error{OutOfRange} for invalid values,
// Error{WrongCase} when the object answers the other case kind.
ParsedDecision parse_decision(const std::string& raw, const DecisionSchema& schema);

// Second pass: embeds the first decision plus a locally simulated outcome
// (from the agent's own memory of yesterday's conditions; never the global
// simulator) and asks for confirmation or revision. Returns the first
// decision when the revision fails to parse.
ParsedDecision self_correct(const ParsedDecision& first, const AgentState& state, int day,
                            const Scenario& scenario, const PromptTemplates& templates,
                            LlmGateway& gateway, bool* revised = nullptr,
                            std::string* failure_note = nullptr);

// build_prompt -> gateway -> parse_decision -> optional self_correct, with a
// three-strike fallback to yesterday's decision (day 1: the heuristic day-1
// rule). Never throws on gateway or parse failures.
PolicyDecision llm_decide(const AgentState& state, int day, const Scenario& scenario,
                          const ReflectionToggles& toggles, const PromptTemplates& templates,
                          LlmGateway& gateway);

class LlmPolicy : public DecisionPolicy {
public:
    LlmPolicy(const Scenario& scenario, std::shared_ptr<LlmGateway> gateway,
              PromptTemplates templates);
    PolicyDecision decide(const AgentState& state, int day) const override;

    const PromptTemplates& templates() const { return templates_; }

private:
    const Scenario& scenario_;
    std::shared_ptr<LlmGateway> gateway_;
    PromptTemplates templates_;
};

}  // namespace commutesim

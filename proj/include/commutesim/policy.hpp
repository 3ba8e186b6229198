#pragma once

#include <memory>
#include <string>

#include "commutesim/agent_memory.hpp"
#include "commutesim/scenario.hpp"
#include "commutesim/traffic.hpp"

namespace commutesim {

struct PolicyDecision {
    TravelDecision decision;
    bool llm_fallback = false;
    bool self_corrected = false;
    std::string prompt_hash;  // llm policy only
};

// Decision function: maps an agent's own state (through day-1) to today's
// decision. Implementations never read other agents' states; randomness comes
// from the per-(agent, day) stream, so evaluation order and thread count do
// not affect any decision.
class DecisionPolicy {
public:
    virtual ~DecisionPolicy() = default;
    virtual PolicyDecision decide(const AgentState& state, int day) const = 0;
};

class HeuristicPolicy : public DecisionPolicy {
public:
    explicit HeuristicPolicy(const Scenario& scenario) : scenario_(scenario) {}
    PolicyDecision decide(const AgentState& state, int day) const override;

private:
    TravelDecision decide_departure(const AgentState& state, int day) const;
    TravelDecision decide_route(const AgentState& state, int day) const;
    const Scenario& scenario_;
};

class ReplayPolicy : public DecisionPolicy {
public:
    explicit ReplayPolicy(const Scenario& scenario);
    PolicyDecision decide(const AgentState& state, int day) const override;

private:
    const Scenario& scenario_;
};

}  // namespace commutesim

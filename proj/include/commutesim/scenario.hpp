#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "commutesim/time_util.hpp"

#include "json.hpp"

namespace commutesim {

enum class CaseKind { BottleneckDeparture, TwoRoute };
enum class PolicyKind { Heuristic, Llm, Replay };
enum class GatewayMode { Live, Record, Replay };

const char* to_string(CaseKind k);
const char* to_string(PolicyKind k);
const char* to_string(GatewayMode m);

// Marginal disutilities per minute: beta (early), alpha (in-vehicle), gamma (late).
struct CostWeights {
    double early_per_min = 1.0;
    double invehicle_per_min = 3.0;
    double late_per_min = 10.0;
};

struct BottleneckCorridor {
    double free_flow_min = 30.0;
    double capacity_per_hour = 60.0;

    double headway_min() const { return 60.0 / capacity_per_hour; }
};

// Linear latency t(f) = intercept + slope * f.
struct RouteOption {
    int route_id = 0;
    double intercept_min = 0.0;
    double slope_min_per_agent = 0.0;

    double travel_time(double flow) const { return intercept_min + slope_min_per_agent * flow; }
};

struct PersonaSpec {
    TimeOfDay preferred_arrival{540.0};
    CostWeights cost_weights;
    double inertia_band = 0.10;
    int short_term_days = 5;       // K
    double tom_damping = 0.8;      // lambda in (0,1]
    double exploration_rate = 0.05;
};

// Heuristic policy constants. Scenario-overridable and echoed into the run log.
struct HeuristicParams {
    double day1_jitter_min = 10.0;
    double route_stay_margin_min = 2.0;   // tau
    double switch_keep_prob = 0.5;        // p_inertia
    double clamp_before_pref_min = 180.0;
    double clamp_after_pref_min = 60.0;
    TimeOfDay nominal_departure{480.0};   // route case departs here
};

struct ReflectionToggles {
    bool cot = true;
    bool tom = true;
    bool bounded_rationality = true;
    bool self_correction = true;
};

struct GatewayConfig {
    std::string endpoint_url = "http://127.0.0.1:8080/v1/chat/completions";
    std::string model_name = "local-model";
    double temperature = 0.2;
    double timeout_sec = 30.0;
    int max_retries = 3;
    int parallelism_bound = 4;
    GatewayMode mode = GatewayMode::Replay;
    std::string cassette_path;
    std::string api_key_env_var_name = "COMMUTE_API_KEY";
    double backoff_base_sec = 1.0;
};

struct LlmParams {
    ReflectionToggles toggles;
    GatewayConfig gateway;
    std::string prompt_dir;  // empty = builtin templates
};

struct EngineParams {
    int threads = 1;
    int convergence_window_days = 5;  // W
    double convergence_epsilon = 0.05;
};

// Scripted per-(agent, day) decisions for the replay policy.
struct ReplayScript {
    // key: (agent_id, day); value: departure minutes (bottleneck) or route id.
    std::map<std::pair<int, int>, double> departures;
    std::map<std::pair<int, int>, int> routes;
};

struct Violation {
    std::string field;
    std::string message;
    bool fatal = true;
};

struct Scenario {
    std::string name = "custom";
    CaseKind case_kind = CaseKind::BottleneckDeparture;
    int n_agents = 1;
    int horizon_days = 1;
    std::optional<BottleneckCorridor> corridor;
    std::vector<RouteOption> routes;
    PersonaSpec persona;
    PolicyKind policy_kind = PolicyKind::Heuristic;
    std::uint64_t master_seed = 1;
    EngineParams engine;
    HeuristicParams heuristic;
    LlmParams llm;
    std::optional<ReplayScript> replay;

    // Provenance: schema fields that were filled from defaults at load time.
    // Not part of scenario identity (excluded from equality and validation).
    std::vector<std::string> defaults_applied;
};

bool operator==(const Scenario& a, const Scenario& b);

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

// Throws Error{Parse} on malformed JSON, Error{Validation} listing every fatal
// violation when the document fails validate_scenario.
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

// Returns every violated invariant (fatal and warning), never just the first.
std::vector<Violation> validate_scenario(const Scenario& s);

// "bottleneck_40" | "two_route_40"; throws Error{Validation} on unknown names.
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

// Merge a partial JSON document (same schema, any subset of fields) over `s`.
Scenario apply_overrides(const Scenario& s, const nlohmann::json& overrides);

}  // namespace commutesim

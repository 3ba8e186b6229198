#include "commutesim/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "commutesim/errors.hpp"

namespace commutesim {

using nlohmann::json;

const char* to_string(CaseKind k) {
    return k == CaseKind::BottleneckDeparture ? "bottleneck-departure" : "two-route";
}
const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::Heuristic: return "heuristic";
        case PolicyKind::Llm: return "llm";
        case PolicyKind::Replay: return "replay";
    }
    return "?";
}
const char* to_string(GatewayMode m) {
    switch (m) {
        case GatewayMode::Live: return "live";
        case GatewayMode::Record: return "record";
        case GatewayMode::Replay: return "replay";
    }
    return "?";
}

namespace {

CaseKind case_kind_from(const std::string& s) {
    if (s == "bottleneck-departure") return CaseKind::BottleneckDeparture;
    if (s == "two-route") return CaseKind::TwoRoute;
    throw Error(ErrorKind::Validation, "case_kind: unknown value '" + s + "'");
}
PolicyKind policy_kind_from(const std::string& s) {
    if (s == "heuristic") return PolicyKind::Heuristic;
    if (s == "llm") return PolicyKind::Llm;
    if (s == "replay") return PolicyKind::Replay;
    throw Error(ErrorKind::Validation, "policy_kind: unknown value '" + s + "'");
}
GatewayMode gateway_mode_from(const std::string& s) {
    if (s == "live") return GatewayMode::Live;
    if (s == "record") return GatewayMode::Record;
    if (s == "replay") return GatewayMode::Replay;
    throw Error(ErrorKind::Validation, "llm.gateway.mode: unknown value '" + s + "'");
}

// Accepts either decimal minutes or an "HH:MM" string.
double time_field(const json& v, const std::string& field) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        auto t = parse_hhmm(v.get<std::string>());
        if (t) return *t;
    }
    throw Error(ErrorKind::Validation, field + ": expected minutes or \"HH:MM\"");
}

struct FieldReader {
    const json& obj;
    std::string prefix;
    std::vector<std::string>* defaults;

    template <typename T>
    T get(const char* key, T fallback) const {
        if (obj.contains(key)) return obj.at(key).get<T>();
        if (defaults) defaults->push_back(prefix + key);
        return fallback;
    }
    double get_time(const char* key, double fallback) const {
        if (obj.contains(key)) return time_field(obj.at(key), prefix + key);
        if (defaults) defaults->push_back(prefix + key);
        return fallback;
    }
    bool has(const char* key) const { return obj.contains(key); }
};

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key()))
            throw Error(ErrorKind::Validation, where + it.key() + ": unknown field");
    }
}

}  // namespace

bool operator==(const Scenario& a, const Scenario& b) {
    // Provenance (defaults_applied) is metadata, not identity.
    json ja = scenario_to_json(a);
    json jb = scenario_to_json(b);
    ja.erase("defaults_applied");
    jb.erase("defaults_applied");
    return ja == jb;
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["case_kind"] = to_string(s.case_kind);
    j["n_agents"] = s.n_agents;
    j["horizon_days"] = s.horizon_days;
    if (s.corridor) {
        j["corridor"] = {{"free_flow_min", s.corridor->free_flow_min},
                         {"capacity_per_hour", s.corridor->capacity_per_hour}};
    }
    if (!s.routes.empty()) {
        json arr = json::array();
        for (const auto& r : s.routes)
            arr.push_back({{"route_id", r.route_id},
                           {"intercept_min", r.intercept_min},
                           {"slope_min_per_agent", r.slope_min_per_agent}});
        j["routes"] = arr;
    }
    j["persona"] = {{"preferred_arrival_min", s.persona.preferred_arrival.minutes},
                    {"cost_weights",
                     {{"early_per_min", s.persona.cost_weights.early_per_min},
                      {"invehicle_per_min", s.persona.cost_weights.invehicle_per_min},
                      {"late_per_min", s.persona.cost_weights.late_per_min}}},
                    {"inertia_band", s.persona.inertia_band},
                    {"short_term_days", s.persona.short_term_days},
                    {"tom_damping", s.persona.tom_damping},
                    {"exploration_rate", s.persona.exploration_rate}};
    j["policy_kind"] = to_string(s.policy_kind);
    j["master_seed"] = s.master_seed;
    j["engine"] = {{"threads", s.engine.threads},
                   {"convergence_window_days", s.engine.convergence_window_days},
                   {"convergence_epsilon", s.engine.convergence_epsilon}};
    j["heuristic"] = {{"day1_jitter_min", s.heuristic.day1_jitter_min},
                      {"route_stay_margin_min", s.heuristic.route_stay_margin_min},
                      {"switch_keep_prob", s.heuristic.switch_keep_prob},
                      {"clamp_before_pref_min", s.heuristic.clamp_before_pref_min},
                      {"clamp_after_pref_min", s.heuristic.clamp_after_pref_min},
                      {"nominal_departure_min", s.heuristic.nominal_departure.minutes}};
    j["llm"] = {{"toggles",
                 {{"cot", s.llm.toggles.cot},
                  {"tom", s.llm.toggles.tom},
                  {"bounded_rationality", s.llm.toggles.bounded_rationality},
                  {"self_correction", s.llm.toggles.self_correction}}},
                {"gateway",
                 {{"endpoint_url", s.llm.gateway.endpoint_url},
                  {"model_name", s.llm.gateway.model_name},
                  {"temperature", s.llm.gateway.temperature},
                  {"timeout_sec", s.llm.gateway.timeout_sec},
                  {"max_retries", s.llm.gateway.max_retries},
                  {"parallelism_bound", s.llm.gateway.parallelism_bound},
                  {"mode", to_string(s.llm.gateway.mode)},
                  {"cassette_path", s.llm.gateway.cassette_path},
                  {"api_key_env_var_name", s.llm.gateway.api_key_env_var_name},
                  {"backoff_base_sec", s.llm.gateway.backoff_base_sec}}},
                {"prompt_dir", s.llm.prompt_dir}};
    if (s.replay) {
        json entries = json::array();
        for (const auto& [key, dep] : s.replay->departures)
            entries.push_back(
                {{"agent_id", key.first}, {"day", key.second}, {"departure_min", dep}});
        for (const auto& [key, rid] : s.replay->routes)
            entries.push_back({{"agent_id", key.first}, {"day", key.second}, {"route_id", rid}});
        j["replay_script"] = entries;
    }
    if (!s.defaults_applied.empty()) j["defaults_applied"] = s.defaults_applied;
    return j;
}

Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "scenario: document is not a JSON object");
    reject_unknown_keys(j,
                        {"name", "case_kind", "n_agents", "horizon_days", "corridor", "routes",
                         "persona", "policy_kind", "master_seed", "engine", "heuristic", "llm",
                         "replay_script", "defaults_applied"},
                        "");
    Scenario s;
    std::vector<std::string> defaults;
    FieldReader top{j, "", &defaults};

    s.name = top.get<std::string>("name", "custom");
    if (!j.contains("case_kind"))
        throw Error(ErrorKind::Validation, "case_kind: required field missing");
    s.case_kind = case_kind_from(j.at("case_kind").get<std::string>());
    if (!j.contains("n_agents"))
        throw Error(ErrorKind::Validation, "n_agents: required field missing");
    s.n_agents = j.at("n_agents").get<int>();
    if (!j.contains("horizon_days"))
        throw Error(ErrorKind::Validation, "horizon_days: required field missing");
    s.horizon_days = j.at("horizon_days").get<int>();

    if (j.contains("corridor")) {
        const json& c = j.at("corridor");
        reject_unknown_keys(c, {"free_flow_min", "capacity_per_hour"}, "corridor.");
        FieldReader fr{c, "corridor.", &defaults};
        BottleneckCorridor bc;
        bc.free_flow_min = fr.get<double>("free_flow_min", 30.0);
        bc.capacity_per_hour = fr.get<double>("capacity_per_hour", 60.0);
        s.corridor = bc;
    }
    if (j.contains("routes")) {
        for (const auto& rj : j.at("routes")) {
            reject_unknown_keys(rj, {"route_id", "intercept_min", "slope_min_per_agent"},
                                "routes[].");
            RouteOption r;
            r.route_id = rj.at("route_id").get<int>();
            r.intercept_min = rj.at("intercept_min").get<double>();
            r.slope_min_per_agent = rj.at("slope_min_per_agent").get<double>();
            s.routes.push_back(r);
        }
    }

    if (j.contains("persona")) {
        const json& p = j.at("persona");
        reject_unknown_keys(p,
                            {"preferred_arrival_min", "cost_weights", "inertia_band",
                             "short_term_days", "tom_damping", "exploration_rate"},
                            "persona.");
        FieldReader fr{p, "persona.", &defaults};
        s.persona.preferred_arrival =
            TimeOfDay{fr.get_time("preferred_arrival_min", s.persona.preferred_arrival.minutes)};
        if (p.contains("cost_weights")) {
            const json& w = p.at("cost_weights");
            reject_unknown_keys(w, {"early_per_min", "invehicle_per_min", "late_per_min"},
                                "persona.cost_weights.");
            FieldReader wr{w, "persona.cost_weights.", &defaults};
            s.persona.cost_weights.early_per_min =
                wr.get<double>("early_per_min", s.persona.cost_weights.early_per_min);
            s.persona.cost_weights.invehicle_per_min =
                wr.get<double>("invehicle_per_min", s.persona.cost_weights.invehicle_per_min);
            s.persona.cost_weights.late_per_min =
                wr.get<double>("late_per_min", s.persona.cost_weights.late_per_min);
        } else {
            defaults.push_back("persona.cost_weights");
        }
        s.persona.inertia_band = fr.get<double>("inertia_band", s.persona.inertia_band);
        s.persona.short_term_days = fr.get<int>("short_term_days", s.persona.short_term_days);
        s.persona.tom_damping = fr.get<double>("tom_damping", s.persona.tom_damping);
        s.persona.exploration_rate =
            fr.get<double>("exploration_rate", s.persona.exploration_rate);
    } else {
        defaults.push_back("persona");
    }

    s.policy_kind = policy_kind_from(top.get<std::string>("policy_kind", "heuristic"));
    s.master_seed = top.get<std::uint64_t>("master_seed", 1);

    if (j.contains("engine")) {
        const json& e = j.at("engine");
        reject_unknown_keys(e, {"threads", "convergence_window_days", "convergence_epsilon"},
                            "engine.");
        FieldReader fr{e, "engine.", &defaults};
        s.engine.threads = fr.get<int>("threads", s.engine.threads);
        s.engine.convergence_window_days =
            fr.get<int>("convergence_window_days", s.engine.convergence_window_days);
        s.engine.convergence_epsilon =
            fr.get<double>("convergence_epsilon", s.engine.convergence_epsilon);
    } else {
        defaults.push_back("engine");
    }

    if (j.contains("heuristic")) {
        const json& h = j.at("heuristic");
        reject_unknown_keys(h,
                            {"day1_jitter_min", "route_stay_margin_min", "switch_keep_prob",
                             "clamp_before_pref_min", "clamp_after_pref_min",
                             "nominal_departure_min"},
                            "heuristic.");
        FieldReader fr{h, "heuristic.", &defaults};
        s.heuristic.day1_jitter_min = fr.get<double>("day1_jitter_min", s.heuristic.day1_jitter_min);
        s.heuristic.route_stay_margin_min =
            fr.get<double>("route_stay_margin_min", s.heuristic.route_stay_margin_min);
        s.heuristic.switch_keep_prob =
            fr.get<double>("switch_keep_prob", s.heuristic.switch_keep_prob);
        s.heuristic.clamp_before_pref_min =
            fr.get<double>("clamp_before_pref_min", s.heuristic.clamp_before_pref_min);
        s.heuristic.clamp_after_pref_min =
            fr.get<double>("clamp_after_pref_min", s.heuristic.clamp_after_pref_min);
        s.heuristic.nominal_departure =
            TimeOfDay{fr.get_time("nominal_departure_min", s.heuristic.nominal_departure.minutes)};
    } else {
        defaults.push_back("heuristic");
    }

    if (j.contains("llm")) {
        const json& l = j.at("llm");
        reject_unknown_keys(l, {"toggles", "gateway", "prompt_dir"}, "llm.");
        if (l.contains("toggles")) {
            const json& t = l.at("toggles");
            reject_unknown_keys(t, {"cot", "tom", "bounded_rationality", "self_correction"},
                                "llm.toggles.");
            FieldReader fr{t, "llm.toggles.", &defaults};
            s.llm.toggles.cot = fr.get<bool>("cot", s.llm.toggles.cot);
            s.llm.toggles.tom = fr.get<bool>("tom", s.llm.toggles.tom);
            s.llm.toggles.bounded_rationality =
                fr.get<bool>("bounded_rationality", s.llm.toggles.bounded_rationality);
            s.llm.toggles.self_correction =
                fr.get<bool>("self_correction", s.llm.toggles.self_correction);
        }
        if (l.contains("gateway")) {
            const json& g = l.at("gateway");
            reject_unknown_keys(g,
                                {"endpoint_url", "model_name", "temperature", "timeout_sec",
                                 "max_retries", "parallelism_bound", "mode", "cassette_path",
                                 "api_key_env_var_name", "backoff_base_sec"},
                                "llm.gateway.");
            FieldReader fr{g, "llm.gateway.", &defaults};
            auto& gw = s.llm.gateway;
            gw.endpoint_url = fr.get<std::string>("endpoint_url", gw.endpoint_url);
            gw.model_name = fr.get<std::string>("model_name", gw.model_name);
            gw.temperature = fr.get<double>("temperature", gw.temperature);
            gw.timeout_sec = fr.get<double>("timeout_sec", gw.timeout_sec);
            gw.max_retries = fr.get<int>("max_retries", gw.max_retries);
            gw.parallelism_bound = fr.get<int>("parallelism_bound", gw.parallelism_bound);
            gw.mode = gateway_mode_from(fr.get<std::string>("mode", to_string(gw.mode)));
            gw.cassette_path = fr.get<std::string>("cassette_path", gw.cassette_path);
            gw.api_key_env_var_name =
                fr.get<std::string>("api_key_env_var_name", gw.api_key_env_var_name);
            gw.backoff_base_sec = fr.get<double>("backoff_base_sec", gw.backoff_base_sec);
        }
        FieldReader fr{l, "llm.", nullptr};
        s.llm.prompt_dir = fr.get<std::string>("prompt_dir", "");
    }

    if (j.contains("replay_script")) {
        ReplayScript script;
        for (const auto& e : j.at("replay_script")) {
            reject_unknown_keys(e, {"agent_id", "day", "departure_min", "route_id"},
                                "replay_script[].");
            int agent = e.at("agent_id").get<int>();
            int day = e.at("day").get<int>();
            if (e.contains("departure_min"))
                script.departures[{agent, day}] =
                    time_field(e.at("departure_min"), "replay_script[].departure_min");
            else if (e.contains("route_id"))
                script.routes[{agent, day}] = e.at("route_id").get<int>();
            else
                throw Error(ErrorKind::Validation,
                            "replay_script[]: needs departure_min or route_id");
        }
        s.replay = std::move(script);
    }

    s.defaults_applied = std::move(defaults);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open scenario file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("scenario parse error: ") + e.what());
    }
    Scenario s = scenario_from_json(j);
    auto violations = validate_scenario(s);
    std::string fatal;
    for (const auto& v : violations)
        if (v.fatal) fatal += (fatal.empty() ? "" : "; ") + v.field + ": " + v.message;
    if (!fatal.empty()) throw Error(ErrorKind::Validation, fatal);
    return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write scenario file: " + path);
    out << scenario_to_json(s).dump(2) << "\n";
}

std::vector<Violation> validate_scenario(const Scenario& s) {
    std::vector<Violation> v;
    auto fatal = [&](std::string field, std::string msg) {
        v.push_back({std::move(field), std::move(msg), true});
    };
    auto warn = [&](std::string field, std::string msg) {
        v.push_back({std::move(field), std::move(msg), false});
    };

    if (s.n_agents < 1) fatal("n_agents", "must be >= 1");
    if (s.horizon_days < 1) fatal("horizon_days", "must be >= 1");

    if (s.case_kind == CaseKind::BottleneckDeparture) {
        if (!s.corridor) {
            fatal("corridor", "bottleneck-departure case requires a corridor");
        } else {
            if (s.corridor->free_flow_min < 0) fatal("corridor.free_flow_min", "must be >= 0");
            if (s.corridor->capacity_per_hour <= 0)
                fatal("corridor.capacity_per_hour", "must be > 0");
        }
        if (!s.routes.empty()) fatal("routes", "bottleneck-departure case must not define routes");
    } else {
        if (s.routes.size() < 2) fatal("routes", "two-route case needs at least 2 routes");
        if (s.corridor) fatal("corridor", "two-route case must not define a corridor");
        std::set<int> ids;
        for (const auto& r : s.routes) {
            std::string where = "routes[" + std::to_string(r.route_id) + "]";
            if (!ids.insert(r.route_id).second) fatal(where + ".route_id", "duplicate route id");
            if (r.intercept_min < 0) fatal(where + ".intercept_min", "must be >= 0");
            if (r.slope_min_per_agent < 0) fatal(where + ".slope_min_per_agent", "must be >= 0");
        }
    }

    const auto& p = s.persona;
    if (!p.preferred_arrival.valid())
        fatal("persona.preferred_arrival_min", "must lie in [0, 1440)");
    if (p.cost_weights.early_per_min < 0) fatal("persona.cost_weights.early_per_min", "must be >= 0");
    if (p.cost_weights.invehicle_per_min < 0)
        fatal("persona.cost_weights.invehicle_per_min", "must be >= 0");
    if (p.cost_weights.late_per_min < 0) fatal("persona.cost_weights.late_per_min", "must be >= 0");
    if (p.cost_weights.late_per_min <= p.cost_weights.early_per_min)
        warn("persona.cost_weights", "late_per_min <= early_per_min: bottleneck equilibrium is "
                                     "ill-posed (gamma should exceed beta)");
    if (p.inertia_band < 0) fatal("persona.inertia_band", "must be >= 0");
    if (p.short_term_days < 1) fatal("persona.short_term_days", "must be >= 1");
    if (!(p.tom_damping > 0.0 && p.tom_damping <= 1.0))
        fatal("persona.tom_damping", "must lie in (0, 1]");
    if (!(p.exploration_rate >= 0.0 && p.exploration_rate < 1.0))
        fatal("persona.exploration_rate", "must lie in [0, 1)");

    if (s.engine.threads < 1) fatal("engine.threads", "must be >= 1");
    if (s.engine.convergence_window_days < 2)
        fatal("engine.convergence_window_days", "must be >= 2");
    if (s.engine.convergence_epsilon < 0) fatal("engine.convergence_epsilon", "must be >= 0");

    if (s.heuristic.day1_jitter_min < 0) fatal("heuristic.day1_jitter_min", "must be >= 0");
    if (s.heuristic.route_stay_margin_min < 0)
        fatal("heuristic.route_stay_margin_min", "must be >= 0");
    if (!(s.heuristic.switch_keep_prob >= 0.0 && s.heuristic.switch_keep_prob <= 1.0))
        fatal("heuristic.switch_keep_prob", "must lie in [0, 1]");
    if (!s.heuristic.nominal_departure.valid())
        fatal("heuristic.nominal_departure_min", "must lie in [0, 1440)");

    if (s.policy_kind == PolicyKind::Replay && !s.replay)
        fatal("replay_script", "replay policy requires a replay_script");
    if (s.policy_kind == PolicyKind::Llm && s.llm.gateway.mode == GatewayMode::Replay &&
        s.llm.gateway.cassette_path.empty())
        fatal("llm.gateway.cassette_path", "replay mode requires a cassette_path");

    return v;
}

Scenario builtin_scenario(const std::string& name) {
    if (name == "bottleneck_40") {
        Scenario s;
        s.name = "bottleneck_40";
        s.case_kind = CaseKind::BottleneckDeparture;
        s.n_agents = 40;
        s.horizon_days = 40;
        s.corridor = BottleneckCorridor{30.0, 60.0};
        s.persona.preferred_arrival = TimeOfDay{540.0};
        s.persona.cost_weights = CostWeights{1.0, 3.0, 10.0};
        s.policy_kind = PolicyKind::Heuristic;
        s.master_seed = 1;
        return s;
    }
    if (name == "two_route_40") {
        Scenario s;
        s.name = "two_route_40";
        s.case_kind = CaseKind::TwoRoute;
        s.n_agents = 40;
        s.horizon_days = 20;
        s.routes = {RouteOption{1, 20.0, 3.0}, RouteOption{2, 40.0, 1.0}};
        s.persona.preferred_arrival = TimeOfDay{540.0};
        s.persona.cost_weights = CostWeights{1.0, 3.0, 10.0};
        s.policy_kind = PolicyKind::Heuristic;
        s.master_seed = 1;
        return s;
    }
    throw Error(ErrorKind::Validation, "unknown builtin scenario '" + name +
                                           "' (available: bottleneck_40, two_route_40)");
}

std::vector<std::string> builtin_scenario_names() { return {"bottleneck_40", "two_route_40"}; }

Scenario apply_overrides(const Scenario& s, const json& overrides) {
    json base = scenario_to_json(s);
    base.erase("defaults_applied");
    json merged = base;
    merged.merge_patch(overrides);
    Scenario out = scenario_from_json(merged);
    out.defaults_applied = s.defaults_applied;  // keep original provenance
    return out;
}

}  // namespace commutesim

#include "commutesim/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commutesim/errors.hpp"
#include "commutesim/time_util.hpp"

namespace commutesim {

using nlohmann::json;

namespace {

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string fmt_num(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    return fmt1(v);
}

}  // namespace

PromptTemplates PromptTemplates::builtin() {
    PromptTemplates t;
    t.texts_ = builtin_prompt_texts();
    return t;
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
    PromptTemplates t;
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw Error(ErrorKind::Io, "prompt template directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path());
        std::stringstream ss;
        ss << in.rdbuf();
        t.texts_[entry.path().stem().string()] = ss.str();
    }
    if (t.texts_.empty()) throw Error(ErrorKind::Io, "no *.txt templates in " + dir);
    return t;
}

const std::string& PromptTemplates::text(const std::string& name) const {
    auto it = texts_.find(name);
    if (it == texts_.end())
        throw Error(ErrorKind::MissingEntry, "missing prompt template '" + name + "'");
    return it->second;
}

std::string PromptTemplates::set_hash() const {
    // Reuse the request hash machinery: one pseudo-message per template.
    ChatRequest pseudo;
    pseudo.model = "templates";
    for (const auto& [name, text] : texts_) pseudo.messages.push_back({name, text});
    return request_hash(pseudo);
}

PromptBundle build_prompt(const AgentState& state, int day, const Scenario& scenario,
                          const ReflectionToggles& toggles, const PromptTemplates& templates) {
    const bool bottleneck = scenario.case_kind == CaseKind::BottleneckDeparture;
    const auto& persona = state.persona;
    PromptBundle bundle;

    bundle.schema.kind = scenario.case_kind;
    if (bottleneck) {
        bundle.schema.departure_lo_min =
            persona.preferred_arrival.minutes - scenario.heuristic.clamp_before_pref_min;
        bundle.schema.departure_hi_min =
            persona.preferred_arrival.minutes + scenario.heuristic.clamp_after_pref_min;
    } else {
        for (const auto& r : scenario.routes) bundle.schema.route_ids.push_back(r.route_id);
    }

    // ---- system text ----
    std::string sys = templates.text(bottleneck ? "system_bottleneck" : "system_route");
    sys = replace_all(sys, "{{AGENT_ID}}", std::to_string(state.agent_id));
    if (bottleneck) {
        sys = replace_all(sys, "{{PREFERRED_ARRIVAL}}", format_hhmm(persona.preferred_arrival.minutes));
        sys = replace_all(sys, "{{FREE_FLOW}}",
                          fmt_num(scenario.corridor ? scenario.corridor->free_flow_min : 0.0));
        sys = replace_all(sys, "{{ALPHA}}", fmt_num(persona.cost_weights.invehicle_per_min));
        sys = replace_all(sys, "{{BETA}}", fmt_num(persona.cost_weights.early_per_min));
        sys = replace_all(sys, "{{GAMMA}}", fmt_num(persona.cost_weights.late_per_min));
    } else {
        std::string table;
        for (const auto& r : scenario.routes)
            table += "Route " + std::to_string(r.route_id) + ": " + fmt_num(r.intercept_min) +
                     " min with no traffic, +" + fmt_num(r.slope_min_per_agent) +
                     " min per driver using it.\n";
        sys = replace_all(sys, "{{ROUTES_TABLE}}", table);
    }
    sys = replace_all(sys, "{{BOUNDED}}",
                      toggles.bounded_rationality ? templates.text("fragment_bounded") : "");

    // ---- user text ----
    std::string usr = templates.text(bottleneck ? "user_bottleneck" : "user_route");
    usr = replace_all(usr, "{{DAY}}", std::to_string(day));

    std::string long_term;
    if (state.long_term.has_typical) {
        long_term = "Your overall impression: a typical commute takes about " +
                    fmt_num(state.long_term.typical_travel_time_min) + " minutes";
        if (state.long_term.has_best)
            long_term += "; your best day so far cost " + fmt1(state.long_term.best_cost_seen) + ".";
        else
            long_term += ".";
    } else {
        long_term = "You have no commute experience on this corridor yet.";
    }
    usr = replace_all(usr, "{{LONG_TERM}}", long_term);

    const ShortTermView view = short_term_view(state, persona.short_term_days);
    std::string table;
    if (view.entries.empty()) {
        table = "(none yet)\n";
    } else {
        for (const auto& e : view.entries) {
            const auto& o = e.outcome;
            table += "day " + std::to_string(e.day) + ": ";
            if (bottleneck)
                table += "left " + format_hhmm(o.departure_min) + ", arrived " +
                         format_hhmm(o.arrival_min) + ", drove " + fmt1(o.travel_time_min) +
                         " min, ";
            else
                table += "route " + std::to_string(o.route_id ? *o.route_id : 0) + ", drove " +
                         fmt1(o.travel_time_min) + " min, ";
            if (o.schedule_dev_min > 0)
                table += fmt1(o.schedule_dev_min) + " min late\n";
            else if (o.schedule_dev_min < 0)
                table += fmt1(-o.schedule_dev_min) + " min early\n";
            else
                table += "exactly on time\n";
        }
    }
    usr = replace_all(usr, "{{MEMORY_TABLE}}", table);

    usr = replace_all(usr, "{{COT}}", toggles.cot ? templates.text("fragment_cot") : "");
    usr = replace_all(usr, "{{TOM}}",
                      toggles.tom
                          ? templates.text(bottleneck ? "fragment_tom_bottleneck"
                                                      : "fragment_tom_route")
                          : "");

    std::string fmt = templates.text(bottleneck ? "format_bottleneck" : "format_route");
    if (bottleneck) {
        fmt = replace_all(fmt, "{{DEP_MIN}}", format_hhmm(bundle.schema.departure_lo_min));
        fmt = replace_all(fmt, "{{DEP_MAX}}", format_hhmm(bundle.schema.departure_hi_min));
    } else {
        std::string ids;
        for (std::size_t i = 0; i < bundle.schema.route_ids.size(); ++i)
            ids += (i ? ", " : "") + std::to_string(bundle.schema.route_ids[i]);
        fmt = replace_all(fmt, "{{ROUTE_IDS}}", ids);
    }
    usr = replace_all(usr, "{{FORMAT}}", fmt);

    bundle.system_text = std::move(sys);
    bundle.user_text = std::move(usr);
    return bundle;
}

namespace {

// Candidate balanced {...} blocks, honoring string literals and escapes.
std::vector<std::string> balanced_objects(const std::string& text) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        int depth = 0;
        bool in_string = false;
        for (std::size_t j = i; j < text.size(); ++j) {
            const char c = text[j];
            if (in_string) {
                if (c == '\\')
                    ++j;
                else if (c == '"')
                    in_string = false;
            } else if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    out.push_back(text.substr(i, j - i + 1));
                    break;
                }
            }
        }
    }
    return out;
}

}  // namespace

ParsedDecision parse_decision(const std::string& raw, const DecisionSchema& schema) {
    const bool bottleneck = schema.kind == CaseKind::BottleneckDeparture;
    bool saw_wrong_case = false;
    std::string range_error;

    for (const std::string& block : balanced_objects(raw)) {
        json j = json::parse(block, nullptr, false);
        if (j.is_discarded() || !j.is_object()) continue;

        if (bottleneck) {
            if (!j.contains("departure_time")) {
                if (j.contains("route_id")) saw_wrong_case = true;
                continue;
            }
            const json& v = j.at("departure_time");
            double minutes;
            if (v.is_number()) {
                minutes = v.get<double>();
                if (minutes < 0.0 || minutes >= 1440.0) {
                    range_error = "departure_time " + v.dump() + " outside [0, 1440)";
                    continue;
                }
            } else if (v.is_string()) {
                auto t = parse_hhmm(v.get<std::string>());
                if (!t) {
                    range_error = "departure_time \"" + v.get<std::string>() +
                                  "\" is not a valid clock time";
                    continue;
                }
                minutes = *t;
            } else {
                continue;
            }
            if (minutes < schema.departure_lo_min || minutes > schema.departure_hi_min) {
                range_error = "departure_time " + format_hhmm(minutes) + " outside [" +
                              format_hhmm(schema.departure_lo_min) + ", " +
                              format_hhmm(schema.departure_hi_min) + "]";
                continue;
            }
            ParsedDecision d;
            d.departure_min = quantize_tenth(minutes);
            d.rationale_text = j.value("reason", "");
            d.raw_response = raw;
            return d;
        } else {
            if (!j.contains("route_id")) {
                if (j.contains("departure_time")) saw_wrong_case = true;
                continue;
            }
            const json& v = j.at("route_id");
            if (!v.is_number_integer()) continue;
            const int rid = v.get<int>();
            if (std::find(schema.route_ids.begin(), schema.route_ids.end(), rid) ==
                schema.route_ids.end()) {
                range_error = "route_id " + std::to_string(rid) + " not in the route set";
                continue;
            }
            ParsedDecision d;
            d.route_id = rid;
            d.rationale_text = j.value("reason", "");
            d.raw_response = raw;
            return d;
        }
    }

    if (!range_error.empty()) throw Error(ErrorKind::OutOfRange, range_error);
    if (saw_wrong_case)
        throw Error(ErrorKind::WrongCase, bottleneck
                                              ? "response answers the route case, expected a "
                                                "departure_time"
                                              : "response answers the departure case, expected a "
                                                "route_id");
    throw Error(ErrorKind::Parse, "no parsable decision object in response");
}

ParsedDecision self_correct(const ParsedDecision& first, const AgentState& state, int day,
                            const Scenario& scenario, const PromptTemplates& templates,
                            LlmGateway& gateway, bool* revised, std::string* failure_note) {
    const bool bottleneck = scenario.case_kind == CaseKind::BottleneckDeparture;
    if (revised) *revised = false;

    PromptBundle base = build_prompt(state, day, scenario, ReflectionToggles{}, templates);
    std::string text;
    if (bottleneck) {
        // Counterfactual: today's congestion looks like the most recent
        // experience, so travel time repeats and arrival follows from it.
        double tt = scenario.corridor ? scenario.corridor->free_flow_min : 0.0;
        if (!state.history.empty())
            tt = state.history.back().outcome.travel_time_min;
        else if (state.long_term.has_typical)
            tt = state.long_term.typical_travel_time_min;
        const double arrival = first.departure_min + tt;
        const double dev = arrival - state.persona.preferred_arrival.minutes;
        const double cost = schedule_cost(tt, arrival, state.persona);
        std::string summary = dev > 0   ? fmt1(dev) + " min late"
                              : dev < 0 ? fmt1(-dev) + " min early"
                                        : "exactly on time";
        text = templates.text("self_correct_bottleneck");
        text = replace_all(text, "{{FIRST_DECISION}}", format_hhmm(first.departure_min));
        text = replace_all(text, "{{CF_ARRIVAL}}", format_hhmm(arrival));
        text = replace_all(text, "{{CF_SUMMARY}}", summary);
        text = replace_all(text, "{{CF_COST}}", fmt1(cost));
        std::string fmt = templates.text("format_bottleneck");
        fmt = replace_all(fmt, "{{DEP_MIN}}", format_hhmm(base.schema.departure_lo_min));
        fmt = replace_all(fmt, "{{DEP_MAX}}", format_hhmm(base.schema.departure_hi_min));
        text = replace_all(text, "{{FORMAT}}", fmt);
    } else {
        double tt = 0.0;
        for (const auto& r : scenario.routes)
            if (r.route_id == first.route_id) tt = r.intercept_min;
        auto it = state.long_term.route_stats.find(first.route_id);
        if (it != state.long_term.route_stats.end()) tt = it->second.last_time_min;
        text = templates.text("self_correct_route");
        text = replace_all(text, "{{FIRST_DECISION}}", std::to_string(first.route_id));
        text = replace_all(text, "{{CF_TT}}", fmt1(tt));
        std::string ids;
        for (std::size_t i = 0; i < base.schema.route_ids.size(); ++i)
            ids += (i ? ", " : "") + std::to_string(base.schema.route_ids[i]);
        std::string fmt = templates.text("format_route");
        fmt = replace_all(fmt, "{{ROUTE_IDS}}", ids);
        text = replace_all(text, "{{FORMAT}}", fmt);
    }

    ChatRequest req;
    req.model = gateway.config().model_name;
    req.temperature = gateway.config().temperature;
    req.messages = {{"system", base.system_text}, {"user", base.user_text},
                    {"user", text}};
    try {
        const std::string raw = gateway.complete(req);
        ParsedDecision second = parse_decision(raw, base.schema);
        const bool changed = bottleneck ? second.departure_min != first.departure_min
                                        : second.route_id != first.route_id;
        if (revised) *revised = changed;
        return second;
    } catch (const Error& e) {
        if (failure_note) *failure_note = e.what();
        return first;  // fall back to the uncorrected decision
    }
}

PolicyDecision llm_decide(const AgentState& state, int day, const Scenario& scenario,
                          const ReflectionToggles& toggles, const PromptTemplates& templates,
                          LlmGateway& gateway) {
    PolicyDecision out;
    out.decision.agent_id = state.agent_id;
    out.decision.day = day;

    const PromptBundle bundle = build_prompt(state, day, scenario, toggles, templates);
    ChatRequest req;
    req.model = gateway.config().model_name;
    req.temperature = gateway.config().temperature;
    req.messages = {{"system", bundle.system_text}, {"user", bundle.user_text}};
    out.prompt_hash = request_hash(req);

    constexpr int kMaxAttempts = 3;
    std::optional<ParsedDecision> parsed;
    for (int attempt = 0; attempt < kMaxAttempts && !parsed; ++attempt) {
        try {
            parsed = parse_decision(gateway.complete(req), bundle.schema);
        } catch (const Error&) {
            // malformed/out-of-range response or transport failure: retry
        }
    }

    if (!parsed) {
        // Fallback: repeat yesterday; day 1 falls back to the heuristic day-1 rule.
        out.llm_fallback = true;
        if (!state.history.empty()) {
            out.decision = state.history.back().decision;
            out.decision.day = day;
        } else {
            HeuristicPolicy heuristic(scenario);
            out.decision = heuristic.decide(state, day).decision;
        }
        return out;
    }

    if (toggles.self_correction) {
        bool revised = false;
        ParsedDecision final_decision =
            self_correct(*parsed, state, day, scenario, templates, gateway, &revised);
        out.self_corrected = revised;
        parsed = final_decision;
    }

    if (scenario.case_kind == CaseKind::BottleneckDeparture)
        out.decision.departure_min = parsed->departure_min;
    else
        out.decision.route_id = parsed->route_id;
    return out;
}

LlmPolicy::LlmPolicy(const Scenario& scenario, std::shared_ptr<LlmGateway> gateway,
                     PromptTemplates templates)
    : scenario_(scenario), gateway_(std::move(gateway)), templates_(std::move(templates)) {}

PolicyDecision LlmPolicy::decide(const AgentState& state, int day) const {
    return llm_decide(state, day, scenario_, scenario_.llm.toggles, templates_, *gateway_);
}

}  // namespace commutesim

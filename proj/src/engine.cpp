#include "commutesim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "commutesim/errors.hpp"
#include "commutesim/gateway.hpp"
#include "commutesim/prompt.hpp"

namespace commutesim {

using nlohmann::json;

const char* to_string(ConvergenceVerdict v) {
    switch (v) {
        case ConvergenceVerdict::Converged: return "converged";
        case ConvergenceVerdict::NotConverged: return "not_converged";
        case ConvergenceVerdict::InsufficientData: return "insufficient_data";
    }
    return "?";
}

namespace {

json decision_to_json(const TravelDecision& d) {
    json j = {{"agent_id", d.agent_id}, {"day", d.day}};
    if (d.departure_min) j["departure_min"] = *d.departure_min;
    if (d.route_id) j["route_id"] = *d.route_id;
    return j;
}

TravelDecision decision_from_json(const json& j) {
    TravelDecision d;
    d.agent_id = j.at("agent_id").get<int>();
    d.day = j.at("day").get<int>();
    if (j.contains("departure_min")) d.departure_min = j.at("departure_min").get<double>();
    if (j.contains("route_id")) d.route_id = j.at("route_id").get<int>();
    return d;
}

json outcome_to_json(const TravelOutcome& o) {
    json j = {{"agent_id", o.agent_id},
              {"day", o.day},
              {"departure_min", o.departure_min},
              {"arrival_min", o.arrival_min},
              {"travel_time_min", o.travel_time_min},
              {"queue_delay_min", o.queue_delay_min},
              {"schedule_dev_min", o.schedule_dev_min},
              {"cost", o.cost}};
    if (o.route_id) j["route_id"] = *o.route_id;
    return j;
}

TravelOutcome outcome_from_json(const json& j) {
    TravelOutcome o;
    o.agent_id = j.at("agent_id").get<int>();
    o.day = j.at("day").get<int>();
    o.departure_min = j.at("departure_min").get<double>();
    o.arrival_min = j.at("arrival_min").get<double>();
    o.travel_time_min = j.at("travel_time_min").get<double>();
    o.queue_delay_min = j.at("queue_delay_min").get<double>();
    o.schedule_dev_min = j.at("schedule_dev_min").get<double>();
    o.cost = j.at("cost").get<double>();
    if (j.contains("route_id")) o.route_id = j.at("route_id").get<int>();
    return o;
}

double histogram_l1(const std::map<int, int>& a, const std::map<int, int>& b) {
    double na = 0.0, nb = 0.0;
    for (const auto& [k, v] : a) na += v;
    for (const auto& [k, v] : b) nb += v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    std::set<int> bins;
    for (const auto& [k, v] : a) bins.insert(k);
    for (const auto& [k, v] : b) bins.insert(k);
    double l1 = 0.0;
    for (int bin : bins) {
        const auto ia = a.find(bin);
        const auto ib = b.find(bin);
        const double pa = ia == a.end() ? 0.0 : ia->second / na;
        const double pb = ib == b.end() ? 0.0 : ib->second / nb;
        l1 += std::abs(pa - pb);
    }
    return l1;
}

}  // namespace

json day_record_to_json(const DayRecord& r) {
    json decisions = json::array();
    for (const auto& d : r.decisions) decisions.push_back(decision_to_json(d));
    json outcomes = json::array();
    for (const auto& o : r.outcomes) outcomes.push_back(outcome_to_json(o));
    json hist = json::object();
    for (const auto& [bin, count] : r.departure_histogram) hist[std::to_string(bin)] = count;
    json flows = json::object();
    for (const auto& [rid, count] : r.route_flows) flows[std::to_string(rid)] = count;
    return {{"day", r.day},
            {"decisions", decisions},
            {"outcomes", outcomes},
            {"aggregates",
             {{"mean_tt", r.mean_tt},
              {"max_tt", r.max_tt},
              {"mean_cost", r.mean_cost},
              {"late_share", r.late_share}}},
            {"route_flows", flows},
            {"departure_histogram", hist},
            {"convergence", {{"hist_l1_vs_prev", r.hist_l1_vs_prev},
                             {"max_flow_delta_vs_prev", r.max_flow_delta_vs_prev}}},
            {"llm", {{"fallbacks", r.llm_fallbacks},
                     {"self_corrections", r.llm_self_corrections},
                     {"prompt_digest", r.llm_prompt_digest}}}};
}

DayRecord day_record_from_json(const json& j) {
    DayRecord r;
    r.day = j.at("day").get<int>();
    for (const auto& d : j.at("decisions")) r.decisions.push_back(decision_from_json(d));
    for (const auto& o : j.at("outcomes")) r.outcomes.push_back(outcome_from_json(o));
    const json& agg = j.at("aggregates");
    r.mean_tt = agg.at("mean_tt").get<double>();
    r.max_tt = agg.at("max_tt").get<double>();
    r.mean_cost = agg.at("mean_cost").get<double>();
    r.late_share = agg.at("late_share").get<double>();
    for (const auto& [key, v] : j.at("route_flows").items())
        r.route_flows[std::stoi(key)] = v.get<int>();
    for (const auto& [key, v] : j.at("departure_histogram").items())
        r.departure_histogram[std::stoi(key)] = v.get<int>();
    r.hist_l1_vs_prev = j.at("convergence").at("hist_l1_vs_prev").get<double>();
    r.max_flow_delta_vs_prev = j.at("convergence").at("max_flow_delta_vs_prev").get<int>();
    r.llm_fallbacks = j.at("llm").at("fallbacks").get<int>();
    r.llm_self_corrections = j.at("llm").at("self_corrections").get<int>();
    r.llm_prompt_digest = j.at("llm").value("prompt_digest", "");
    return r;
}

namespace {

json runlog_header(const RunLog& log) {
    return {{"format", "commutesim-runlog"},
            {"version", 1},
            {"scenario", scenario_to_json(log.scenario)},
            {"master_seed", log.master_seed},
            {"policy",
             {{"kind", log.policy_kind},
              {"prompt_template_hash", log.prompt_template_hash},
              {"cassette_path", log.cassette_path},
              {"cassette_digest", log.cassette_digest},
              {"gateway_mode", log.gateway_mode}}}};
}

json runlog_footer(const RunLog& log) {
    json day = log.convergence.day ? json(*log.convergence.day) : json(nullptr);
    return {{"footer", true},
            {"convergence", {{"verdict", to_string(log.convergence.verdict)}, {"day", day}}},
            {"llm_totals",
             {{"fallbacks", log.total_llm_fallbacks},
              {"self_corrections", log.total_llm_self_corrections}}}};
}

}  // namespace

void save_runlog(const RunLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write run log: " + path);
    out << runlog_header(log).dump() << "\n";
    for (const auto& d : log.days) out << day_record_to_json(d).dump() << "\n";
    out << runlog_footer(log).dump() << "\n";
}

RunLog load_runlog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open run log: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "run log is empty: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("run log header: ") + e.what());
    }
    if (header.value("format", "") != "commutesim-runlog")
        throw Error(ErrorKind::Parse, "not a commutesim run log: " + path);

    RunLog log;
    log.scenario = scenario_from_json(header.at("scenario"));
    log.master_seed = header.at("master_seed").get<std::uint64_t>();
    const json& pol = header.at("policy");
    log.policy_kind = pol.at("kind").get<std::string>();
    log.prompt_template_hash = pol.value("prompt_template_hash", "");
    log.cassette_path = pol.value("cassette_path", "");
    log.cassette_digest = pol.value("cassette_digest", "");
    log.gateway_mode = pol.value("gateway_mode", "");

    bool saw_footer = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            break;  // truncated tail: keep the valid prefix
        }
        if (j.is_object() && j.value("footer", false)) {
            const json& conv = j.at("convergence");
            const std::string verdict = conv.at("verdict").get<std::string>();
            if (verdict == "converged") log.convergence.verdict = ConvergenceVerdict::Converged;
            else if (verdict == "not_converged")
                log.convergence.verdict = ConvergenceVerdict::NotConverged;
            else
                log.convergence.verdict = ConvergenceVerdict::InsufficientData;
            if (!conv.at("day").is_null()) log.convergence.day = conv.at("day").get<int>();
            log.total_llm_fallbacks = j.at("llm_totals").at("fallbacks").get<int>();
            log.total_llm_self_corrections = j.at("llm_totals").at("self_corrections").get<int>();
            saw_footer = true;
            break;
        }
        log.days.push_back(day_record_from_json(j));
    }
    if (!saw_footer)
        log.convergence = check_convergence(log.days, log.scenario.engine.convergence_window_days,
                                            log.scenario.engine.convergence_epsilon,
                                            log.scenario.case_kind);
    return log;
}

ConvergenceResult check_convergence(const std::vector<DayRecord>& days, int window, double epsilon,
                                    CaseKind kind) {
    if (window < 2) throw Error(ErrorKind::Validation, "check_convergence: window must be >= 2");
    ConvergenceResult result;
    if (static_cast<int>(days.size()) < window + 1) {
        result.verdict = ConvergenceVerdict::InsufficientData;
        return result;
    }
    // Day index d (0-based) qualifies when days d-window+1..d all stayed within
    // tolerance of their previous day.
    for (std::size_t d = static_cast<std::size_t>(window); d < days.size(); ++d) {
        bool ok = true;
        for (std::size_t k = d - window + 1; k <= d; ++k) {
            if (days[k].hist_l1_vs_prev > epsilon) ok = false;
            if (kind == CaseKind::TwoRoute && days[k].max_flow_delta_vs_prev > 1) ok = false;
            if (!ok) break;
        }
        if (ok) {
            result.verdict = ConvergenceVerdict::Converged;
            result.day = days[d].day;
            return result;
        }
    }
    result.verdict = ConvergenceVerdict::NotConverged;
    return result;
}

Engine::Engine(const Scenario& scenario) : scenario_(scenario) {
    switch (scenario_.policy_kind) {
        case PolicyKind::Heuristic:
            policy_ = std::make_unique<HeuristicPolicy>(scenario_);
            break;
        case PolicyKind::Replay:
            policy_ = std::make_unique<ReplayPolicy>(scenario_);
            break;
        case PolicyKind::Llm: {
            gateway_ = std::make_shared<LlmGateway>(scenario_.llm.gateway);
            PromptTemplates templates = scenario_.llm.prompt_dir.empty()
                                            ? PromptTemplates::builtin()
                                            : PromptTemplates::load_dir(scenario_.llm.prompt_dir);
            prompt_template_hash_ = templates.set_hash();
            policy_ = std::make_unique<LlmPolicy>(scenario_, gateway_, std::move(templates));
            break;
        }
    }
}

DayRecord Engine::run_day(std::vector<AgentState>& states, int day) {
    const int n = static_cast<int>(states.size());
    std::vector<PolicyDecision> decisions(n);

    // Phase 1: decisions, computed only from day-1 states. The per-(agent,day)
    // rng streams make the result independent of scheduling.
    const int threads = std::min(scenario_.engine.threads, n);
    if (threads <= 1) {
        for (int a = 0; a < n; ++a) decisions[a] = policy_->decide(states[a], day);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        std::vector<std::exception_ptr> errors(threads);
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    int a;
                    while ((a = next.fetch_add(1)) < n)
                        decisions[a] = policy_->decide(states[a], day);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Phase 2: one traffic simulation over all decisions.
    std::vector<TravelDecision> wire(n);
    for (int a = 0; a < n; ++a) wire[a] = decisions[a].decision;
    std::vector<TravelOutcome> outcomes =
        scenario_.case_kind == CaseKind::BottleneckDeparture
            ? simulate_bottleneck_day(wire, *scenario_.corridor, scenario_.persona)
            : simulate_route_day(wire, scenario_.routes, scenario_.persona,
                                 scenario_.heuristic.nominal_departure);

    // Phase 3: sequential memory updates.
    for (int a = 0; a < n; ++a) {
        MemoryEntry e;
        e.day = day;
        e.decision = wire[a];
        e.outcome = outcomes[a];
        record_outcome(states[a], e);
    }

    DayRecord rec;
    rec.day = day;
    rec.decisions = std::move(wire);
    rec.outcomes = std::move(outcomes);
    double sum_tt = 0.0, sum_cost = 0.0;
    int late = 0;
    for (const auto& o : rec.outcomes) {
        sum_tt += o.travel_time_min;
        sum_cost += o.cost;
        rec.max_tt = std::max(rec.max_tt, o.travel_time_min);
        if (o.schedule_dev_min > 0) ++late;
        rec.departure_histogram[static_cast<int>(std::floor(o.departure_min + 1e-9))] += 1;
        if (o.route_id) rec.route_flows[*o.route_id] += 1;
    }
    rec.mean_tt = sum_tt / n;
    rec.mean_cost = sum_cost / n;
    rec.late_share = static_cast<double>(late) / n;
    std::string hash_concat;
    for (const auto& d : decisions) {
        if (d.llm_fallback) ++rec.llm_fallbacks;
        if (d.self_corrected) ++rec.llm_self_corrections;
        hash_concat += d.prompt_hash;
    }
    if (!hash_concat.empty()) rec.llm_prompt_digest = text_digest(hash_concat);
    return rec;
}

RunLog Engine::log_stub() const {
    RunLog log;
    log.scenario = scenario_;
    log.master_seed = scenario_.master_seed;
    log.policy_kind = to_string(scenario_.policy_kind);
    if (scenario_.policy_kind == PolicyKind::Llm) {
        log.prompt_template_hash = prompt_template_hash_;
        log.gateway_mode = to_string(scenario_.llm.gateway.mode);
        log.cassette_path = scenario_.llm.gateway.cassette_path;
        if (!log.cassette_path.empty() && scenario_.llm.gateway.mode == GatewayMode::Replay)
            log.cassette_digest = file_digest(log.cassette_path);
    }
    return log;
}

RunLog Engine::run(const DayCallback& on_day) {
    RunLog log = log_stub();

    std::vector<AgentState> states;
    states.reserve(scenario_.n_agents);
    for (int a = 0; a < scenario_.n_agents; ++a)
        states.push_back(make_agent_state(a, scenario_.persona, scenario_.master_seed));

    for (int day = 1; day <= scenario_.horizon_days; ++day) {
        DayRecord rec = run_day(states, day);
        if (!log.days.empty()) {
            const DayRecord& prev = log.days.back();
            rec.hist_l1_vs_prev = histogram_l1(rec.departure_histogram, prev.departure_histogram);
            int delta = 0;
            std::set<int> rids;
            for (const auto& [rid, c] : rec.route_flows) rids.insert(rid);
            for (const auto& [rid, c] : prev.route_flows) rids.insert(rid);
            for (int rid : rids) {
                const auto a = rec.route_flows.find(rid);
                const auto b = prev.route_flows.find(rid);
                const int ca = a == rec.route_flows.end() ? 0 : a->second;
                const int cb = b == prev.route_flows.end() ? 0 : b->second;
                delta = std::max(delta, std::abs(ca - cb));
            }
            rec.max_flow_delta_vs_prev = delta;
        }
        log.total_llm_fallbacks += rec.llm_fallbacks;
        log.total_llm_self_corrections += rec.llm_self_corrections;
        if (on_day) on_day(rec);
        log.days.push_back(std::move(rec));
    }
    log.convergence = check_convergence(log.days, scenario_.engine.convergence_window_days,
                                        scenario_.engine.convergence_epsilon, scenario_.case_kind);
    return log;
}

RunLog run_scenario(const Scenario& scenario, const std::string& runlog_path,
                    const Engine::DayCallback& on_day) {
    Engine engine(scenario);
    if (runlog_path.empty()) return engine.run(on_day);

    // Stream incrementally so a crash leaves a loadable prefix.
    std::ofstream out(runlog_path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write run log: " + runlog_path);
    out << runlog_header(engine.log_stub()).dump() << "\n";
    RunLog log = engine.run([&](const DayRecord& rec) {
        out << day_record_to_json(rec).dump() << "\n";
        out.flush();
        if (on_day) on_day(rec);
    });
    out << runlog_footer(log).dump() << "\n";
    return log;
}

}  // namespace commutesim

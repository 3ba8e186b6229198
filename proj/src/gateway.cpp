#include "commutesim/gateway.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "commutesim/errors.hpp"

#include "httplib.h"

namespace commutesim {

using nlohmann::json;

namespace {

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (char c : s) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (ws) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(c);
    }
    return out;
}

std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xCBF29CE484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// endpoint_url -> (scheme://host:port, path)
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    std::size_t path_start =
        scheme_end == std::string::npos ? url.find('/') : url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

json request_to_wire(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", req.model}, {"temperature", req.temperature}, {"messages", messages}};
}

}  // namespace

std::string text_digest(const std::string& data) { return hex64(fnv1a(data)); }

std::string request_hash(const ChatRequest& req) {
    std::uint64_t h = fnv1a(collapse_whitespace(req.model));
    char tbuf[32];
    std::snprintf(tbuf, sizeof(tbuf), "%.6g", req.temperature);
    h = fnv1a(tbuf, h);
    for (const auto& m : req.messages) {
        h = fnv1a("\x1f" + collapse_whitespace(m.role), h);
        h = fnv1a("\x1e" + collapse_whitespace(m.content), h);
    }
    return hex64(h);
}

json exchange_to_json(const ChatExchange& e) {
    return {{"request_hash", e.request_hash},
            {"request", request_to_wire(e.request)},
            {"response",
             {{"text", e.response.text},
              {"prompt_tokens", e.response.prompt_tokens},
              {"completion_tokens", e.response.completion_tokens},
              {"latency_ms", e.response.latency_ms}}}};
}

ChatExchange exchange_from_json(const json& j) {
    ChatExchange e;
    e.request_hash = j.at("request_hash").get<std::string>();
    const json& rq = j.at("request");
    e.request.model = rq.at("model").get<std::string>();
    e.request.temperature = rq.at("temperature").get<double>();
    for (const auto& m : rq.at("messages"))
        e.request.messages.push_back(
            {m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    const json& rs = j.at("response");
    e.response.text = rs.at("text").get<std::string>();
    e.response.prompt_tokens = rs.value("prompt_tokens", 0);
    e.response.completion_tokens = rs.value("completion_tokens", 0);
    e.response.latency_ms = rs.value("latency_ms", 0.0);
    return e;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file for digest: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hex64(fnv1a(data));
}

// Counting semaphore bounding in-flight live requests.
class Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire() {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return count_ > 0; });
        --count_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lk(m_);
            ++count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    int count_;
};

LlmGateway::LlmGateway(GatewayConfig config) : config_(std::move(config)) {
    if (config_.mode == GatewayMode::Replay) {
        if (config_.cassette_path.empty())
            throw Error(ErrorKind::Validation, "replay mode requires a cassette_path");
        load_cassette();
    }
    if (config_.mode == GatewayMode::Record && config_.cassette_path.empty())
        throw Error(ErrorKind::Validation, "record mode requires a cassette_path");
    semaphore_ = std::make_unique<Semaphore>(std::max(1, config_.parallelism_bound));
}

LlmGateway::~LlmGateway() = default;

void LlmGateway::load_cassette() {
    std::ifstream in(config_.cassette_path);
    if (!in) throw Error(ErrorKind::Io, "cannot open cassette: " + config_.cassette_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse,
                        std::string("cassette line parse error: ") + e.what());
        }
        ChatExchange e = exchange_from_json(j);
        replay_map_.emplace(e.request_hash, e.response);  // first entry wins
    }
}

std::string LlmGateway::complete(const ChatRequest& request) {
    if (config_.mode == GatewayMode::Replay) {
        const std::string hash = request_hash(request);
        auto it = replay_map_.find(hash);
        if (it == replay_map_.end())
            throw Error(ErrorKind::MissingEntry, "replay miss: hash " + hash + " not in cassette " +
                                                     config_.cassette_path);
        return it->second.text;
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::string text = complete_live(request);
    const auto t1 = std::chrono::steady_clock::now();

    if (config_.mode == GatewayMode::Record) {
        ChatExchange e;
        e.request = request;
        e.request_hash = request_hash(request);
        e.response.text = text;
        e.response.latency_ms =
            std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;
        std::lock_guard<std::mutex> lk(cassette_mutex_);
        std::ofstream out(config_.cassette_path, std::ios::app);
        if (!out) throw Error(ErrorKind::Io, "cannot append cassette: " + config_.cassette_path);
        out << exchange_to_json(e).dump() << "\n";
    }
    return text;
}

std::string LlmGateway::complete_live(const ChatRequest& request) {
    auto [base, path] = split_url(config_.endpoint_url);
    const json body = request_to_wire(request);

    semaphore_->acquire();
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {}

    struct Release {
        LlmGateway* g;
        ~Release() {
            --g->in_flight_;
            g->semaphore_->release();
        }
    } release{this};

    std::string last_error;
    const int attempts = std::max(1, config_.max_retries + 1);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            const double backoff = config_.backoff_base_sec * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        }
        ++network_attempts_;
        httplib::Client cli(base);
        cli.set_connection_timeout(std::chrono::duration<double>(config_.timeout_sec));
        cli.set_read_timeout(std::chrono::duration<double>(config_.timeout_sec));
        httplib::Headers headers;
        if (!config_.api_key_env_var_name.empty()) {
            if (const char* key = std::getenv(config_.api_key_env_var_name.c_str()))
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = cli.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw Error(ErrorKind::Transport,
                        "endpoint returned HTTP " + std::to_string(res->status));
        }
        try {
            json j = json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse,
                        std::string("malformed completion payload: ") + e.what());
        }
    }
    throw Error(ErrorKind::Transport, "gateway: " + last_error + " after " +
                                          std::to_string(attempts) + " attempts to " +
                                          config_.endpoint_url);
}

struct MockLlmServer::Impl {
    httplib::Server server;
    std::thread thread;
    std::vector<MockRule> rules;
    std::vector<int> hit_counts;
    std::mutex mutex;
};

MockLlmServer::MockLlmServer(std::vector<MockRule> rules, int port) {
    impl_ = std::make_unique<Impl>();
    impl_->rules = std::move(rules);
    impl_->hit_counts.assign(impl_->rules.size(), 0);

    impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                      httplib::Response& res) {
        const int now = ++concurrent_;
        int seen = max_concurrent_.load();
        while (now > seen && !max_concurrent_.compare_exchange_weak(seen, now)) {}
        ++hits_;

        std::string flat;
        try {
            json j = json::parse(req.body);
            for (const auto& m : j.at("messages"))
                flat += m.at("content").get<std::string>() + "\n";
        } catch (...) {
            flat = req.body;
        }

        int status = 200;
        std::string text = "{}";
        {
            std::lock_guard<std::mutex> lk(impl_->mutex);
            for (std::size_t i = 0; i < impl_->rules.size(); ++i) {
                const MockRule& r = impl_->rules[i];
                bool match = true;
                for (const auto& needle : r.contains)
                    if (flat.find(needle) == std::string::npos) {
                        match = false;
                        break;
                    }
                if (!match) continue;
                const int hit = impl_->hit_counts[i]++;
                if (!r.status_sequence.empty()) {
                    const std::size_t idx =
                        std::min<std::size_t>(hit, r.status_sequence.size() - 1);
                    status = r.status_sequence[idx];
                }
                text = r.response_text;
                break;
            }
        }

        if (status != 200) {
            res.status = status;
            res.set_content("{\"error\":\"scripted\"}", "application/json");
        } else {
            json out = {{"choices",
                         json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})},
                        {"usage", {{"prompt_tokens", 0}, {"completion_tokens", 0}}}};
            res.set_content(out.dump(), "application/json");
        }
        --concurrent_;
    });

    if (port == 0) {
        port_ = impl_->server.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw Error(ErrorKind::Io, "mock server: cannot bind a port");
    } else {
        if (!impl_->server.bind_to_port("127.0.0.1", port))
            throw Error(ErrorKind::Io, "mock server: cannot bind port " + std::to_string(port));
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockLlmServer::~MockLlmServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockLlmServer::endpoint_url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
}

std::vector<MockRule> MockLlmServer::rules_from_json(const json& j) {
    std::vector<MockRule> rules;
    for (const auto& e : j) {
        MockRule r;
        if (e.contains("contains"))
            for (const auto& s : e.at("contains")) r.contains.push_back(s.get<std::string>());
        r.response_text = e.at("response").get<std::string>();
        if (e.contains("status_sequence"))
            for (const auto& s : e.at("status_sequence")) r.status_sequence.push_back(s.get<int>());
        rules.push_back(std::move(r));
    }
    return rules;
}

}  // namespace commutesim

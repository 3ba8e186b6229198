#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "commutesim/scenario.hpp"

#include "json.hpp"

namespace commutesim {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::string model;
    double temperature = 0.0;
};

struct ChatResponse {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    double latency_ms = 0.0;
};

struct ChatExchange {
    ChatRequest request;
    ChatResponse response;
    std::string request_hash;
};

// Stable digest of the normalized request (whitespace runs collapsed), hex.
std::string request_hash(const ChatRequest& req);

// FNV-1a hex digest of a byte string.
std::string text_digest(const std::string& data);

nlohmann::json exchange_to_json(const ChatExchange& e);
ChatExchange exchange_from_json(const nlohmann::json& j);

// FNV-1a over a file's bytes; identifies cassettes in run logs.
std::string file_digest(const std::string& path);

// Transport to a chat-completions endpoint with record/replay cassettes.
//
//   live:   HTTP round trip with exponential backoff.
//   record: live + append each exchange to the cassette (JSON lines).
//   replay: look up the request hash in the cassette; no network.
//
// Errors: Error{Transport} after retries are exhausted, Error{MissingEntry}
// on a replay miss.
class LlmGateway {
public:
    explicit LlmGateway(GatewayConfig config);
    ~LlmGateway();

    std::string complete(const ChatRequest& request);

    const GatewayConfig& config() const { return config_; }
    // Number of HTTP attempts made; replay mode must keep this at zero.
    std::uint64_t network_attempts() const { return network_attempts_.load(); }
    // Concurrency watermark maintained by the live path (for tests).
    int max_in_flight_seen() const { return max_in_flight_.load(); }

private:
    std::string complete_live(const ChatRequest& request);
    void load_cassette();

    GatewayConfig config_;
    std::map<std::string, ChatResponse> replay_map_;
    std::mutex cassette_mutex_;
    std::atomic<std::uint64_t> network_attempts_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    std::unique_ptr<class Semaphore> semaphore_;
};

// Scripted in-process endpoint speaking the same wire shape.
struct MockRule {
    std::vector<std::string> contains;  // all substrings must match the flattened request text
    std::string response_text;          // assistant message content
    std::vector<int> status_sequence;   // optional per-hit HTTP statuses (repeats last)
};

class MockLlmServer {
public:
    // port 0 binds any free port.
    explicit MockLlmServer(std::vector<MockRule> rules, int port = 0);
    ~MockLlmServer();

    int port() const { return port_; }
    std::string endpoint_url() const;
    int hits() const { return hits_.load(); }
    int max_concurrent_seen() const { return max_concurrent_.load(); }

    static std::vector<MockRule> rules_from_json(const nlohmann::json& j);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    std::atomic<int> concurrent_{0};
    std::atomic<int> max_concurrent_{0};
};

}  // namespace commutesim

// Chat-completion client for the slow-thinking stages. Three transports
// behind one interface: an OpenAI-compatible HTTP client, a scripted mock
// consumed strictly in order, and a goal-aware oracle used by tests and
// offline benchmark suites.
#pragma once

#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "r3/world.hpp"

namespace r3 {

enum class LlmStage { Perception, Planning, Prediction, Ending, Formulation };

inline const char* to_string(LlmStage s) {
    switch (s) {
        case LlmStage::Perception: return "perception";
        case LlmStage::Planning: return "planning";
        case LlmStage::Prediction: return "prediction";
        case LlmStage::Ending: return "ending";
        case LlmStage::Formulation: return "formulation";
    }
    return "?";
}

/// Structured hints carried beside the prompt so the oracle transport can
/// answer without parsing prose. HTTP and scripted transports ignore it.
struct PromptContext {
    std::string viewpoint;
    std::vector<std::string> option_targets;  // candidate ids in option-letter order
    bool has_stop_option = false;
    int max_revisit = 0;
};

struct ChatRequest {
    LlmStage stage = LlmStage::Perception;
    std::string prompt;
    PromptContext ctx;
};

struct LlmCall {
    std::string stage;
    std::string prompt;
    std::string reply;
    int attempt = 0;  // 0 first try, n-th retry otherwise
    long prompt_tokens = -1;
    long completion_tokens = -1;
    bool oracle = false;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual const char* name() const = 0;
    virtual bool is_oracle() const { return false; }
};

// ---------------------------------------------------------------------------
// Scripted transport: a transcript consumed strictly in order. Each entry may
// pin a substring the prompt must contain; exhaustion or a mismatch fails
// loudly. Transcript files are JSONL of {"expect_substring": ..., "reply": ...}.

class ScriptedTransport : public ChatTransport {
public:
    struct Entry {
        std::string expect_substring;
        std::string reply;
    };

    explicit ScriptedTransport(std::vector<Entry> entries) : entries_(std::move(entries)) {}

    static ScriptedTransport from_jsonl(const std::string& path) {
        std::istringstream in(read_text_file(path));
        std::vector<Entry> entries;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                Json j = Json::parse(line);
                entries.push_back({j.value("expect_substring", std::string{}),
                                   j.at("reply").get<std::string>()});
            } catch (const Json::exception& e) {
                throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return ScriptedTransport(std::move(entries));
    }

    std::string complete(const ChatRequest& request) override {
        if (next_ >= entries_.size())
            throw Error("scripted transport exhausted after " + std::to_string(entries_.size()) +
                        " replies (stage " + to_string(request.stage) + ")");
        const Entry& e = entries_[next_++];
        if (!e.expect_substring.empty() && request.prompt.find(e.expect_substring) == std::string::npos)
            throw Error("scripted transport: prompt for entry " + std::to_string(next_ - 1) +
                        " does not contain \"" + e.expect_substring + "\"");
        return e.reply;
    }

    const char* name() const override { return "scripted"; }
    std::size_t remaining() const { return entries_.size() - next_; }

private:
    std::vector<Entry> entries_;
    std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Oracle transport: answers from the world and the episode goal. Test-only
// by design and flagged as such in every transcript entry.

class OracleTransport : public ChatTransport {
public:
    OracleTransport(const WorldGraph& world, std::string goal)
        : world_(&world), goal_(std::move(goal)) {}

    std::string complete(const ChatRequest& request) override {
        const PromptContext& ctx = request.ctx;
        switch (request.stage) {
            case LlmStage::Perception:
                return "You see: " + tag_join(ctx.viewpoint) + ".";
            case LlmStage::Planning:
                return "Head to " + goal_ + " along the shortest route.";
            case LlmStage::Prediction: {
                if (ctx.option_targets.empty())
                    return ctx.has_stop_option ? std::string(1, 'A') : std::string{};
                if (ctx.has_stop_option && ctx.viewpoint == goal_)
                    return std::string(1, static_cast<char>('A' + ctx.option_targets.size()));
                std::size_t best = 0;
                double best_cost = std::numeric_limits<double>::max();
                for (std::size_t i = 0; i < ctx.option_targets.size(); ++i) {
                    const auto& cand = ctx.option_targets[i];
                    double cost = world_->edge_length(ctx.viewpoint, cand) +
                                  geodesic(*world_, cand, goal_).distance;
                    if (cost < best_cost - 1e-12) {
                        best_cost = cost;
                        best = i;
                    }
                }
                return std::string(1, static_cast<char>('A' + best));
            }
            case LlmStage::Ending:
                return geodesic(*world_, ctx.viewpoint, goal_).distance < 3.0 ? "Yes" : "No";
            case LlmStage::Formulation:
                // heavy revisiting marks a catastrophically polluted history:
                // start over rather than push on
                if (ctx.max_revisit > 4)
                    return "DECISION: RESTART\nPLAN: Return to the start and take the shortest "
                           "route to the goal.";
                return "DECISION: CONTINUE\nPLAN: Proceed along the shortest route to the goal.";
        }
        return {};
    }

    const char* name() const override { return "oracle"; }
    bool is_oracle() const override { return true; }

private:
    std::string tag_join(const std::string& vp) const {
        std::set<std::string> tags;
        for (const auto& s : world_->at(vp).slots) tags.insert(s.tags.begin(), s.tags.end());
        std::string out;
        for (const auto& t : tags) {
            if (!out.empty()) out += ", ";
            out += t;
        }
        return out;
    }

    const WorldGraph* world_;
    std::string goal_;
};

// ---------------------------------------------------------------------------
// HTTP transport: OpenAI-compatible chat completions. The bearer token comes
// from the environment, never from config files.

struct HttpLlmConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key_env = "R3_LLM_API_KEY";
    double temperature = 0.0;
    int timeout_seconds = 60;
};

class HttpTransport : public ChatTransport {
public:
    explicit HttpTransport(HttpLlmConfig config);
    std::string complete(const ChatRequest& request) override;
    const char* name() const override { return "http"; }
    long last_prompt_tokens() const { return last_prompt_tokens_; }
    long last_completion_tokens() const { return last_completion_tokens_; }

private:
    HttpLlmConfig config_;
    std::string api_key_;
    long last_prompt_tokens_ = -1;
    long last_completion_tokens_ = -1;
};

// ---------------------------------------------------------------------------
// Client: logs every call verbatim; retries are the callers' concern.

class LlmClient {
public:
    explicit LlmClient(std::shared_ptr<ChatTransport> transport, int retry_limit = 2)
        : transport_(std::move(transport)), retry_limit_(retry_limit) {}

    /// One raw transport round-trip, appended to the transcript.
    std::string complete(LlmStage stage, const std::string& prompt, const PromptContext& ctx,
                         int attempt = 0) {
        ChatRequest req{stage, prompt, ctx};
        LlmCall call;
        call.stage = to_string(stage);
        call.prompt = prompt;
        call.attempt = attempt;
        call.oracle = transport_->is_oracle();
        try {
            call.reply = transport_->complete(req);
        } catch (...) {
            calls_.push_back(std::move(call));  // record the failed call, then surface it
            throw;
        }
        if (auto* http = dynamic_cast<HttpTransport*>(transport_.get())) {
            call.prompt_tokens = http->last_prompt_tokens();
            call.completion_tokens = http->last_completion_tokens();
        }
        calls_.push_back(call);
        return call.reply;
    }

    int retry_limit() const { return retry_limit_; }
    const std::vector<LlmCall>& calls() const { return calls_; }
    std::size_t call_count() const { return calls_.size(); }
    const ChatTransport& transport() const { return *transport_; }

private:
    std::shared_ptr<ChatTransport> transport_;
    int retry_limit_;
    std::vector<LlmCall> calls_;
};

}  // namespace r3

// The HTTP implementation pulls in cpp-httplib, which is heavy; keep it at
// the bottom so the declaration order above stays readable.
#include <httplib.h>

namespace r3 {

inline HttpTransport::HttpTransport(HttpLlmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        const char* env = std::getenv("R3_LLM_ENDPOINT");
        if (!env || !*env)
            throw Error("http transport: no endpoint configured and R3_LLM_ENDPOINT is unset");
        config_.endpoint = env;
    }
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) api_key_ = key;
}

inline std::string HttpTransport::complete(const ChatRequest& request) {
    httplib::Client client(config_.endpoint);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(config_.timeout_seconds, 0);

    Json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["messages"] = Json::array({Json{{"role", "user"}, {"content", request.prompt}}});

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res)
        throw Error("http transport: request to " + config_.endpoint + config_.path + " failed (" +
                    httplib::to_string(res.error()) + ")");
    if (res->status != 200)
        throw Error("http transport: status " + std::to_string(res->status) + ": " +
                    res->body.substr(0, 200));
    try {
        Json j = Json::parse(res->body);
        const auto& usage = j.value("usage", Json::object());
        last_prompt_tokens_ = usage.value("prompt_tokens", -1);
        last_completion_tokens_ = usage.value("completion_tokens", -1);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
        throw Error(std::string("http transport: malformed completion response: ") + e.what());
    }
}

}  // namespace r3

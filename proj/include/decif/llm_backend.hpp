#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "decif/errors.hpp"
#include "decif/prompting.hpp"
#include "decif/util.hpp"

namespace decif::backend {

enum class Role { System, User, Assistant };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

inline ChatMessage user_message(std::string content) {
    return ChatMessage{Role::User, std::move(content)};
}

inline void validate_message(const ChatMessage& m) {
    if (trim(m.content).empty())
        throw Error(ErrorCode::Precondition, "chat message content must be non-empty");
}

struct GenerationParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_tokens = 4096;
    std::vector<std::string> stop_sequences;
};

inline void validate_params(const GenerationParams& p) {
    if (p.temperature < 0.0)
        throw Error(ErrorCode::Config, "temperature must be >= 0");
    if (!(p.top_p > 0.0 && p.top_p <= 1.0))
        throw Error(ErrorCode::Config, "top_p must be in (0, 1]");
    if (p.max_tokens < 1)
        throw Error(ErrorCode::Config, "max_tokens must be >= 1");
}

struct BackendConfig {
    std::string endpoint_url = "http://localhost:8000/v1";
    std::string model_id = "default";
    std::string api_key_env = "DECIF_API_KEY";
    int request_timeout_ms = 120000;
    int max_retries = 3;
    int max_in_flight = 8;
    int backoff_base_ms = 500;   // exponential, factor 2, full jitter
    int min_request_interval_ms = 0; // crude client-side rate limit, 0 = off
};

inline void validate_backend_config(const BackendConfig& c) {
    if (c.max_in_flight < 1)
        throw Error(ErrorCode::Config, "max_in_flight must be >= 1");
    if (c.max_retries < 0)
        throw Error(ErrorCode::Config, "max_retries must be >= 0");
    if (c.request_timeout_ms < 1)
        throw Error(ErrorCode::Config, "request_timeout must be positive");
}

/// Outcome of one batch item; a failed item never aborts its siblings.
struct CompletionResult {
    std::string text;
    bool has_error = false;
    ErrorCode code = ErrorCode::Network;
    std::string message;

    bool ok() const { return !has_error; }

    static CompletionResult success(std::string t) {
        CompletionResult r;
        r.text = std::move(t);
        return r;
    }
    static CompletionResult failure(ErrorCode c, std::string msg) {
        CompletionResult r;
        r.has_error = true;
        r.code = c;
        r.message = std::move(msg);
        return r;
    }
};

/// Uniform text-generation interface. Handles are shareable across workers;
/// the in-flight gate and the rate limiter are the only shared mutable state.
class Backend {
public:
    explicit Backend(BackendConfig config) : config_(std::move(config)) {
        validate_backend_config(config_);
    }
    virtual ~Backend() = default;

    const BackendConfig& config() const { return config_; }

    /// Single completion. Throws BackendError on failure.
    std::string complete(const std::vector<ChatMessage>& messages,
                         const GenerationParams& params,
                         const std::string& model_override = {}) {
        if (messages.empty())
            throw Error(ErrorCode::Precondition, "messages must be non-empty");
        for (const auto& m : messages) validate_message(m);
        validate_params(params);
        InFlightGuard guard(*this);
        apply_rate_limit();
        return do_complete(messages, params,
                           model_override.empty() ? config_.model_id : model_override);
    }

    /// Order-preserving fan-out: result[i] corresponds to prompts[i], at most
    /// max_in_flight requests are outstanding, and per-item failures are
    /// captured without aborting siblings.
    std::vector<CompletionResult> complete_batch(
        const std::vector<std::vector<ChatMessage>>& prompts,
        const GenerationParams& params,
        const std::string& model_override = {}) {
        if (prompts.empty())
            throw Error(ErrorCode::Precondition, "prompt list must be non-empty");
        std::vector<CompletionResult> results(prompts.size());
        std::atomic<size_t> next{0};
        const size_t workers =
            std::min(prompts.size(), static_cast<size_t>(config_.max_in_flight));
        auto run = [&]() {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= prompts.size()) return;
                try {
                    results[i] = CompletionResult::success(
                        complete(prompts[i], params, model_override));
                } catch (const Error& e) {
                    results[i] = CompletionResult::failure(e.code(), e.what());
                } catch (const std::exception& e) {
                    results[i] = CompletionResult::failure(
                        ErrorCode::Network, std::string("unexpected failure: ") + e.what());
                }
            }
        };
        if (workers == 1) {
            run();
        } else {
            std::vector<std::thread> threads;
            threads.reserve(workers);
            for (size_t w = 0; w < workers; ++w) threads.emplace_back(run);
            for (auto& t : threads) t.join();
        }
        return results;
    }

protected:
    virtual std::string do_complete(const std::vector<ChatMessage>& messages,
                                    const GenerationParams& params,
                                    const std::string& model_id) = 0;

private:
    class InFlightGuard {
    public:
        explicit InFlightGuard(Backend& b) : b_(b) {
            std::unique_lock lock(b_.gate_mutex_);
            b_.gate_cv_.wait(lock, [&] { return b_.in_flight_ < b_.config_.max_in_flight; });
            ++b_.in_flight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard lock(b_.gate_mutex_);
                --b_.in_flight_;
            }
            b_.gate_cv_.notify_one();
        }

    private:
        Backend& b_;
    };

    void apply_rate_limit() {
        if (config_.min_request_interval_ms <= 0) return;
        const auto interval = std::chrono::milliseconds(config_.min_request_interval_ms);
        std::chrono::steady_clock::time_point wait_until;
        {
            std::lock_guard lock(rate_mutex_);
            const auto now = std::chrono::steady_clock::now();
            next_start_ = std::max(next_start_, now);
            wait_until = next_start_;
            next_start_ += interval;
        }
        std::this_thread::sleep_until(wait_until);
    }

    BackendConfig config_;
    std::mutex gate_mutex_;
    std::condition_variable gate_cv_;
    int in_flight_ = 0;
    std::mutex rate_mutex_;
    std::chrono::steady_clock::time_point next_start_{};
};

// ---------------------------------------------------------------------------
// HTTP backend (chat-completions wire protocol)
// ---------------------------------------------------------------------------

namespace detail {

struct ParsedUrl {
    std::string base;        // scheme://host[:port]
    std::string path_prefix; // "" or "/v1"
};

inline ParsedUrl parse_endpoint_url(const std::string& url) {
    const size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::Config, "endpoint_url must include a scheme: " + url);
    const size_t path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.base = url;
    } else {
        out.base = url.substr(0, path_start);
        out.path_prefix = rtrim(url.substr(path_start));
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
            out.path_prefix.pop_back();
    }
    return out;
}

/// Parses a Retry-After header value in seconds; ignores HTTP-date forms.
inline std::optional<std::chrono::milliseconds> parse_retry_after(const std::string& value) {
    if (value.empty()) return std::nullopt;
    char* end = nullptr;
    const double seconds = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || seconds < 0 || seconds > 3600) return std::nullopt;
    return std::chrono::milliseconds(static_cast<long>(seconds * 1000));
}

} // namespace detail

/// Remote chat-completions endpoint. Retries transport errors and HTTP
/// 429/5xx with exponential backoff (full jitter); 4xx faults are permanent.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config) : Backend(std::move(config)) {
        const auto parsed = detail::parse_endpoint_url(this->config().endpoint_url);
        base_ = parsed.base;
        path_ = parsed.path_prefix + "/chat/completions";
    }

protected:
    std::string do_complete(const std::vector<ChatMessage>& messages,
                            const GenerationParams& params,
                            const std::string& model_id) override {
        int attempt = 0;
        while (true) {
            try {
                return send_once(messages, params, model_id);
            } catch (const BackendError& e) {
                if (!e.retryable() || attempt >= config().max_retries) throw;
                std::chrono::milliseconds delay = backoff_delay(attempt);
                if (e.code() == ErrorCode::RateLimited && e.retry_after_ms() >= 0)
                    delay = std::chrono::milliseconds(e.retry_after_ms());
                std::this_thread::sleep_for(delay);
                ++attempt;
            }
        }
    }

private:
    std::string send_once(const std::vector<ChatMessage>& messages,
                          const GenerationParams& params, const std::string& model_id) {
        httplib::Client client(base_);
        client.set_connection_timeout(std::chrono::milliseconds(config().request_timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(config().request_timeout_ms));
        client.set_write_timeout(std::chrono::milliseconds(config().request_timeout_ms));

        nlohmann::json body;
        body["model"] = model_id;
        nlohmann::json msgs = nlohmann::json::array();
        for (const auto& m : messages)
            msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
        body["messages"] = std::move(msgs);
        body["temperature"] = params.temperature;
        body["top_p"] = params.top_p;
        body["max_tokens"] = params.max_tokens;
        if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;

        httplib::Headers headers;
        const char* key = std::getenv(config().api_key_env.c_str());
        if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);

        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw BackendError(ErrorCode::Network,
                               "request to " + base_ + path_ + " failed: " +
                                   httplib::to_string(res.error()));
        if (res->status == 429) {
            const auto hint = detail::parse_retry_after(res->get_header_value("Retry-After"));
            throw BackendError(ErrorCode::RateLimited, "HTTP 429", 429, res->body,
                               hint ? static_cast<int>(hint->count()) : -1);
        }
        if (res->status == 401 || res->status == 403)
            throw BackendError(ErrorCode::Auth, "HTTP " + std::to_string(res->status), res->status,
                               res->body);
        if (res->status >= 500)
            throw BackendError(ErrorCode::Network, "HTTP " + std::to_string(res->status),
                               res->status, res->body);
        if (res->status != 200)
            throw BackendError(ErrorCode::MalformedResponse,
                               "HTTP " + std::to_string(res->status), res->status, res->body);
        return extract_content(res->body);
    }

    static std::string extract_content(const std::string& body) {
        nlohmann::json doc = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded())
            throw BackendError(ErrorCode::MalformedResponse, "response body is not JSON", 200,
                               body);
        if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
            throw BackendError(ErrorCode::MalformedResponse, "response has no choices", 200, body);
        const auto& first = doc["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content") ||
            !first["message"]["content"].is_string())
            throw BackendError(ErrorCode::MalformedResponse,
                               "choice is missing message.content", 200, body);
        return first["message"]["content"].get<std::string>();
    }

    std::chrono::milliseconds backoff_delay(int attempt) {
        // full jitter: uniform over [0, base * 2^attempt]
        const double cap = static_cast<double>(config().backoff_base_ms) *
                           static_cast<double>(1u << std::min(attempt, 16));
        thread_local std::mt19937_64 rng(std::random_device{}());
        std::uniform_real_distribution<double> dist(0.0, cap);
        return std::chrono::milliseconds(static_cast<long>(dist(rng)));
    }

    std::string base_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Deterministic offline mock
// ---------------------------------------------------------------------------

/// Canned responses addressed by (template kind, per-kind call index), with a
/// per-kind default and a global fallback. Scripted text beginning with
/// "@error:" raises the named error instead of returning text.
struct MockScript {
    std::map<std::pair<prompting::TemplateKind, int>, std::string> entries;
    std::map<prompting::TemplateKind, std::string> kind_defaults;
    std::optional<std::string> fallback;
    int latency_ms = 0;

    MockScript& add(prompting::TemplateKind kind, int call_index, std::string text) {
        entries[{kind, call_index}] = std::move(text);
        return *this;
    }
    MockScript& add_default(prompting::TemplateKind kind, std::string text) {
        kind_defaults[kind] = std::move(text);
        return *this;
    }
    MockScript& add_sequence(prompting::TemplateKind kind, std::vector<std::string> texts) {
        for (size_t i = 0; i < texts.size(); ++i)
            entries[{kind, static_cast<int>(i)}] = std::move(texts[i]);
        return *this;
    }

    static MockScript from_json(const nlohmann::json& doc) {
        MockScript script;
        if (doc.contains("fallback")) script.fallback = doc["fallback"].get<std::string>();
        if (doc.contains("latency_ms")) script.latency_ms = doc["latency_ms"].get<int>();
        if (doc.contains("scripts")) {
            for (const auto& [name, value] : doc["scripts"].items()) {
                const auto kind = prompting::template_kind_from_name(name);
                if (!kind)
                    throw Error(ErrorCode::Config, "unknown template kind in mock script: " + name);
                if (value.is_array()) {
                    for (size_t i = 0; i < value.size(); ++i)
                        script.add(*kind, static_cast<int>(i), value[i].get<std::string>());
                } else if (value.is_object()) {
                    for (const auto& [idx, text] : value.items()) {
                        if (idx == "default")
                            script.add_default(*kind, text.get<std::string>());
                        else
                            script.add(*kind, std::stoi(idx), text.get<std::string>());
                    }
                } else {
                    script.add_default(*kind, value.get<std::string>());
                }
            }
        }
        return script;
    }

    static MockScript from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::Io, "cannot open mock script: " + path);
        nlohmann::json doc = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (doc.is_discarded())
            throw Error(ErrorCode::Config, "mock script is not valid JSON: " + path);
        return from_json(doc);
    }
};

struct MockCall {
    prompting::TemplateKind kind;
    int call_index = 0;
    std::string prompt;
    int in_flight_at_entry = 0;
};

/// Offline stand-in for the model. Responses come from the script; when a
/// synthesizer function is installed it answers any unscripted prompt as a
/// pure function of (kind, prompt text), which keeps full pipeline runs
/// deterministic under any concurrency level.
class MockBackend : public Backend {
public:
    using Synthesizer =
        std::function<std::string(prompting::TemplateKind, const std::string&)>;

    explicit MockBackend(MockScript script = {}, BackendConfig config = default_config())
        : Backend(std::move(config)), script_(std::move(script)) {}

    void set_synthesizer(Synthesizer fn) { synthesizer_ = std::move(fn); }

    static BackendConfig default_config() {
        BackendConfig c;
        c.endpoint_url = "mock://local";
        c.model_id = "mock-model";
        return c;
    }

    std::vector<MockCall> call_log() const {
        std::lock_guard lock(mutex_);
        return log_;
    }
    size_t call_count() const {
        std::lock_guard lock(mutex_);
        return log_.size();
    }
    size_t call_count(prompting::TemplateKind kind) const {
        std::lock_guard lock(mutex_);
        size_t n = 0;
        for (const auto& c : log_)
            if (c.kind == kind) ++n;
        return n;
    }
    int peak_in_flight() const {
        std::lock_guard lock(mutex_);
        return peak_in_flight_;
    }
    void reset_log() {
        std::lock_guard lock(mutex_);
        log_.clear();
        counters_.clear();
        peak_in_flight_ = 0;
    }

protected:
    std::string do_complete(const std::vector<ChatMessage>& messages,
                            const GenerationParams&, const std::string&) override {
        const std::string& prompt = messages.back().content;
        const auto kind =
            prompting::classify_prompt(prompt).value_or(prompting::TemplateKind::MetaDomains);

        std::optional<std::string> scripted;
        {
            std::lock_guard lock(mutex_);
            const int index = counters_[kind]++;
            ++in_flight_;
            peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
            log_.push_back(MockCall{kind, index, prompt, in_flight_});
            if (auto it = script_.entries.find({kind, index}); it != script_.entries.end())
                scripted = it->second;
            else if (auto dt = script_.kind_defaults.find(kind); dt != script_.kind_defaults.end())
                scripted = dt->second;
        }

        if (script_.latency_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(script_.latency_ms));

        struct Decrement {
            MockBackend& b;
            ~Decrement() {
                std::lock_guard lock(b.mutex_);
                --b.in_flight_;
            }
        } dec{*this};

        if (scripted) return resolve(*scripted);
        if (script_.fallback) return resolve(*script_.fallback);
        if (synthesizer_) return synthesizer_(kind, prompt);
        throw BackendError(ErrorCode::MalformedResponse,
                           "no scripted response for " +
                               std::string(prompting::template_kind_name(kind)));
    }

private:
    std::string resolve(const std::string& text) {
        if (!starts_with(text, "@error:")) return text;
        const std::string rest = text.substr(7);
        const size_t space = rest.find(' ');
        const std::string tag = space == std::string::npos ? rest : rest.substr(0, space);
        const std::string msg =
            space == std::string::npos ? "scripted failure" : rest.substr(space + 1);
        if (tag == "network") throw BackendError(ErrorCode::Network, msg);
        if (tag == "rate_limited") throw BackendError(ErrorCode::RateLimited, msg, 429);
        if (tag == "auth") throw BackendError(ErrorCode::Auth, msg, 401);
        throw BackendError(ErrorCode::MalformedResponse, msg);
    }

    MockScript script_;
    Synthesizer synthesizer_;
    mutable std::mutex mutex_;
    std::map<prompting::TemplateKind, int> counters_;
    std::vector<MockCall> log_;
    int in_flight_ = 0;
    int peak_in_flight_ = 0;
};

} // namespace decif::backend

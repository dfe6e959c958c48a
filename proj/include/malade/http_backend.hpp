#pragma once

#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "malade/backend.hpp"
#include "malade/http_util.hpp"
#include "malade/messaging.hpp"

namespace malade {

// Live chat-completions client (OpenAI wire format). Providers that emit
// structured tool calls have them re-rendered as canonical FUNC text, so
// everything upstream of the backend sees one representation.
class HttpBackend : public Backend {
   public:
    struct Options {
        std::string base_url;  // falls back to $OPENAI_BASE_URL, then api.openai.com
        std::string api_key;   // falls back to $OPENAI_API_KEY
        std::string model = "gpt-4o";
        std::string path = "/v1/chat/completions";
        int max_concurrency = 4;  // bound on in-flight requests (rate-limit hygiene)
        HttpRetryPolicy retry;
        std::function<void(const std::string&)> logger;  // redacted wire log, one JSON line per call
    };

    explicit HttpBackend(Options opt) : opt_(std::move(opt)), slots_(resolve_concurrency(opt_)) {
        if (opt_.base_url.empty()) opt_.base_url = env_or("OPENAI_BASE_URL", "https://api.openai.com");
        if (opt_.api_key.empty()) opt_.api_key = env_or("OPENAI_API_KEY", "");
    }

    std::optional<std::string> complete(const BackendRequest& request) override {
        if (request.turns.empty()) throw BackendError(0, false, "request has no turns");
        json body = build_body(request);

        slots_.acquire();
        struct Release {
            std::counting_semaphore<kMaxSlots>& s;
            ~Release() { s.release(); }
        } release{slots_};

        log_line("request", body, -1);
        httplib::Client client(opt_.base_url);
        client.set_read_timeout(120, 0);
        client.set_connection_timeout(10, 0);
        httplib::Headers headers;
        if (!opt_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opt_.api_key);
        std::string payload = body.dump();
        auto res = http_with_retry(
            [&]() { return client.Post(opt_.path, headers, payload, "application/json"); },
            opt_.retry);
        if (!res)
            throw BackendError(0, true, "transport failure: " + httplib::to_string(res.error()));
        json reply = json::parse(res->body, nullptr, false);
        log_line("response", reply.is_discarded() ? json(res->body) : reply, res->status);
        if (res->status != 200)
            throw BackendError(res->status, retriable_status(res->status),
                               "chat completion failed: " + res->body.substr(0, 400));
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
            throw BackendError(res->status, false, "malformed completion body");
        return normalize_message(reply["choices"][0].value("message", json::object()));
    }

    std::string id() const override { return "http:" + opt_.model; }

   private:
    static constexpr int kMaxSlots = 256;

    static int resolve_concurrency(const Options& o) {
        int n = o.max_concurrency;
        if (n < 1) n = 1;
        if (n > kMaxSlots) n = kMaxSlots;
        return n;
    }

    static std::string env_or(const char* name, const char* fallback) {
        const char* v = std::getenv(name);
        return v && *v ? v : fallback;
    }

    json build_body(const BackendRequest& request) const {
        json body;
        body["model"] = opt_.model;
        json messages = json::array();
        if (!request.system_prompt.empty())
            messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
        // The history is forwarded verbatim — the client never rewrites prompts.
        for (const auto& t : request.turns)
            messages.push_back({{"role", t.role}, {"content", t.content}});
        body["messages"] = std::move(messages);
        body["temperature"] = request.sampling.temperature;
        body["max_tokens"] = request.sampling.max_tokens;
        if (request.sampling.seed) body["seed"] = *request.sampling.seed;
        if (request.tool_schemas.is_array() && !request.tool_schemas.empty())
            body["tools"] = request.tool_schemas;
        return body;
    }

    // Providers answer with either plain text or structured tool calls; both
    // collapse to text here, tool calls via the canonical FUNC rendering.
    std::string normalize_message(const json& message) const {
        if (message.contains("tool_calls") && message["tool_calls"].is_array() &&
            !message["tool_calls"].empty()) {
            const auto& fn = message["tool_calls"][0].value("function", json::object());
            ToolCall call;
            call.name = fn.value("name", "");
            ojson args = ojson::parse(fn.value("arguments", "{}"), nullptr, false);
            call.arguments = args.is_discarded() ? ojson::object() : args;
            if (call.arguments.contains("to") && call.arguments["to"].is_string()) {
                call.recipient_hint = call.arguments["to"].get<std::string>();
                call.arguments.erase("to");
            }
            return render_tool_call(call);
        }
        const auto& content = message.contains("content") ? message["content"] : json();
        return content.is_string() ? content.get<std::string>() : std::string();
    }

    void log_line(const char* event, const json& body, int status) const {
        if (!opt_.logger) return;
        ojson line;
        line["event"] = std::string("http_") + event;
        line["model"] = opt_.model;
        if (status >= 0) line["status"] = status;
        std::string dump = body.dump();
        if (!opt_.api_key.empty()) dump = replace_all(dump, opt_.api_key, "[redacted]");
        line["body"] = std::move(dump);
        opt_.logger(line.dump());
    }

    Options opt_;
    mutable std::counting_semaphore<kMaxSlots> slots_;
};

}  // namespace malade

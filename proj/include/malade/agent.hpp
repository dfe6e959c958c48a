#pragma once

#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "malade/backend.hpp"
#include "malade/messaging.hpp"

namespace malade {

class Agent;

struct ToolField {
    std::string name;
    std::string type = "text";  // "text" | "list of text" | "number" | "object"
    bool required = true;
};

struct ToolSpec {
    std::string name;
    std::string description;  // when/why the LLM should use it
    std::vector<ToolField> fields;
    std::vector<std::string> aliases;
    std::function<std::optional<Message>(Agent&, const ToolCall&)> handler;
};

enum class UserInputMode { Disabled, Scripted, Interactive };

// An agent is a message transformer: three native responders (LLM, tool
// handler, user) over shared conversation state. Responders that decline
// return absent and leave the history untouched.
class Agent {
   public:
    Agent(std::string name, std::string system_prompt, std::shared_ptr<Backend> backend)
        : name_(std::move(name)), backend_(std::move(backend)) {
        history_.set_system_prompt(std::move(system_prompt));
    }

    const std::string& name() const { return name_; }
    ChatHistory& history() { return history_; }
    const ChatHistory& history() const { return history_; }
    const std::shared_ptr<Backend>& backend() const { return backend_; }

    void set_sampling(Sampling s) { sampling_ = s; }
    void set_history_window(int turns) { history_window_ = turns; }
    void set_user_script(std::deque<std::string> lines) {
        user_mode_ = UserInputMode::Scripted;
        user_script_ = std::move(lines);
    }
    void set_user_interactive() { user_mode_ = UserInputMode::Interactive; }

    // Hook consulted by agent_respond for non-tool messages (absent by default).
    void set_fallback(std::function<std::optional<Message>(Agent&, const Message&)> fb) {
        fallback_ = std::move(fb);
    }

    void register_tool(ToolSpec spec) {
        if (find_tool(spec.name)) throw DuplicateTool(spec.name);
        for (const auto& alias : spec.aliases)
            if (find_tool(alias)) throw DuplicateTool(alias);
        tools_.push_back(std::move(spec));
    }

    bool has_tool(const std::string& name) const { return find_tool(name) != nullptr; }

    // System prompt with the deterministic tool-description block appended.
    std::string rendered_system_prompt() const {
        std::string out = history_.system_prompt();
        if (tools_.empty()) return out;
        out += "\n\n=== TOOLS ===\n";
        out +=
            "To use a tool, reply with a single block in exactly this format and nothing else on "
            "its lines:\nFUNC: {\"name\": \"<tool name>\", \"to\": \"\", \"arguments\": { ... }}\n";
        for (const auto& t : tools_) {
            out += "\nTOOL `" + t.name + "`: " + t.description + "\n";
            if (!t.fields.empty()) {
                std::vector<std::string> parts;
                for (const auto& f : t.fields)
                    parts.push_back(f.name + " (" + f.type + (f.required ? ", required" : ", optional") +
                                    ")");
                out += "  arguments: " + join(parts, "; ") + "\n";
            }
        }
        return out;
    }

    BackendRequest build_request(const Message& incoming) const {
        BackendRequest req;
        req.system_prompt = rendered_system_prompt();
        req.sampling = sampling_;
        req.tool_schema_text = tool_schema_text();
        req.tool_schemas = tool_schemas_json();
        std::vector<BackendTurn> turns;
        for (const auto& m : history_.turns()) turns.push_back(as_turn(m));
        turns.push_back(as_turn(incoming));
        if (history_window_ > 0 && turns.size() > static_cast<size_t>(history_window_)) {
            turns.erase(turns.begin(),
                        turns.begin() + static_cast<std::ptrdiff_t>(turns.size()) - history_window_);
        }
        req.turns = std::move(turns);
        return req;
    }

    // LLM responder: appends the incoming message and the reply on success.
    // Absent only when the backend declines (script exhausted).
    std::optional<Message> llm_respond(const Message& incoming) {
        auto text = backend_->complete(build_request(incoming));
        if (!text) return std::nullopt;
        Message reply = message_from_text(Entity::llm(), std::move(*text));
        history_.append(incoming);
        history_.append(reply);
        return reply;
    }

    // Tool responder: handles LLM tool messages. Malformed or unknown tools
    // produce a corrective message naming the registered tools; plain messages
    // fall through to the fallback hook (absent by default).
    std::optional<Message> agent_respond(const Message& incoming) {
        if (incoming.sender.kind == EntityKind::Llm) {
            if (!incoming.tool_error.empty()) {
                return corrective("Your tool call could not be parsed (" + incoming.tool_error +
                                  "). " + tool_reminder());
            }
            if (incoming.tool_call) {
                const ToolSpec* spec = find_tool(incoming.tool_call->name);
                if (!spec) {
                    return corrective("There is no tool named `" + incoming.tool_call->name + "`. " +
                                      tool_reminder());
                }
                for (const auto& f : spec->fields) {
                    if (f.required && !incoming.tool_call->arguments.contains(f.name)) {
                        return corrective("Tool `" + spec->name + "` requires the argument `" +
                                          f.name + "`. Please resend the tool call with it.");
                    }
                }
                auto out = spec->handler(*this, *incoming.tool_call);
                if (!out) return std::nullopt;
                out->sender = Entity::agent();
                ControlMarks scanned = scan_control_markers(out->content);
                out->control.done |= scanned.done;
                out->control.no_answer |= scanned.no_answer;
                return out;
            }
        }
        if (fallback_) return fallback_(*this, incoming);
        return std::nullopt;
    }

    // User responder: scripted stream or interactive console. Absent when the
    // source is disabled, exhausted, or yields an empty line.
    std::optional<Message> user_respond(const Message&) {
        if (user_mode_ == UserInputMode::Disabled) return std::nullopt;
        std::string line;
        if (user_mode_ == UserInputMode::Scripted) {
            if (user_script_.empty()) return std::nullopt;
            line = user_script_.front();
            user_script_.pop_front();
        } else {
            if (!std::getline(std::cin, line)) return std::nullopt;
        }
        if (trim(line).empty()) return std::nullopt;
        return message_from_text(Entity::user(), line);
    }

    // Small typed blackboard: tool handlers stash structured results here for
    // the pipeline to read back after a task completes.
    void stash(const std::string& key, ojson value) { stash_[key] = std::move(value); }
    std::optional<ojson> stashed(const std::string& key) const {
        auto it = stash_.find(key);
        if (it == stash_.end()) return std::nullopt;
        return it->second;
    }
    void unstash(const std::string& key) { stash_.erase(key); }

   private:
    static BackendTurn as_turn(const Message& m) {
        return {m.sender.kind == EntityKind::Llm ? "assistant" : "user", m.content};
    }

    const ToolSpec* find_tool(const std::string& name) const {
        for (const auto& t : tools_) {
            if (t.name == name) return &t;
            for (const auto& alias : t.aliases)
                if (alias == name) return &t;
        }
        return nullptr;
    }

    std::string tool_reminder() const {
        std::vector<std::string> names;
        for (const auto& t : tools_) names.push_back("`" + t.name + "`");
        if (names.empty()) return "No tools are registered for this agent.";
        return "Registered tools: " + join(names, ", ") +
               ". Resend your request as a single FUNC: {...} block.";
    }

    Message corrective(const std::string& text) const {
        Message m;
        m.sender = Entity::agent();
        m.content = text;
        return m;
    }

    std::string tool_schema_text() const {
        if (tools_.empty()) return "";
        std::string out;
        for (const auto& t : tools_) {
            out += t.name + ": " + t.description + "\n";
        }
        return out;
    }

    nlohmann::json tool_schemas_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : tools_) {
            nlohmann::json props = nlohmann::json::object();
            nlohmann::json required = nlohmann::json::array();
            for (const auto& f : t.fields) {
                std::string jtype = f.type == "number"         ? "number"
                                    : f.type == "list of text" ? "array"
                                    : f.type == "object"       ? "object"
                                                               : "string";
                props[f.name] = {{"type", jtype}};
                if (jtype == "array") props[f.name]["items"] = {{"type", "string"}};
                if (f.required) required.push_back(f.name);
            }
            arr.push_back({{"type", "function"},
                           {"function",
                            {{"name", t.name},
                             {"description", t.description},
                             {"parameters",
                              {{"type", "object"}, {"properties", props}, {"required", required}}}}}});
        }
        return arr;
    }

    std::string name_;
    ChatHistory history_;
    std::vector<ToolSpec> tools_;
    std::shared_ptr<Backend> backend_;
    Sampling sampling_;
    int history_window_ = 0;  // 0 = unlimited
    UserInputMode user_mode_ = UserInputMode::Disabled;
    std::deque<std::string> user_script_;
    std::function<std::optional<Message>(Agent&, const Message&)> fallback_;
    std::map<std::string, ojson> stash_;
};

}  // namespace malade

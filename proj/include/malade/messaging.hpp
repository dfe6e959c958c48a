#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "malade/errors.hpp"
#include "malade/util.hpp"

namespace malade {

using json = nlohmann::json;
// Insertion-ordered JSON keeps rendered tool calls and records byte-stable.
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Entities and messages
// ---------------------------------------------------------------------------

enum class EntityKind { Llm, User, Agent, SubTask };

struct Entity {
    EntityKind kind = EntityKind::User;
    std::string task;  // set only for SubTask: the responding task's name

    static Entity llm() { return {EntityKind::Llm, ""}; }
    static Entity user() { return {EntityKind::User, ""}; }
    static Entity agent() { return {EntityKind::Agent, ""}; }
    static Entity sub_task(std::string name) { return {EntityKind::SubTask, std::move(name)}; }

    bool operator==(const Entity& o) const { return kind == o.kind && task == o.task; }
};

inline std::string render_entity(const Entity& e) {
    switch (e.kind) {
        case EntityKind::Llm: return "LLM";
        case EntityKind::User: return "USER";
        case EntityKind::Agent: return "AGENT";
        case EntityKind::SubTask: return "SUBTASK:" + e.task;
    }
    return "USER";
}

inline Entity parse_entity(std::string_view s) {
    if (s == "LLM") return Entity::llm();
    if (s == "USER") return Entity::user();
    if (s == "AGENT") return Entity::agent();
    if (s.rfind("SUBTASK:", 0) == 0) return Entity::sub_task(std::string(s.substr(8)));
    throw Error("unknown entity: " + std::string(s));
}

struct ToolCall {
    std::string name;
    std::string recipient_hint;  // the "to" field; empty when unaddressed
    ojson arguments = ojson::object();

    bool operator==(const ToolCall& o) const {
        return name == o.name && recipient_hint == o.recipient_hint && arguments == o.arguments;
    }
};

struct ControlMarks {
    bool done = false;
    bool no_answer = false;
    bool operator==(const ControlMarks& o) const { return done == o.done && no_answer == o.no_answer; }
};

struct Message {
    Entity sender;
    std::string content;
    std::optional<ToolCall> tool_call;
    std::string tool_error;  // non-empty when a tool block was present but unparseable
    std::optional<std::string> recipient;  // exclusive routing target for the next step
    ControlMarks control;
};

// ---------------------------------------------------------------------------
// Control markers
// ---------------------------------------------------------------------------

namespace detail {

// True when text contains `token` bounded by non-word characters (or edges).
// Covers the {TOKEN}, <TOKEN>, and bare-word forms while rejecting
// occurrences embedded in longer words ("ABANDONED" does not contain DONE).
inline bool has_marker_token(std::string_view text, std::string_view token) {
    size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string_view::npos) {
        bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
        size_t end = pos + token.size();
        bool right_ok = end >= text.size() || !is_word_char(text[end]);
        if (left_ok && right_ok) return true;
        pos += 1;
    }
    return false;
}

}  // namespace detail

inline constexpr const char* kDoneToken = "DONE";
inline constexpr const char* kNoAnswerToken = "NO_ANSWER";

inline ControlMarks scan_control_markers(std::string_view text) {
    ControlMarks m;
    m.done = detail::has_marker_token(text, kDoneToken);
    m.no_answer = detail::has_marker_token(text, kNoAnswerToken);
    return m;
}

// Removes DONE markers ({DONE}, <DONE>, or the standalone word) and trims.
// NO_ANSWER is deliberately preserved: it is an answer-level sentinel that
// downstream agents must be able to read, not a termination marker.
inline std::string strip_done_markers(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    const std::string_view token = kDoneToken;
    while (i < text.size()) {
        if (text.compare(i, token.size(), token) == 0) {
            bool left_ok = i == 0 || !is_word_char(text[i - 1]);
            size_t end = i + token.size();
            bool right_ok = end >= text.size() || !is_word_char(text[end]);
            if (left_ok && right_ok) {
                // Drop a directly wrapping {} or <> pair along with the token.
                if (i > 0 && end < text.size() &&
                    ((text[i - 1] == '{' && text[end] == '}') ||
                     (text[i - 1] == '<' && text[end] == '>'))) {
                    out.pop_back();
                    ++end;
                }
                i = end;
                continue;
            }
        }
        out.push_back(text[i]);
        ++i;
    }
    return trim(out);
}

// ---------------------------------------------------------------------------
// Tool-call block parsing and rendering
// ---------------------------------------------------------------------------

inline constexpr const char* kToolMarker = "FUNC:";

enum class ToolParseStatus { NoTool, Ok, Malformed };

struct ToolParseResult {
    ToolParseStatus status = ToolParseStatus::NoTool;
    std::optional<ToolCall> call;
    std::string error;
};

namespace detail {

// Extracts the balanced JSON object starting at `start` (which must be '{').
// Honors string literals and escapes. Returns npos on imbalance.
inline size_t balanced_object_end(std::string_view text, size_t start) {
    int depth = 0;
    bool in_string = false;
    for (size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
            if (depth == 0) return i;
        }
    }
    return std::string_view::npos;
}

// Marker occurrences count only when preceded by nothing but whitespace on
// their line; that keeps prose mentioning the marker from parsing as a tool.
inline std::vector<size_t> marker_positions(std::string_view text) {
    std::vector<size_t> out;
    size_t pos = 0;
    const std::string_view marker = kToolMarker;
    while ((pos = text.find(marker, pos)) != std::string_view::npos) {
        size_t line_start = text.rfind('\n', pos);
        line_start = line_start == std::string_view::npos ? 0 : line_start + 1;
        bool leading_ws_only = true;
        for (size_t i = line_start; i < pos; ++i) {
            if (!std::isspace(static_cast<unsigned char>(text[i]))) {
                leading_ws_only = false;
                break;
            }
        }
        if (leading_ws_only) out.push_back(pos);
        pos += marker.size();
    }
    return out;
}

}  // namespace detail

inline ToolParseResult parse_tool_call(std::string_view text) {
    ToolParseResult res;
    auto positions = detail::marker_positions(text);
    if (positions.empty()) return res;

    res.status = ToolParseStatus::Malformed;
    if (positions.size() > 1) {
        res.error = "multiple FUNC blocks in one message";
        return res;
    }
    size_t after = positions[0] + std::string_view(kToolMarker).size();
    size_t brace = text.find('{', after);
    if (brace == std::string_view::npos) {
        res.error = "no JSON object after FUNC:";
        return res;
    }
    size_t end = detail::balanced_object_end(text, brace);
    if (end == std::string_view::npos) {
        res.error = "unbalanced JSON object after FUNC:";
        return res;
    }
    ojson doc = ojson::parse(text.substr(brace, end - brace + 1), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        res.error = "invalid JSON in FUNC block";
        return res;
    }
    if (!doc.contains("name") || !doc["name"].is_string() || doc["name"].get<std::string>().empty()) {
        res.error = "FUNC block missing non-empty \"name\"";
        return res;
    }
    ToolCall call;
    call.name = doc["name"].get<std::string>();
    if (doc.contains("to")) {
        if (!doc["to"].is_string()) {
            res.error = "FUNC \"to\" field must be a string";
            return res;
        }
        call.recipient_hint = doc["to"].get<std::string>();
    }
    if (doc.contains("arguments")) {
        if (!doc["arguments"].is_object()) {
            res.error = "FUNC \"arguments\" field must be an object";
            return res;
        }
        call.arguments = doc["arguments"];
    }
    res.status = ToolParseStatus::Ok;
    res.call = std::move(call);
    res.error.clear();
    return res;
}

// Canonical serialization: pretty-printed with two-space indentation, fixed
// name/to/arguments key order, arrays expanded one element per line. Chosen so
// rendered calls can serve directly as golden transcript content.
inline std::string render_tool_call(const ToolCall& call) {
    ojson doc;
    doc["name"] = call.name;
    doc["to"] = call.recipient_hint;
    doc["arguments"] = call.arguments;
    return std::string(kToolMarker) + " " + doc.dump(2);
}

// ---------------------------------------------------------------------------
// Chat history
// ---------------------------------------------------------------------------

// Append-only message log with a pinned system prompt.
class ChatHistory {
   public:
    void set_system_prompt(std::string prompt) { system_prompt_ = std::move(prompt); }
    const std::string& system_prompt() const { return system_prompt_; }

    void append(Message m) { turns_.push_back(std::move(m)); }
    const std::vector<Message>& turns() const { return turns_; }
    size_t size() const { return turns_.size(); }

   private:
    std::string system_prompt_;
    std::vector<Message> turns_;
};

// Builds a Message from raw responder text: parses at most one tool block and
// scans control markers. Malformed blocks land in tool_error, never throw.
inline Message message_from_text(Entity sender, std::string text) {
    Message m;
    m.sender = sender;
    m.content = std::move(text);
    auto parsed = parse_tool_call(m.content);
    if (parsed.status == ToolParseStatus::Ok) {
        m.tool_call = std::move(parsed.call);
        if (!m.tool_call->recipient_hint.empty()) m.recipient = m.tool_call->recipient_hint;
    } else if (parsed.status == ToolParseStatus::Malformed) {
        m.tool_error = parsed.error;
    }
    m.control = scan_control_markers(m.content);
    return m;
}

}  // namespace malade

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "malade/errors.hpp"
#include "malade/util.hpp"

namespace malade {

struct Sampling {
    double temperature = 0.2;
    std::optional<uint64_t> seed;
    int max_tokens = 1024;
};

struct BackendTurn {
    std::string role;  // "user" or "assistant"
    std::string content;
};

struct BackendRequest {
    std::string system_prompt;
    std::vector<BackendTurn> turns;
    std::string tool_schema_text;       // rendered tool descriptions (prompt-embedded)
    nlohmann::json tool_schemas;        // structured schemas for native-tool providers
    Sampling sampling;
};

// Completion provider. Returns absent when the provider declines to answer
// (scripted exhaustion); transport failures raise BackendError.
class Backend {
   public:
    virtual ~Backend() = default;
    virtual std::optional<std::string> complete(const BackendRequest& request) = 0;
    virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

enum class MatchKind { Exact, Substring, SequenceIndex };

struct ScriptEntry {
    MatchKind kind = MatchKind::Substring;
    std::vector<std::string> patterns;  // Exact: single pattern; Substring: all must occur
    int index = -1;                     // SequenceIndex: dense call ordinal from 0
    std::string response;
};

// Deterministic playback backend. The reply is a pure function of the script,
// the per-instance call ordinal, and the request text: entries are scanned in
// script order and the first match wins.
//   EXACT         — pattern equals the last turn's content
//   SUBSTRING     — every pattern occurs somewhere in the rendered request
//   SEQUENCE-INDEX— entry index equals the call ordinal (0-based)
// No matching entry means the script is exhausted for this request: absent.
class ScriptedBackend : public Backend {
   public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<ScriptEntry> entries, std::string id = "scripted")
        : entries_(std::move(entries)), id_(std::move(id)) {}

    std::optional<std::string> complete(const BackendRequest& request) override {
        uint64_t ordinal = calls_++;
        std::string last_turn = request.turns.empty() ? "" : request.turns.back().content;
        std::string haystack = request.system_prompt;
        for (const auto& t : request.turns) {
            haystack += "\n";
            haystack += t.content;
        }
        for (const auto& e : entries_) {
            if (matches(e, ordinal, last_turn, haystack)) return e.response;
        }
        return std::nullopt;
    }

    std::string id() const override { return id_; }
    uint64_t calls() const { return calls_; }

   private:
    static bool matches(const ScriptEntry& e, uint64_t ordinal, const std::string& last_turn,
                        const std::string& haystack) {
        switch (e.kind) {
            case MatchKind::Exact:
                return !e.patterns.empty() && e.patterns[0] == last_turn;
            case MatchKind::Substring:
                for (const auto& p : e.patterns)
                    if (haystack.find(p) == std::string::npos) return false;
                return true;
            case MatchKind::SequenceIndex:
                return e.index >= 0 && static_cast<uint64_t>(e.index) == ordinal;
        }
        return false;
    }

    std::vector<ScriptEntry> entries_;
    std::string id_ = "scripted";
    uint64_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Script files
// ---------------------------------------------------------------------------
// Format: {"agents": {"<agent name>": [entry, ...], ...}}
// entry: {"match": "exact"|"substring"|"sequence", "pattern": "...",
//         "patterns": ["...", ...], "index": n,
//         "response": "..." | ["trial0", "trial1", ...]}
// An array response selects by trial number (index modulo length), which lets
// one script drive repeated-trial runs with controlled variation.

class ScriptFile {
   public:
    ScriptFile() = default;

    static ScriptFile load(const std::filesystem::path& path) {
        ScriptFile s;
        nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("agents") ||
            !doc["agents"].is_object())
            throw ConfigError("script file must be an object with an \"agents\" table: " +
                              path.string());
        s.agents_ = doc["agents"];
        s.path_ = path.string();
        return s;
    }

    bool has_agent(const std::string& name) const { return agents_.contains(name); }

    std::vector<ScriptEntry> entries_for(const std::string& name, int trial = 0) const {
        if (!agents_.contains(name))
            throw ConfigError("script has no entry list for agent '" + name + "' (" + path_ + ")");
        const auto& list = agents_.at(name);
        if (!list.is_array()) throw ConfigError("script agent '" + name + "' must map to an array");
        std::vector<ScriptEntry> out;
        for (const auto& item : list) out.push_back(parse_entry(name, item, trial));
        return out;
    }

    std::shared_ptr<ScriptedBackend> backend_for(const std::string& name, int trial = 0) const {
        return std::make_shared<ScriptedBackend>(entries_for(name, trial), "scripted:" + name);
    }

   private:
    static ScriptEntry parse_entry(const std::string& agent, const nlohmann::json& item, int trial) {
        if (!item.is_object()) throw ConfigError("script entry for '" + agent + "' must be an object");
        ScriptEntry e;
        std::string match = item.value("match", "substring");
        if (match == "exact")
            e.kind = MatchKind::Exact;
        else if (match == "substring")
            e.kind = MatchKind::Substring;
        else if (match == "sequence")
            e.kind = MatchKind::SequenceIndex;
        else
            throw ConfigError("unknown matcher kind '" + match + "' for agent '" + agent + "'");
        if (item.contains("pattern")) e.patterns.push_back(item["pattern"].get<std::string>());
        if (item.contains("patterns"))
            for (const auto& p : item["patterns"]) e.patterns.push_back(p.get<std::string>());
        e.index = item.value("index", -1);
        if (e.kind == MatchKind::SequenceIndex && e.index < 0)
            throw ConfigError("sequence entry for '" + agent + "' needs a non-negative \"index\"");
        if (e.kind == MatchKind::Exact && e.patterns.empty())
            throw ConfigError("exact entry for '" + agent + "' needs a \"pattern\"");
        if (!item.contains("response"))
            throw ConfigError("script entry for '" + agent + "' needs a \"response\"");
        const auto& r = item["response"];
        if (r.is_string()) {
            e.response = r.get<std::string>();
        } else if (r.is_array() && !r.empty()) {
            e.response = r[static_cast<size_t>(trial) % r.size()].get<std::string>();
        } else {
            throw ConfigError("script response for '" + agent +
                              "' must be a string or non-empty array");
        }
        return e;
    }

    nlohmann::json agents_ = nlohmann::json::object();
    std::string path_;
};

}  // namespace malade

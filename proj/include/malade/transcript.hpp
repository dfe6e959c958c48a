#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "malade/messaging.hpp"
#include "malade/util.hpp"

namespace malade {

// Line-delimited JSON transcript. One record per message plus event records
// for round/termination markers. `scope` disambiguates task groups when
// several independent conversations are concatenated into one file.
class TranscriptWriter {
   public:
    // Logical clock (deterministic, = seq) for scripted runs; wall clock otherwise.
    explicit TranscriptWriter(bool logical_clock = true) : logical_(logical_clock) {}

    void set_scope(std::string scope) { scope_ = std::move(scope); }
    const std::string& scope() const { return scope_; }

    void message(const std::string& task, int run, const std::string& responder, const Message& m) {
        ojson rec = base(task, run, "message");
        rec["responder"] = responder;
        rec["sender"] = render_entity(m.sender);
        rec["content"] = m.content;
        if (m.tool_call)
            rec["tool_call"] = render_tool_call(*m.tool_call);
        else
            rec["tool_call"] = nullptr;
        if (m.recipient)
            rec["recipient"] = *m.recipient;
        else
            rec["recipient"] = nullptr;
        rec["done"] = m.control.done;
        rec["no_answer"] = m.control.no_answer;
        emit(rec);
    }

    void event(const std::string& task, int run, const std::string& name, ojson fields = ojson::object()) {
        ojson rec = base(task, run, "event");
        rec["event"] = name;
        for (auto& [k, v] : fields.items()) rec[k] = v;
        emit(rec);
    }

    std::string str() const { return buffer_.str(); }
    void append_raw(const std::string& lines) { buffer_ << lines; }

    void save(const std::filesystem::path& path) const { write_file(path, buffer_.str()); }

   private:
    ojson base(const std::string& task, int run, const char* kind) {
        ojson rec;
        rec["seq"] = seq_;
        if (logical_)
            rec["ts"] = seq_;
        else
            rec["ts"] = iso8601_now();
        rec["scope"] = scope_;
        rec["task"] = task;
        rec["run"] = run;
        rec["kind"] = kind;
        ++seq_;
        return rec;
    }

    void emit(const ojson& rec) { buffer_ << rec.dump() << "\n"; }

    std::ostringstream buffer_;
    std::string scope_;
    uint64_t seq_ = 0;
    bool logical_ = true;
};

inline std::vector<ojson> parse_transcript(const std::string& text) {
    std::vector<ojson> records;
    size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        ojson rec = ojson::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object())
            throw Error("transcript parse error at line " + std::to_string(line_no));
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw Error("transcript is empty");
    return records;
}

inline std::vector<ojson> load_transcript(const std::filesystem::path& path) {
    return parse_transcript(read_file(path));
}

// Re-checks the orchestration rules over a recorded trace:
//   (a) within one (scope, task, run) group no responder appears in two
//       consecutive message records;
//   (b) a message carrying the DONE marker is the last message of its group;
//   (d) when a message names a recipient, the next message in the group is
//       produced by that responder.
// Returns human-readable violations; empty means the trace conforms.
inline std::vector<std::string> verify_transcript(const std::vector<ojson>& records) {
    std::vector<std::string> violations;
    struct GroupState {
        std::string last_responder;
        std::optional<std::string> pending_recipient;
        bool done = false;
        uint64_t done_seq = 0;
    };
    std::map<std::string, GroupState> groups;

    for (const auto& rec : records) {
        if (rec.value("kind", "") != "message") continue;
        std::string key = rec.value("scope", "") + "\x1f" + rec.value("task", "") + "\x1f" +
                          std::to_string(rec.value("run", 0));
        auto& g = groups[key];
        std::string responder = rec.value("responder", "");
        uint64_t seq = rec.value("seq", 0ULL);
        std::string where = "task '" + rec.value("task", "") + "' run " +
                            std::to_string(rec.value("run", 0)) + " seq " + std::to_string(seq);

        if (g.done) {
            violations.push_back("rule (b) violated: message at " + where +
                                 " follows a DONE-marked message (seq " +
                                 std::to_string(g.done_seq) + ")");
        }
        if (responder != "input") {
            if (!g.last_responder.empty() && g.last_responder == responder) {
                violations.push_back("rule (a) violated: responder '" + responder +
                                     "' responded twice consecutively at " + where);
            }
            if (g.pending_recipient && *g.pending_recipient != responder) {
                violations.push_back("rule (d) violated: recipient '" + *g.pending_recipient +
                                     "' was addressed but responder '" + responder +
                                     "' answered at " + where);
            }
        }
        g.pending_recipient.reset();
        if (!rec["recipient"].is_null()) g.pending_recipient = rec["recipient"].get<std::string>();
        g.last_responder = responder;
        if (rec.value("done", false)) {
            g.done = true;
            g.done_seq = seq;
        }
    }
    return violations;
}

}  // namespace malade

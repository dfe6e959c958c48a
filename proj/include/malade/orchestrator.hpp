#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "malade/agent.hpp"
#include "malade/transcript.hpp"

namespace malade {

// Identifies one responder of a task: a native agent method or a sub-task.
struct Responder {
    enum Kind { AgentR = 0, LlmR = 1, UserR = 2, Sub = 3 };
    Kind kind = LlmR;
    int sub = -1;  // index into the sub-task list when kind == Sub

    bool operator==(const Responder& o) const { return kind == o.kind && sub == o.sub; }
};

// Wraps an Agent with orchestration state. Responders are tried in a fixed
// order (agent, llm, user, then sub-task run methods) under these rules:
//   (a) no responder responds twice in consecutive steps;
//   (b) a response containing DONE finishes the task, which returns the CPM;
//   (c) an absent response from the in-charge responder finishes the task;
//   (d) a response naming a recipient makes that responder the only eligible
//       one for the next step (consumed after that step).
// A full pass with no valid response also finishes the task.
class Task {
   public:
    Task(std::string name, std::shared_ptr<Agent> agent)
        : name_(std::move(name)), agent_(std::move(agent)) {}

    const std::string& name() const { return name_; }
    const std::shared_ptr<Agent>& agent() const { return agent_; }

    void add_sub_tasks(const std::vector<std::shared_ptr<Task>>& subs) {
        for (const auto& s : subs) {
            check_no_cycle(s.get());
            s->set_transcript(transcript_);  // wiring covers the whole delegation tree
            subs_.push_back(s);
        }
    }
    const std::vector<std::shared_ptr<Task>>& sub_tasks() const { return subs_; }

    void set_max_steps(int n) { max_steps_ = n; }
    int max_steps() const { return max_steps_; }
    void set_in_charge(Responder r) { in_charge_ = r; }
    void set_transcript(TranscriptWriter* t) {
        transcript_ = t;
        for (auto& s : subs_) s->set_transcript(t);
    }

    bool done() const { return done_; }
    int step_count() const { return step_count_; }
    int run_count() const { return run_counter_; }
    const std::optional<Message>& cpm() const { return cpm_; }
    // False when the last run finished without any responder producing a
    // response (the CPM is still the seed); parents treat that as a decline.
    bool last_run_responded() const { return responses_ > 0; }

    // One orchestration turn: seek a valid response to the CPM. Returns false
    // once the task is done. Raises StepLimitExceeded past the step cap.
    bool step() {
        if (done_) throw Error("step() called on a finished task: " + name_);
        ++step_count_;
        if (step_count_ > max_steps_) throw StepLimitExceeded(name_, max_steps_);

        std::vector<Responder> eligible;
        if (cpm_ && cpm_->recipient) {
            auto r = resolve_responder(*cpm_->recipient);
            if (r) eligible.push_back(*r);
        } else {
            eligible.push_back({Responder::AgentR, -1});
            eligible.push_back({Responder::LlmR, -1});
            eligible.push_back({Responder::UserR, -1});
            for (int i = 0; i < static_cast<int>(subs_.size()); ++i)
                eligible.push_back({Responder::Sub, i});
        }

        for (const auto& r : eligible) {
            if (last_responder_ && *last_responder_ == r) continue;  // rule (a)
            auto response = invoke(r, *cpm_);
            if (response) {
                ++responses_;
                cpm_ = std::move(*response);
                last_responder_ = r;
                record_message(responder_id(r), *cpm_);
                if (cpm_->control.done) {  // rule (b)
                    finish("done_marker");
                }
                return !done_;
            }
            if (r == in_charge_) {  // rule (c)
                finish("in_charge_null");
                return false;
            }
        }
        finish("no_valid_response");
        return false;
    }

    // Seeds the CPM with `input` (sender USER) and steps until done. Returns
    // the final CPM content with DONE markers stripped. Per-run orchestration
    // state resets here; the agent's history persists across runs.
    std::string run(const std::string& input) {
        ++run_counter_;
        done_ = false;
        step_count_ = 0;
        responses_ = 0;
        last_responder_.reset();
        Message seed;
        seed.sender = Entity::user();
        seed.content = input;
        seed.control = scan_control_markers(input);
        cpm_ = std::move(seed);
        record_message("input", *cpm_);
        if (cpm_->control.done) finish("done_marker");
        while (!done_) step();
        return strip_done_markers(cpm_->content);
    }

   private:
    void finish(const char* reason) {
        done_ = true;
        if (transcript_) transcript_->event(name_, run_counter_, "task_done", {{"reason", reason}});
    }

    void record_message(const std::string& responder, const Message& m) {
        if (transcript_) transcript_->message(name_, run_counter_, responder, m);
    }

    std::string responder_id(const Responder& r) const {
        switch (r.kind) {
            case Responder::AgentR: return "agent";
            case Responder::LlmR: return "llm";
            case Responder::UserR: return "user";
            case Responder::Sub: return subs_[static_cast<size_t>(r.sub)]->name();
        }
        return "?";
    }

    std::optional<Responder> resolve_responder(const std::string& name) const {
        for (int i = 0; i < static_cast<int>(subs_.size()); ++i)
            if (subs_[static_cast<size_t>(i)]->name() == name) return Responder{Responder::Sub, i};
        if (name == "agent") return Responder{Responder::AgentR, -1};
        if (name == "llm") return Responder{Responder::LlmR, -1};
        if (name == "user") return Responder{Responder::UserR, -1};
        return std::nullopt;
    }

    std::optional<Message> invoke(const Responder& r, const Message& cpm) {
        switch (r.kind) {
            case Responder::AgentR: return agent_->agent_respond(cpm);
            case Responder::LlmR: return agent_->llm_respond(cpm);
            case Responder::UserR: return agent_->user_respond(cpm);
            case Responder::Sub: {
                auto& sub = subs_[static_cast<size_t>(r.sub)];
                std::string result = sub->run(cpm.content);
                if (!sub->last_run_responded()) return std::nullopt;
                Message m;
                m.sender = Entity::sub_task(sub->name());
                m.content = result;
                m.control = scan_control_markers(result);
                return m;
            }
        }
        return std::nullopt;
    }

    void check_no_cycle(const Task* candidate) const {
        // The candidate's delegation tree must not reach back to this task.
        std::vector<const Task*> stack{candidate};
        std::set<const Task*> seen;
        while (!stack.empty()) {
            const Task* t = stack.back();
            stack.pop_back();
            if (t == this) throw CycleDetected(name_ + " <-> " + candidate->name_);
            if (!seen.insert(t).second) continue;
            for (const auto& s : t->subs_) stack.push_back(s.get());
        }
    }

    std::string name_;
    std::shared_ptr<Agent> agent_;
    std::vector<std::shared_ptr<Task>> subs_;
    std::optional<Message> cpm_;
    std::optional<Responder> last_responder_;
    Responder in_charge_{Responder::LlmR, -1};
    bool done_ = false;
    int step_count_ = 0;
    int responses_ = 0;
    int max_steps_ = 64;
    int run_counter_ = 0;
    TranscriptWriter* transcript_ = nullptr;
};

inline constexpr const char* kAcceptanceText = "Your reasoning is valid, no feedback was provided.";
inline constexpr const char* kTryAgainText =
    "If any flaws in the reasoning used to produce your answer were identified, you must try "
    "again.";

// ---------------------------------------------------------------------------
// Structured answer/critique tools
// ---------------------------------------------------------------------------

// Natural-language rendering of a structured final answer, as delivered to
// the critic.
inline std::string render_final_answer(const ToolCall& call) {
    std::string out = "Question: " + call.arguments.value("question", "");
    out += "\n-----\nReasoning:\n";
    if (call.arguments.contains("steps")) {
        const auto& steps = call.arguments["steps"];
        if (steps.is_array()) {
            int i = 0;
            for (const auto& s : steps)
                out += std::to_string(++i) + ". " + (s.is_string() ? s.get<std::string>() : s.dump()) +
                       "\n";
        } else if (steps.is_string()) {
            out += "1. " + steps.get<std::string>() + "\n";
        }
    }
    out += "-----\nFinal answer: " + call.arguments.value("answer", "");
    return out;
}

// `final_answer`: the primary agent presents its answer for critique. The
// handler renders it, stashes the structured arguments, and finishes the run
// so the rendered form becomes the task result.
inline ToolSpec make_final_answer_tool() {
    ToolSpec t;
    t.name = "final_answer";
    t.description =
        "Present your final answer together with the question and the reasoning steps used to "
        "derive it, for review by the critic.";
    t.fields = {{"question", "text", true}, {"steps", "list of text", true}, {"answer", "text", true}};
    t.handler = [](Agent& a, const ToolCall& call) -> std::optional<Message> {
        a.stash("final_answer", call.arguments);
        Message m;
        m.content = "{DONE}\n" + render_final_answer(call);
        return m;
    };
    return t;
}

// `feedback`: the critic returns its critique; an empty critique is
// acceptance and renders as the fixed acceptance sentence.
inline ToolSpec make_feedback_tool() {
    ToolSpec t;
    t.name = "feedback";
    t.description =
        "Deliver your critique of the proposed reasoning. Send an empty `critique` when the "
        "reasoning is valid and you have no feedback.";
    t.fields = {{"critique", "text", true}};
    t.handler = [](Agent& a, const ToolCall& call) -> std::optional<Message> {
        std::string critique =
            call.arguments["critique"].is_string() ? call.arguments["critique"].get<std::string>() : "";
        a.stash("critique", ojson(critique));
        Message m;
        m.content = "{DONE}\n" + (critique.empty() ? std::string(kAcceptanceText) : critique);
        return m;
    };
    return t;
}

// ---------------------------------------------------------------------------
// Agent-Critic loop
// ---------------------------------------------------------------------------

struct CritiqueResult {
    Message final_message;   // accepted answer (post-acceptance output when accepted)
    std::string final_text;  // DONE-stripped content of final_message
    int rounds = 0;
    bool forced = false;  // true when max_rounds rejections forced acceptance
};

// Alternates the primary task (which must end each run by rendering its
// `final_answer`) with a critic task (which must end each run by rendering its
// `feedback`). An empty critique is acceptance: the primary is then told the
// reasoning is valid and produces its final output. After `max_rounds`
// rejections the last answer is accepted as-is and flagged forced.
// With `critics_enabled` false the first answer is accepted immediately and
// the critic is never consulted.
inline CritiqueResult critique_loop(Task& primary, Task& critic, const std::string& input,
                                    int max_rounds, TranscriptWriter* transcript = nullptr,
                                    bool critics_enabled = true) {
    if (max_rounds < 1) throw Error("critique_loop requires max_rounds >= 1");
    CritiqueResult result;
    std::string next_input = input;
    for (int round = 1; round <= max_rounds; ++round) {
        std::string rendered = primary.run(next_input);
        result.rounds = round;

        bool accepted = true;
        std::string critique;
        if (critics_enabled) {
            std::string critic_text = critic.run(rendered);
            auto stored = critic.agent()->stashed("critique");
            if (stored && stored->is_string()) {
                critique = stored->get<std::string>();
            } else {
                // The critic skipped the feedback tool; treat its raw reply as
                // the critique so a plain-text objection still counts.
                critique = trim(critic_text);
            }
            critic.agent()->unstash("critique");
            accepted = critique.empty();
            if (transcript)
                transcript->event(primary.name(), primary.run_count(), "critic_round",
                                  {{"round", round}, {"accepted", accepted}});
        }

        if (accepted) {
            result.final_text = primary.run(kAcceptanceText);
            result.final_message = primary.cpm().value();
            return result;
        }
        if (round == max_rounds) {
            if (transcript)
                transcript->event(primary.name(), primary.run_count(), "forced_acceptance",
                                  {{"round", round}, {"forced", true}});
            result.forced = true;
            result.final_message = primary.cpm().value();
            result.final_text = strip_done_markers(result.final_message.content);
            return result;
        }
        next_input = critique + "\n\n" + kTryAgainText;
    }
    throw Error("critique_loop: unreachable");
}

}  // namespace malade

#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "malade/config.hpp"
#include "malade/drug_data.hpp"
#include "malade/effects.hpp"
#include "malade/embedder.hpp"
#include "malade/http_backend.hpp"
#include "malade/orchestrator.hpp"
#include "malade/prompts.hpp"
#include "malade/rag.hpp"

namespace malade {

// ---------------------------------------------------------------------------
// Three-stage drug-category review:
//   1. DrugFinder picks representative drugs for a category,
//   2. DrugAgent (consulting FDAHandler) reports each drug's effect on the
//      outcome,
//   3. CategoryAgent condenses the reports into one structured verdict.
// Each stage is an agent-critic loop; a batch runner fans stage 2 out
// concurrently and merges split categories member by member.
// ---------------------------------------------------------------------------

struct CategoryQuery {
    std::string category;
    std::vector<std::string> search_terms;   // candidate lookup terms; defaults to {category}
    std::vector<std::string> subcategories;  // split categories reviewed member by member
    std::string outcome;
    int representatives_n = 3;
};

struct DrugReport {
    std::string drug;
    std::string outcome;
    std::string text;       // free-form summary from the reviewing agent
    bool no_answer = false;  // true when no trusted information was found
};

struct CellResult {
    std::string category;
    std::string outcome;
    std::optional<CategoryEffect> effect;  // absent when the cell failed
    bool failed = false;
    std::string error;
    std::string transcript_path;  // relative to the output directory
};

struct MatrixResult {
    std::vector<CellResult> cells;  // config order: category-major, outcome-minor
    std::map<std::string, std::vector<std::string>> representatives;  // unit name -> drugs
    bool any_failed = false;
};

// ---------------------------------------------------------------------------
// Question and input rendering
// ---------------------------------------------------------------------------

inline std::string drug_question(const std::string& drug, const std::string& outcome) {
    return "Does " + to_upper(drug) + " increase or decrease the risk of " + outcome + "?";
}

inline std::string category_question(const std::string& category, const std::string& outcome) {
    return "Does the " + category + " category of drugs increase the risk of " + outcome +
           ", decrease it, or is there no clear effect?";
}

inline std::string render_passages(const std::vector<DrugReport>& reports,
                                   const std::string& question) {
    std::string out = "Passages:\n";
    int i = 0;
    for (const auto& r : reports)
        out += std::to_string(++i) + ". Drug " + to_upper(r.drug) + ": " + r.text + "\n";
    out += "---------\n" + question;
    return out;
}

inline std::string render_finder_input(const std::string& category,
                                       const std::vector<NdcDrugRecord>& candidates,
                                       const std::vector<PrescriptionRate>& rates, int n) {
    std::ostringstream out;
    out << "Drugs in category " << category << ":\n";
    for (const auto& r : candidates) out << "- " << r.name << "\n";
    out << "\nUsage rates from the medical database:\n";
    for (const auto& r : rates)
        out << "- " << r.name << ": " << r.rate << " (" << r.count << " prescriptions)\n";
    out << "\nFind " << n << " representative drugs in category " << category << ".";
    return out.str();
}

// Citation truncation: up to the first 3 words and the last 3 words.
inline std::string extract_start_end(const std::string& text) {
    auto words = split_whitespace(text);
    if (words.size() <= 6) return join(words, " ");
    std::vector<std::string> head(words.begin(), words.begin() + 3);
    std::vector<std::string> tail(words.end() - 3, words.end());
    return join(head, " ") + " ... " + join(tail, " ");
}

namespace detail {

inline std::string arg_text(const json& args, const std::string& key) {
    if (!args.contains(key)) return "";
    const auto& v = args.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
}

inline std::vector<std::string> arg_list(const json& args, const std::string& key) {
    std::vector<std::string> out;
    if (!args.contains(key)) return out;
    const auto& v = args.at(key);
    if (v.is_string()) {
        out.push_back(v.get<std::string>());
    } else if (v.is_array()) {
        for (const auto& el : v) out.push_back(el.is_string() ? el.get<std::string>() : el.dump());
    }
    return out;
}

inline std::optional<Message> tool_reply(std::string content) {
    Message m;
    m.content = std::move(content);
    return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage-specific tools
// ---------------------------------------------------------------------------

// Routes a question to another agent: the handler emits the content addressed
// to the named recipient, which the task loop then delivers exclusively.
inline ToolSpec make_recipient_message_tool() {
    ToolSpec t;
    t.name = "recipient_message";
    t.description = "Send `content` to the agent named `intended_recipient` and await its reply.";
    t.fields = {{"intended_recipient", "text", true}, {"content", "text", true}};
    t.handler = [](Agent&, const ToolCall& call) -> std::optional<Message> {
        Message m;
        m.content = detail::arg_text(call.arguments, "content");
        m.recipient = detail::arg_text(call.arguments, "intended_recipient");
        return m;
    };
    return t;
}

// Final submission for the representative-drug stage. Names must exactly
// match the candidate list, be pairwise distinct after normalization, and
// number at most `n`. One corrective retry, then ValidationError.
inline ToolSpec make_submit_answer_tool(std::vector<std::string> candidates, int n) {
    ToolSpec t;
    t.name = "submit_answer";
    t.description =
        "Submit the final list of representative drugs once your reasoning has been accepted. "
        "Every name must EXACTLY match one of the provided drugs.";
    t.fields = {{"drugs", "list of text", true}};
    t.handler = [candidates = std::move(candidates), n](Agent& a, const ToolCall& call)
        -> std::optional<Message> {
        auto reject = [&](const std::string& why) -> std::optional<Message> {
            int attempts = 0;
            if (auto s = a.stashed("submit_attempts"); s && s->is_number_integer())
                attempts = s->get<int>();
            ++attempts;
            if (attempts > 1) throw ValidationError(why);
            a.stash("submit_attempts", attempts);
            return detail::tool_reply(why +
                                      " Please resend `submit_answer` with a corrected list.");
        };
        if (!a.stashed("final_answer"))
            return detail::tool_reply(
                "Before `submit_answer`, present your reasoning with the `final_answer` tool.");
        auto drugs = detail::arg_list(call.arguments, "drugs");
        if (drugs.empty()) return reject("`drugs` must be a non-empty list of drug names.");
        if (static_cast<int>(drugs.size()) > n)
            return reject("At most " + std::to_string(n) + " drugs may be submitted.");
        std::set<std::string> seen;
        for (const auto& d : drugs) {
            if (std::find(candidates.begin(), candidates.end(), d) == candidates.end())
                return reject("`" + d + "` does not exactly match any of the provided drugs.");
            if (!seen.insert(normalize_name(d)).second)
                return reject("`" + d +
                              "` repeats an already-selected drug (brand and generic names of "
                              "one drug count as the same drug).");
        }
        a.stash("representatives", ojson(drugs));
        Message m;
        m.content = "{DONE}\nRepresentatives: " + join(drugs, ", ");
        return m;
    };
    return t;
}

// Structured verdict submission for the category stage. Field violations get
// one corrective retry, then ValidationError. When every drug report came
// back empty-handed, only a no-effect label is accepted.
inline ToolSpec make_category_effect_tool(bool all_no_answer) {
    ToolSpec t;
    t.name = "category_effect_tool";
    t.aliases = {"category_effect"};
    t.description =
        "Record the category-level verdict once your reasoning has been accepted: label "
        "(increase | decrease | no-effect), confidence and probability in [0,1], frequency "
        "(none | rare | common), evidence (none | weak | strong), and your justification.";
    t.fields = {{"label", "text", true},       {"confidence", "number", true},
                {"probability", "number", true}, {"frequency", "text", true},
                {"evidence", "text", true},    {"justification", "text", true}};
    t.handler = [all_no_answer](Agent& a, const ToolCall& call) -> std::optional<Message> {
        auto reject = [&](const std::string& why) -> std::optional<Message> {
            int attempts = 0;
            if (auto s = a.stashed("effect_attempts"); s && s->is_number_integer())
                attempts = s->get<int>();
            ++attempts;
            if (attempts > 1) throw ValidationError(why);
            a.stash("effect_attempts", attempts);
            return detail::tool_reply(why + " Please resend the tool call with corrected fields.");
        };
        if (!a.stashed("final_answer"))
            return detail::tool_reply(
                "Before recording the category effect, present your reasoning with the "
                "`final_answer` tool and have it accepted.");
        if (auto err = validate_effect_fields(call.arguments)) return reject(*err);
        std::string label = call.arguments.at("label").get<std::string>();
        if (all_no_answer && label != "no-effect")
            return reject(
                "Every drug report said no information was available from the trusted source; "
                "that absence of information should be enough to conclude that there is no "
                "effect.");
        a.stash("category_effect", call.arguments);
        Message m;
        m.content = "{DONE}\nRecorded category effect: " + label;
        return m;
    };
    return t;
}

// ---------------------------------------------------------------------------
// Subcategory merging
// ---------------------------------------------------------------------------

// Highest risk wins under increase > no-effect > decrease (a protective
// member must not mask a neutral or harmful sibling); ties within a label go
// to the higher confidence, then to the first-listed record.
inline CategoryEffect merge_subcategories(const std::vector<CategoryEffect>& effects) {
    if (effects.empty()) throw ValidationError("merge_subcategories requires at least one effect");
    auto risk = [](Label l) { return l == Label::Increase ? 2 : (l == Label::NoEffect ? 1 : 0); };
    const CategoryEffect* best = &effects.front();
    for (const auto& e : effects) {
        if (risk(e.label) > risk(best->label) ||
            (risk(e.label) == risk(best->label) && e.confidence > best->confidence))
            best = &e;
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Prediction records (line-delimited JSON, one per grid cell)
// ---------------------------------------------------------------------------

inline ojson prediction_record(const CellResult& cell) {
    ojson j;
    j["category"] = cell.category;
    j["outcome"] = cell.outcome;
    if (cell.effect) {
        ojson e = cell.effect->to_json();
        for (auto& [k, v] : e.items()) j[k] = v;
    }
    j["failed"] = cell.failed;
    if (!cell.error.empty()) j["error"] = cell.error;
    j["transcript"] = cell.transcript_path;
    return j;
}

inline std::string render_predictions(const MatrixResult& m) {
    std::string out;
    for (const auto& c : m.cells) out += prediction_record(c).dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

// Knowledge-free fallback prompt for runs with retrieval disabled: the data
// handler answers from the model's own knowledge instead of indexed labels.
inline constexpr std::string_view kFdaDirectPrompt =
    R"(You are an expert on drugs and their adverse effects. Answer each question you receive directly, using only your own knowledge; you have no tools and no external data source.

When you can answer, say {DONE}, then provide the answer in this format:

ANSWER: <your answer, including how frequently the effect is reported>
SOURCE: general knowledge

If you cannot answer the question, respond with "{DONE} {NO_ANSWER}".)";

class Pipeline {
   public:
    explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        sampling_.temperature = cfg_.backend.temperature;
        sampling_.seed = cfg_.backend.seed;
        if (cfg_.scripted()) {
            script_ = std::make_shared<ScriptFile>(ScriptFile::load(cfg_.backend.script));
        } else {
            HttpBackend::Options opt;
            opt.base_url = cfg_.backend.base_url;
            opt.model = cfg_.backend.model;
            opt.max_concurrency = cfg_.caps.parallelism;
            live_ = std::make_shared<HttpBackend>(std::move(opt));
        }
        if (cfg_.fixture_data()) {
            catalog_ = std::make_shared<NdcCatalog>(NdcCatalog::load(cfg_.data.ndc));
            labels_ = std::make_shared<FixtureLabelClient>(cfg_.data.labels);
        } else {
            http_catalog_ = std::make_shared<HttpNdcCatalog>(cfg_.data.base_url);
            http_labels_ = std::make_shared<HttpLabelClient>(cfg_.data.base_url, cfg_.data.cache_dir);
            labels_ = http_labels_;
        }
        rates_ = std::make_shared<RateProvider>(RateProvider::load(cfg_.data.prescriptions));
        rag_ = std::make_shared<RagStore>(std::make_shared<HashEmbedder>());
    }

    const RunConfig& config() const { return cfg_; }
    RagStore& rag() { return *rag_; }

    void set_label_refresh(bool refresh) {
        if (http_labels_) http_labels_->set_refresh(refresh);
    }

    // Indexes the drug's label once; false when no label document exists.
    // Single-flight per drug: concurrent reviewers must never observe a
    // partially ingested label, and a drug's chunks get contiguous ordinals
    // so tie-breaks inside one drug don't depend on ingestion interleaving.
    bool ensure_ingested(const std::string& drug) {
        std::lock_guard lock(ingest_mutex_);
        std::string key = normalize_name(drug);
        if (auto it = ingested_.find(key); it != ingested_.end()) return it->second;
        bool ok = false;
        try {
            DrugLabel label = labels_->fetch_label(drug);
            if (!label.sections.empty()) {
                rag_->ingest(drug, label.sections);
                ok = true;
            }
        } catch (const NotFound&) {
        }
        ingested_[key] = ok;
        return ok;
    }

    // Stage 1: pick up to N representative drugs for the category, chosen
    // from the drug-directory candidates with their prescription rates.
    std::vector<std::string> find_representatives(const CategoryQuery& q,
                                                  TranscriptWriter* transcript = nullptr,
                                                  int trial = 0) {
        if (q.category.empty()) throw ValidationError("category name must be non-empty");
        auto terms = q.search_terms.empty() ? std::vector<std::string>{q.category} : q.search_terms;
        auto candidates = category_candidates(terms);
        if (candidates.empty()) throw EmptyCategory(q.category);
        std::vector<std::string> names;
        names.reserve(candidates.size());
        for (const auto& r : candidates) names.push_back(r.name);
        auto rates = rates_->prescription_rates(names);

        PromptVars vars{q.category, q.outcome, q.representatives_n};
        auto finder = make_agent("DrugFinder", render_prompt(kDrugFinderPrompt, vars), trial);
        finder->register_tool(make_final_answer_tool());
        finder->register_tool(make_submit_answer_tool(names, q.representatives_n));
        auto critic =
            make_agent("DrugFinderCritic", render_prompt(kDrugFinderCriticPrompt, vars), trial);
        critic->register_tool(make_feedback_tool());

        Task finder_task("DrugFinder", finder);
        Task critic_task("DrugFinderCritic", critic);
        configure(finder_task, transcript);
        configure(critic_task, transcript);

        std::string input =
            render_finder_input(q.category, candidates, rates, q.representatives_n);
        critique_loop(finder_task, critic_task, input, cfg_.caps.max_critic_rounds, transcript,
                      cfg_.ablation.critics);
        auto stored = finder->stashed("representatives");
        if (!stored)
            throw ValidationError("DrugFinder ended without submitting representatives for `" +
                                  q.category + "`");
        return stored->get<std::vector<std::string>>();
    }

    // Runs the data handler on one question. `filter` pre-indexes that
    // drug's label so filtered retrieval can succeed on the first attempt.
    Message fda_answer(const std::string& question,
                       const std::optional<std::string>& filter = std::nullopt,
                       TranscriptWriter* transcript = nullptr, int trial = 0) {
        if (filter) ensure_ingested(*filter);
        auto task = make_fda_task(trial);
        task->set_transcript(transcript);
        task->run(question);
        if (auto m = task->cpm()) return *m;
        return message_from_text(Entity::agent(), "{DONE} {NO_ANSWER}");
    }

    // Stage 2: one drug, one outcome. The reviewing agent gathers evidence
    // through the data handler and defends its summary before the critic.
    DrugReport drug_effect_report(const std::string& drug, const std::string& outcome,
                                  TranscriptWriter* transcript = nullptr, int trial = 0) {
        PromptVars vars{"", outcome, cfg_.representatives_n};
        auto agent = make_agent("DrugAgent", render_prompt(kDrugAgentPrompt, vars), trial);
        agent->register_tool(make_final_answer_tool());
        agent->register_tool(make_recipient_message_tool());
        auto critic =
            make_agent("DrugAgentCritic", render_prompt(kDrugAgentCriticPrompt, vars), trial);
        critic->register_tool(make_feedback_tool());

        Task agent_task("DrugAgent", agent);
        Task critic_task("DrugAgentCritic", critic);
        configure(agent_task, transcript);
        configure(critic_task, transcript);
        agent_task.add_sub_tasks({make_fda_task(trial)});

        auto res = critique_loop(agent_task, critic_task, drug_question(drug, outcome),
                                 cfg_.caps.max_critic_rounds, transcript, cfg_.ablation.critics);
        DrugReport report;
        report.drug = drug;
        report.outcome = outcome;
        report.text = res.final_text;
        report.no_answer = res.final_message.control.no_answer;
        if (!report.no_answer) {
            // The marker may live only in the structured answer field while
            // the prose summary merely explains the gap.
            if (auto fa = agent->stashed("final_answer");
                fa && fa->contains("answer") && (*fa)["answer"].is_string())
                report.no_answer =
                    scan_control_markers((*fa)["answer"].get<std::string>()).no_answer;
        }
        return report;
    }

    // Stage 3: condense the drug reports into one structured verdict for the
    // (category, outcome) cell.
    CategoryEffect categorize(const std::string& category, const std::string& outcome,
                              const std::vector<DrugReport>& reports,
                              TranscriptWriter* transcript = nullptr, int trial = 0) {
        if (reports.empty()) throw ValidationError("categorize requires at least one drug report");
        bool all_no_answer =
            std::all_of(reports.begin(), reports.end(), [](const DrugReport& r) { return r.no_answer; });

        PromptVars vars{category, outcome, cfg_.representatives_n};
        auto agent = make_agent("CategoryAgent", render_prompt(kCategoryAgentPrompt, vars), trial);
        agent->register_tool(make_final_answer_tool());
        agent->register_tool(make_category_effect_tool(all_no_answer));
        auto critic =
            make_agent("CategoryAgentCritic", render_prompt(kCategoryAgentCriticPrompt, vars), trial);
        critic->register_tool(make_feedback_tool());

        Task agent_task("CategoryAgent", agent);
        Task critic_task("CategoryAgentCritic", critic);
        configure(agent_task, transcript);
        configure(critic_task, transcript);

        std::string input = render_passages(reports, category_question(category, outcome));
        critique_loop(agent_task, critic_task, input, cfg_.caps.max_critic_rounds, transcript,
                      cfg_.ablation.critics);
        auto stored = agent->stashed("category_effect");
        if (!stored)
            throw ValidationError("CategoryAgent ended without recording a category effect for `" +
                                  category + "` / `" + outcome + "`");
        return effect_from_json(*stored);
    }

    // Full grid. Stage 1 runs once per unit (subcategory, or the category
    // itself), stage 2 fans out across a small thread pool, stage 3 runs per
    // cell and merges split categories. Failures are recorded per cell;
    // every cell's transcripts are persisted under the output directory.
    // `fixed_representatives` (unit name -> drugs) skips stage 1 for the
    // listed units, which pins selection when comparing repeated trials.
    MatrixResult run_matrix(int trial = 0,
                            const std::map<std::string, std::vector<std::string>>*
                                fixed_representatives = nullptr) {
        namespace fs = std::filesystem;
        struct Unit {
            std::string parent;
            std::string name;
            std::vector<std::string> terms;
        };
        std::vector<Unit> units;
        for (const auto& c : cfg_.categories) {
            if (c.subcategories.empty()) {
                units.push_back({c.name, c.name, c.search_terms});
            } else {
                for (const auto& s : c.subcategories) units.push_back({c.name, s.name, s.search_terms});
            }
        }

        MatrixResult result;
        std::map<std::string, std::string> unit_errors;
        for (const auto& u : units) {
            if (fixed_representatives && fixed_representatives->count(u.name)) {
                result.representatives[u.name] = fixed_representatives->at(u.name);
                continue;
            }
            TranscriptWriter tw(cfg_.scripted());
            tw.set_scope(u.name + "::representatives");
            try {
                CategoryQuery q;
                q.category = u.name;
                q.search_terms = u.terms;
                q.representatives_n = cfg_.representatives_n;
                result.representatives[u.name] = find_representatives(q, &tw, trial);
            } catch (const std::exception& e) {
                unit_errors[u.name] = e.what();
            }
            write_file(fs::path(cfg_.output_dir) / "transcripts" /
                           (slugify(u.name) + "__representatives.jsonl"),
                       tw.str());
        }

        struct Job {
            std::string unit;
            std::string drug;
            std::string outcome;
        };
        std::vector<Job> jobs;
        for (const auto& u : units) {
            if (unit_errors.count(u.name)) continue;
            for (const auto& d : result.representatives[u.name])
                for (const auto& o : cfg_.outcomes) jobs.push_back({u.name, d, o});
        }
        struct JobOut {
            DrugReport report;
            std::string error;
            std::string transcript;
        };
        std::vector<JobOut> outs(jobs.size());
        std::atomic<size_t> cursor{0};
        auto work = [&]() {
            for (size_t i = cursor.fetch_add(1); i < jobs.size(); i = cursor.fetch_add(1)) {
                TranscriptWriter tw(cfg_.scripted());
                tw.set_scope(jobs[i].unit + "/" + jobs[i].drug + "/" + jobs[i].outcome);
                try {
                    outs[i].report = drug_effect_report(jobs[i].drug, jobs[i].outcome, &tw, trial);
                } catch (const std::exception& e) {
                    outs[i].error = e.what();
                }
                outs[i].transcript = tw.str();
            }
        };
        size_t workers = std::min(static_cast<size_t>(std::max(1, cfg_.caps.parallelism)),
                                  jobs.size());
        if (workers <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }

        for (const auto& c : cfg_.categories) {
            std::vector<const Unit*> members;
            for (const auto& u : units)
                if (u.parent == c.name) members.push_back(&u);
            for (const auto& o : cfg_.outcomes) {
                CellResult cell;
                cell.category = c.name;
                cell.outcome = o;
                std::vector<CategoryEffect> effects;
                std::vector<std::string> problems;
                std::string transcript_text;
                for (const Unit* u : members) {
                    if (unit_errors.count(u->name)) {
                        problems.push_back(u->name + ": " + unit_errors.at(u->name));
                        continue;
                    }
                    std::vector<DrugReport> reports;
                    bool unit_ok = true;
                    for (size_t i = 0; i < jobs.size(); ++i) {
                        if (jobs[i].unit != u->name || jobs[i].outcome != o) continue;
                        transcript_text += outs[i].transcript;
                        if (!outs[i].error.empty()) {
                            problems.push_back(u->name + "/" + jobs[i].drug + ": " + outs[i].error);
                            unit_ok = false;
                        } else {
                            reports.push_back(outs[i].report);
                        }
                    }
                    if (!unit_ok) continue;
                    if (reports.empty()) {
                        problems.push_back(u->name + ": no drug reports");
                        continue;
                    }
                    TranscriptWriter tw(cfg_.scripted());
                    tw.set_scope(u->name + "/" + o + "::categorize");
                    try {
                        effects.push_back(categorize(u->name, o, reports, &tw, trial));
                    } catch (const std::exception& e) {
                        problems.push_back(u->name + ": " + e.what());
                    }
                    transcript_text += tw.str();
                }
                std::string rel = "transcripts/" + slugify(c.name) + "__" + slugify(o) + ".jsonl";
                write_file(fs::path(cfg_.output_dir) / rel, transcript_text);
                cell.transcript_path = rel;
                if (problems.empty() && !effects.empty()) {
                    cell.effect = merge_subcategories(effects);
                } else {
                    cell.failed = true;
                    cell.error =
                        problems.empty() ? "no subcategory produced an effect" : join(problems, "; ");
                    result.any_failed = true;
                }
                result.cells.push_back(std::move(cell));
            }
        }
        return result;
    }

   private:
    std::shared_ptr<Backend> backend_for(const std::string& agent_name, int trial) const {
        if (script_) {
            if (!script_->has_agent(agent_name))
                return std::make_shared<ScriptedBackend>(std::vector<ScriptEntry>{},
                                                         "scripted:" + agent_name);
            return script_->backend_for(agent_name, trial);
        }
        return live_;
    }

    std::shared_ptr<Agent> make_agent(const std::string& name, std::string prompt, int trial) const {
        auto agent = std::make_shared<Agent>(name, std::move(prompt), backend_for(name, trial));
        agent->set_sampling(sampling_);
        return agent;
    }

    void configure(Task& task, TranscriptWriter* transcript) const {
        task.set_max_steps(cfg_.caps.max_steps);
        task.set_transcript(transcript);
    }

    std::vector<NdcDrugRecord> category_candidates(const std::vector<std::string>& terms) const {
        return catalog_ ? catalog_->find_category_drugs(terms)
                        : http_catalog_->find_category_drugs(terms);
    }

    std::shared_ptr<Task> make_fda_task(int trial) {
        std::shared_ptr<Agent> fda;
        if (cfg_.ablation.rag) {
            fda = make_agent("FDAHandler", std::string(kFdaHandlerPrompt), trial);
            fda->register_tool(relevant_extracts_tool());
            fda->register_tool(relevant_search_extracts_tool());
            fda->register_tool(drug_category_search_tool());
        } else {
            fda = make_agent("FDAHandler", std::string(kFdaDirectPrompt), trial);
        }
        auto task = std::make_shared<Task>("FDAHandler", fda);
        task->set_max_steps(cfg_.caps.max_steps);
        return task;
    }

    // Retrieval over already-indexed labels; drugs named in `filter_drugs`
    // are indexed on demand first.
    ToolSpec relevant_extracts_tool() {
        ToolSpec t;
        t.name = "relevant_extracts";
        t.description =
            "Retrieve passages relevant to `query` from the indexed FDA label data; name the "
            "drugs of interest in `filter_drugs` to restrict the search.";
        t.fields = {{"query", "text", true}, {"filter_drugs", "list of text", false}};
        t.handler = [this](Agent&, const ToolCall& call) -> std::optional<Message> {
            std::string query = detail::arg_text(call.arguments, "query");
            auto filters = detail::arg_list(call.arguments, "filter_drugs");
            for (const auto& d : filters) ensure_ingested(d);
            auto hits = rag_->retrieve({query, cfg_.retrieval_k, filters});
            if (hits.empty()) return detail::tool_reply("{NO_ANSWER}");
            std::vector<Chunk> chunks;
            chunks.reserve(hits.size());
            for (const auto& [chunk, score] : hits) chunks.push_back(chunk);
            return detail::tool_reply(augment_prompt(query, chunks));
        };
        return t;
    }

    // Fallback lookup: fetch the named drug's label from the source, index
    // it, and retrieve against it.
    ToolSpec relevant_search_extracts_tool() {
        ToolSpec t;
        t.name = "relevant_search_extracts";
        t.description =
            "Fetch the label document for `drug` from the data source, index it, and retrieve "
            "passages relevant to `query` from it.";
        t.fields = {{"query", "text", true}, {"drug", "text", true}};
        t.handler = [this](Agent&, const ToolCall& call) -> std::optional<Message> {
            std::string query = detail::arg_text(call.arguments, "query");
            std::string drug = detail::arg_text(call.arguments, "drug");
            if (!ensure_ingested(drug)) return detail::tool_reply("{NO_ANSWER}");
            auto hits = rag_->retrieve({query, cfg_.retrieval_k, {drug}});
            if (hits.empty()) return detail::tool_reply("{NO_ANSWER}");
            std::vector<Chunk> chunks;
            chunks.reserve(hits.size());
            for (const auto& [chunk, score] : hits) chunks.push_back(chunk);
            return detail::tool_reply(augment_prompt(query, chunks));
        };
        return t;
    }

    ToolSpec drug_category_search_tool() {
        ToolSpec t;
        t.name = "drug_category_search";
        t.description = "List the drugs belonging to `category` per the drug directory.";
        t.fields = {{"category", "text", true}};
        t.handler = [this](Agent&, const ToolCall& call) -> std::optional<Message> {
            std::string category = detail::arg_text(call.arguments, "category");
            auto records = category_candidates({category});
            if (records.empty()) return detail::tool_reply("{NO_ANSWER}");
            std::vector<std::string> names;
            names.reserve(records.size());
            for (const auto& r : records) names.push_back(r.name);
            return detail::tool_reply("Drugs in category " + category + ": " + join(names, ", "));
        };
        return t;
    }

    RunConfig cfg_;
    Sampling sampling_;
    std::shared_ptr<ScriptFile> script_;
    std::shared_ptr<Backend> live_;
    std::shared_ptr<NdcCatalog> catalog_;
    std::shared_ptr<HttpNdcCatalog> http_catalog_;
    std::shared_ptr<RateProvider> rates_;
    std::shared_ptr<LabelClient> labels_;
    std::shared_ptr<HttpLabelClient> http_labels_;
    std::shared_ptr<RagStore> rag_;
    std::mutex ingest_mutex_;
    std::map<std::string, bool> ingested_;  // normalized drug -> label indexed
};

}  // namespace malade

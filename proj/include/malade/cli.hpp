#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "malade/pipeline.hpp"
#include "malade/scoring.hpp"

namespace malade::cli {

// Exit codes shared by all commands: 0 success, 1 runtime/metric failure,
// 2 bad input (config, flags, unparseable files).
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

// Flag overrides applied on top of the config file.
struct RunOverrides {
    std::optional<std::string> output_dir;
    bool no_critics = false;
    bool no_rag = false;
    bool refresh = false;  // live mode: bypass the label cache
    std::optional<int> max_steps;
    std::optional<int> max_critic_rounds;
    std::optional<int> parallelism;
};

inline RunConfig load_config(const std::filesystem::path& path, const RunOverrides& ov) {
    RunConfig cfg = RunConfig::load(path);
    if (ov.output_dir) cfg.output_dir = *ov.output_dir;
    if (ov.no_critics) cfg.ablation.critics = false;
    if (ov.no_rag) cfg.ablation.rag = false;
    if (ov.max_steps) cfg.caps.max_steps = *ov.max_steps;
    if (ov.max_critic_rounds) cfg.caps.max_critic_rounds = *ov.max_critic_rounds;
    if (ov.parallelism) cfg.caps.parallelism = *ov.parallelism;
    return cfg;
}

inline void write_representatives(const std::filesystem::path& out_dir,
                                  const std::map<std::string, std::vector<std::string>>& reps) {
    ojson j = ojson::object();
    for (const auto& [unit, drugs] : reps) j[unit] = drugs;
    write_file(out_dir / "predictions" / "representatives.json", j.dump(2) + "\n");
}

inline void print_cells(const MatrixResult& m, std::ostream& out) {
    for (const auto& c : m.cells) {
        out << c.category << " / " << c.outcome << ": ";
        if (c.failed)
            out << "FAILED (" << c.error << ")\n";
        else
            out << to_string(c.effect->label) << " (confidence " << c.effect->confidence << ")\n";
    }
}

// run: execute the full grid once and persist predictions + transcripts.
inline int cmd_run(const std::filesystem::path& config_path, const RunOverrides& ov,
                   std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_config(config_path, ov);
    } catch (const std::exception& e) {
        err << "config error (" << config_path.string() << "): " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        namespace fs = std::filesystem;
        Pipeline pipeline(cfg);
        pipeline.set_label_refresh(ov.refresh);
        MatrixResult m = pipeline.run_matrix();
        write_file(fs::path(cfg.output_dir) / "predictions" / "predictions.jsonl",
                   render_predictions(m));
        write_representatives(cfg.output_dir, m.representatives);
        print_cells(m, out);
        out << "wrote " << (fs::path(cfg.output_dir) / "predictions" / "predictions.jsonl").string()
            << "\n";
        return m.any_failed ? kExitFailed : kExitOk;
    } catch (const std::exception& e) {
        err << "run failed: " << e.what() << "\n";
        return kExitFailed;
    }
}

struct EvalOptions {
    std::filesystem::path predictions;
    std::filesystem::path truth;
    std::vector<std::string> modes;     // default: both
    std::vector<std::string> scorings;  // default: confidence
    std::filesystem::path output_dir = ".";
};

// eval: score a prediction file against a ground-truth grid for every
// requested (mode, scoring) combination.
inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    std::vector<PredictionRecord> preds;
    GroundTruthGrid truth;
    try {
        preds = load_predictions(opt.predictions);
        truth = GroundTruthGrid::load(opt.truth);
    } catch (const std::exception& e) {
        err << "eval input error: " << e.what() << "\n";
        return kExitUsage;
    }
    auto modes =
        opt.modes.empty() ? std::vector<std::string>{"ade-based", "effect-based"} : opt.modes;
    auto scorings =
        opt.scorings.empty() ? std::vector<std::string>{"confidence"} : opt.scorings;
    try {
        for (const auto& ms : modes) {
            auto mode = eval_mode_from_string(ms);
            if (!mode) {
                err << "unknown mode: " << ms << "\n";
                return kExitUsage;
            }
            for (const auto& ss : scorings) {
                auto kind = scoring_kind_from_string(ss);
                if (!kind) {
                    err << "unknown scoring: " << ss << "\n";
                    return kExitUsage;
                }
                EvalReport rep = evaluate(preds, truth, *mode, *kind);
                auto path = opt.output_dir /
                            ("eval_" + to_string(*mode) + "_" + to_string(*kind) + ".json");
                write_file(path, rep.to_json().dump(2) + "\n");
                out << to_string(*mode) << " / " << to_string(*kind) << ": auc " << rep.auc
                    << ", f1 " << rep.f1 << ", confusion tp=" << rep.confusion.tp
                    << " fp=" << rep.confusion.fp << " tn=" << rep.confusion.tn
                    << " fn=" << rep.confusion.fn << "\n";
            }
        }
        return kExitOk;
    } catch (const MissingCells& e) {
        err << "eval failed: " << e.what() << "\n";
        return kExitFailed;
    } catch (const std::exception& e) {
        err << "eval failed: " << e.what() << "\n";
        return kExitFailed;
    }
}

inline std::string tool_call_name(const ojson& rec) {
    if (!rec.contains("tool_call") || rec["tool_call"].is_null()) return "";
    std::string text = rec["tool_call"].get<std::string>();
    constexpr std::string_view prefix = "FUNC: ";
    if (text.rfind(prefix, 0) != 0) return "";
    ojson doc = ojson::parse(text.substr(prefix.size()), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("name")) return "";
    return doc["name"].is_string() ? doc["name"].get<std::string>() : "";
}

// replay: re-render a transcript as a human-readable dialog; with `verify`,
// re-check the orchestration rules over the trace.
inline int cmd_replay(const std::filesystem::path& path, bool verify, std::ostream& out,
                      std::ostream& err) {
    std::vector<ojson> records;
    try {
        records = load_transcript(path);
    } catch (const std::exception& e) {
        err << "replay: " << e.what() << "\n";
        return kExitUsage;
    }
    std::string scope = "\x1f";
    for (const auto& rec : records) {
        std::string s = rec.value("scope", "");
        if (s != scope) {
            scope = s;
            out << "=== " << (scope.empty() ? "(unscoped)" : scope) << " ===\n";
        }
        std::string head = rec.value("task", "") + "#" + std::to_string(rec.value("run", 0));
        if (rec.value("kind", "") == "event") {
            out << "  -- " << head << " " << rec.value("event", "");
            for (auto& [k, v] : rec.items()) {
                if (k == "seq" || k == "ts" || k == "scope" || k == "task" || k == "run" ||
                    k == "kind" || k == "event")
                    continue;
                out << " " << k << "=" << v.dump();
            }
            out << "\n";
            continue;
        }
        out << "  [" << head << "] " << rec.value("responder", "") << " ("
            << rec.value("sender", "") << ")";
        if (rec.contains("recipient") && !rec["recipient"].is_null())
            out << " -> " << rec["recipient"].get<std::string>();
        std::string tool = tool_call_name(rec);
        if (!tool.empty()) out << " [tool: " << tool << "]";
        out << "\n";
        for (const auto& line : split(rec.value("content", ""), '\n')) out << "      " << line << "\n";
    }
    if (verify) {
        auto violations = verify_transcript(records);
        for (const auto& v : violations) err << "verify: " << v << "\n";
        if (!violations.empty()) {
            err << "verify: " << violations.size() << " violation(s)\n";
            return kExitFailed;
        }
        out << "verify: ok (" << records.size() << " records)\n";
    }
    return kExitOk;
}

struct TrialsOptions {
    std::filesystem::path config;
    int n = 10;
    std::string fix_stage;  // "" or "representatives"
    RunOverrides overrides;
};

// trials: repeat the grid n times (the scripted backend varies entries that
// carry per-trial response arrays) and summarize per-cell score spread.
inline int cmd_trials(const TrialsOptions& opt, std::ostream& out, std::ostream& err) {
    if (opt.n < 1) {
        err << "trials: n must be >= 1\n";
        return kExitUsage;
    }
    if (!opt.fix_stage.empty() && opt.fix_stage != "representatives") {
        err << "trials: unknown --fix-stage '" << opt.fix_stage << "'\n";
        return kExitUsage;
    }
    RunConfig base;
    try {
        base = load_config(opt.config, opt.overrides);
    } catch (const std::exception& e) {
        err << "config error (" << opt.config.string() << "): " << e.what() << "\n";
        return kExitUsage;
    }

    namespace fs = std::filesystem;
    struct CellTrials {
        std::vector<std::string> labels;  // "(failed)" placeholders keep trial order
        std::vector<double> scores;       // ADE-mode confidence score per successful trial
        int failed = 0;
    };
    std::map<std::pair<std::string, std::string>, CellTrials> cells;
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::string, std::vector<std::string>> fixed;
    bool any_failed = false;

    try {
        for (int t = 0; t < opt.n; ++t) {
            RunConfig cfg = base;
            cfg.output_dir =
                (fs::path(base.output_dir) / "trials" / ("trial_" + std::to_string(t))).string();
            Pipeline pipeline(cfg);
            pipeline.set_label_refresh(opt.overrides.refresh);
            const auto* fix =
                (t > 0 && opt.fix_stage == "representatives") ? &fixed : nullptr;
            MatrixResult m = pipeline.run_matrix(t, fix);
            if (t == 0) fixed = m.representatives;
            write_file(fs::path(cfg.output_dir) / "predictions" / "predictions.jsonl",
                       render_predictions(m));
            write_representatives(cfg.output_dir, m.representatives);
            any_failed = any_failed || m.any_failed;
            for (const auto& c : m.cells) {
                auto key = std::make_pair(c.category, c.outcome);
                if (!cells.count(key)) order.push_back(key);
                auto& ct = cells[key];
                if (c.failed) {
                    ct.labels.push_back("(failed)");
                    ++ct.failed;
                } else {
                    ct.labels.push_back(to_string(c.effect->label));
                    ct.scores.push_back(
                        score_for(*c.effect, EvalMode::AdeBased, ScoringKind::Confidence));
                }
            }
        }
    } catch (const std::exception& e) {
        err << "trials failed: " << e.what() << "\n";
        return kExitFailed;
    }

    ojson summary = ojson::array();
    for (const auto& key : order) {
        const auto& ct = cells[key];
        ojson j;
        j["category"] = key.first;
        j["outcome"] = key.second;
        j["trials"] = opt.n;
        j["failed_trials"] = ct.failed;
        j["labels"] = ct.labels;
        j["scores"] = ct.scores;
        if (!ct.scores.empty()) {
            TrialsSummary s = trials_summary(ct.scores);
            j["mean"] = s.mean;
            j["std"] = s.std_defined ? ojson(s.std_dev) : ojson(nullptr);
            j["std_defined"] = s.std_defined;
            j["histogram"] = s.histogram;
            j["bin_lo"] = s.bin_lo;
            j["bin_width"] = s.bin_width;
        } else {
            j["mean"] = nullptr;
            j["std"] = nullptr;
            j["std_defined"] = false;
            j["histogram"] = ojson::array();
        }
        summary.push_back(std::move(j));
        out << key.first << " / " << key.second << ": " << (opt.n - ct.failed) << "/" << opt.n
            << " trials";
        if (!ct.scores.empty()) {
            TrialsSummary s = trials_summary(ct.scores);
            out << ", mean " << s.mean;
            if (s.std_defined)
                out << ", std " << s.std_dev;
            else
                out << ", std undefined (needs >= 2 samples)";
        }
        out << "\n";
    }
    write_file(fs::path(base.output_dir) / "reports" / "trials_summary.json",
               summary.dump(2) + "\n");
    return any_failed ? kExitFailed : kExitOk;
}

}  // namespace malade::cli

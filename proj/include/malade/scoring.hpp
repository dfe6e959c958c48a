#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "malade/effects.hpp"
#include "malade/errors.hpp"
#include "malade/util.hpp"

namespace malade {

// ---------------------------------------------------------------------------
// Score transforms: tripartite (label, confidence/probability) verdicts to
// scalar scores for binary discrimination.
// ---------------------------------------------------------------------------

enum class EvalMode { EffectBased, AdeBased };
enum class ScoringKind { Confidence, Probability, ProbabilityModified };

inline std::string to_string(EvalMode m) {
    return m == EvalMode::EffectBased ? "effect-based" : "ade-based";
}

inline std::string to_string(ScoringKind s) {
    switch (s) {
        case ScoringKind::Confidence: return "confidence";
        case ScoringKind::Probability: return "probability";
        case ScoringKind::ProbabilityModified: return "probability-modified";
    }
    return "confidence";
}

inline std::optional<EvalMode> eval_mode_from_string(const std::string& s) {
    if (s == "effect-based" || s == "effect") return EvalMode::EffectBased;
    if (s == "ade-based" || s == "ade") return EvalMode::AdeBased;
    return std::nullopt;
}

inline std::optional<ScoringKind> scoring_kind_from_string(const std::string& s) {
    if (s == "confidence") return ScoringKind::Confidence;
    if (s == "probability") return ScoringKind::Probability;
    if (s == "probability-modified") return ScoringKind::ProbabilityModified;
    return std::nullopt;
}

// ADE scoring by confidence: decrease (1−c)/3, no-effect (2−c)/3,
// increase (2+c)/3 — ranges [0,1/3], [1/3,2/3], [2/3,1].
inline double ade_score_confidence(Label label, double c) {
    switch (label) {
        case Label::Decrease: return (1.0 - c) / 3.0;
        case Label::NoEffect: return (2.0 - c) / 3.0;
        case Label::Increase: return (2.0 + c) / 3.0;
    }
    return 0.5;
}

// Effect scoring by confidence: non-neutral labels (1+c)/2, no-effect (1−c)/2.
inline double effect_score_confidence(Label label, double c) {
    return label == Label::NoEffect ? (1.0 - c) / 2.0 : (1.0 + c) / 2.0;
}

// ADE scoring by probability: decreasing in p for "decrease", increasing
// otherwise, both branches meeting at 0.5 when p = 0.
inline double ade_score_probability(Label label, double p) {
    return label == Label::Decrease ? (1.0 - p) / 2.0 : (1.0 + p) / 2.0;
}

inline double effect_score_probability(Label /*label*/, double p) { return p; }

// Modified probability scoring: +1 increments separate the mode's positive
// labels from everything else. In ADE mode the "decrease" branch keeps the
// descending direction of the plain probability mapping.
inline double modified_probability_score(Label label, double p, EvalMode mode) {
    if (mode == EvalMode::AdeBased) {
        if (label == Label::Increase) return p + 1.0;
        if (label == Label::Decrease) return ade_score_probability(label, p);
        return p;
    }
    return label == Label::NoEffect ? p : p + 1.0;
}

inline double score_for(const CategoryEffect& e, EvalMode mode, ScoringKind kind) {
    switch (kind) {
        case ScoringKind::Confidence:
            return mode == EvalMode::AdeBased ? ade_score_confidence(e.label, e.confidence)
                                              : effect_score_confidence(e.label, e.confidence);
        case ScoringKind::Probability:
            return mode == EvalMode::AdeBased ? ade_score_probability(e.label, e.probability)
                                              : effect_score_probability(e.label, e.probability);
        case ScoringKind::ProbabilityModified:
            return modified_probability_score(e.label, e.probability, mode);
    }
    return 0.0;
}

// Unreliable predictions are downgraded to no-effect before F1/confusion:
// weak evidence of a rare effect, or a suspiciously round probability.
// Never applied to AUC scores.
inline Label postprocess_label(const CategoryEffect& e) {
    bool weak_rare = e.evidence == Evidence::Weak && e.frequency == Frequency::Rare;
    bool round_number =
        std::fabs(e.probability - 0.1) <= 1e-12 || std::fabs(e.probability - 0.01) <= 1e-12;
    if (weak_rare || round_number) return Label::NoEffect;
    return e.label;
}

// Positive class: {increase, decrease} in effect-based mode, {increase} only
// in ADE-based mode.
inline bool binarize(Label label, EvalMode mode) {
    if (mode == EvalMode::EffectBased) return label != Label::NoEffect;
    return label == Label::Increase;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Mann-Whitney AUC via average ranks; ties count half. Equivalent to the
// trapezoidal area under the threshold-swept ROC curve.
inline double auc(const std::vector<std::pair<double, bool>>& scored) {
    long n_pos = 0, n_neg = 0;
    for (const auto& [s, label] : scored) (label ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw DegenerateClasses("auc needs at least one positive and one negative");

    std::vector<size_t> order(scored.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scored[a].first < scored[b].first; });

    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scored[order[j]].first == scored[order[i]].first) ++j;
        // Average rank for the tie group spanning 1-based ranks [i+1, j].
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k)
            if (scored[order[k]].second) pos_rank_sum += avg_rank;
        i = j;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// ROC points from a threshold sweep over distinct scores, descending;
// endpoints (0,0) and (1,1) included.
inline std::vector<std::pair<double, double>> roc_points(
    const std::vector<std::pair<double, bool>>& scored) {
    long n_pos = 0, n_neg = 0;
    for (const auto& [s, label] : scored) (label ? n_pos : n_neg)++;
    std::vector<size_t> order(scored.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scored[a].first > scored[b].first; });
    std::vector<std::pair<double, double>> pts;
    pts.push_back({0.0, 0.0});
    long tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scored[order[j]].first == scored[order[i]].first) ++j;
        for (size_t k = i; k < j; ++k) (scored[order[k]].second ? tp : fp)++;
        pts.push_back({n_neg ? static_cast<double>(fp) / static_cast<double>(n_neg) : 0.0,
                       n_pos ? static_cast<double>(tp) / static_cast<double>(n_pos) : 0.0});
        i = j;
    }
    return pts;
}

struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

inline double f1_from_confusion(const Confusion& c) {
    double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) +
                   static_cast<double>(c.fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / denom;
}

// ---------------------------------------------------------------------------
// Ground truth and predictions
// ---------------------------------------------------------------------------

struct TruthCell {
    Label label = Label::NoEffect;
    bool certain = true;  // uncertain cells are excluded from every metric
};

struct GroundTruthGrid {
    std::vector<std::string> categories;
    std::vector<std::string> outcomes;
    std::map<std::pair<std::string, std::string>, TruthCell> cells;  // normalized keys

    const TruthCell* cell(const std::string& category, const std::string& outcome) const {
        auto it = cells.find({normalize_name(category), normalize_name(outcome)});
        return it == cells.end() ? nullptr : &it->second;
    }

    size_t certain_count() const {
        size_t n = 0;
        for (const auto& [key, c] : cells) n += c.certain ? 1 : 0;
        return n;
    }

    // Delimited grid: header row names the outcomes, first column names the
    // category, cell tokens in {increase, decrease, no-effect, uncertain}.
    static GroundTruthGrid load(const std::filesystem::path& path) {
        auto rows = parse_delimited(read_file(path));
        if (rows.size() < 2 || rows[0].size() < 2)
            throw ValidationError("ground truth grid needs a header row and at least one category row");
        GroundTruthGrid g;
        for (size_t j = 1; j < rows[0].size(); ++j) g.outcomes.push_back(trim(rows[0][j]));
        for (size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() != rows[0].size())
                throw ValidationError("ground truth row " + std::to_string(i + 1) +
                                      " has wrong cell count");
            std::string category = trim(rows[i][0]);
            g.categories.push_back(category);
            for (size_t j = 1; j < rows[i].size(); ++j) {
                std::string token = trim(rows[i][j]);
                TruthCell c;
                if (token == "uncertain") {
                    c.certain = false;
                    c.label = Label::NoEffect;
                } else if (auto l = label_from_string(token)) {
                    c.label = *l;
                } else {
                    throw ValidationError("unknown ground truth token `" + token + "` at (" +
                                          category + ", " + g.outcomes[j - 1] + ")");
                }
                g.cells[{normalize_name(category), normalize_name(g.outcomes[j - 1])}] = c;
            }
        }
        return g;
    }
};

struct PredictionRecord {
    std::string category;
    std::string outcome;
    CategoryEffect effect;
    std::string transcript_path;
    bool failed = false;
    std::string error;

    ojson to_json() const {
        ojson j;
        j["category"] = category;
        j["outcome"] = outcome;
        j["failed"] = failed;
        if (failed) {
            j["error"] = error;
        } else {
            for (auto& [k, v] : effect.to_json().items()) j[k] = v;
        }
        j["transcript"] = transcript_path;
        return j;
    }

    static PredictionRecord from_json(const json& j) {
        PredictionRecord r;
        r.category = j.at("category").get<std::string>();
        r.outcome = j.at("outcome").get<std::string>();
        r.failed = j.value("failed", false);
        if (r.failed)
            r.error = j.value("error", "");
        else
            r.effect = effect_from_json(j);
        r.transcript_path = j.value("transcript", "");
        return r;
    }
};

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    std::vector<PredictionRecord> out;
    size_t lineno = 0;
    for (const auto& line : split(read_file(path), '\n')) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(PredictionRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ValidationError("bad prediction record at line " + std::to_string(lineno) +
                                  ": " + e.what());
        }
    }
    return out;
}

struct EvalReport {
    EvalMode mode = EvalMode::EffectBased;
    ScoringKind scoring = ScoringKind::Confidence;
    double auc = 0.0;
    double f1 = 0.0;
    Confusion confusion;
    std::vector<std::pair<double, double>> roc;        // (fpr, tpr)
    std::vector<std::pair<double, double>> sens_spec;  // (sensitivity, specificity)

    ojson to_json() const {
        ojson j;
        j["mode"] = malade::to_string(mode);
        j["scoring"] = malade::to_string(scoring);
        j["auc"] = auc;
        j["f1"] = f1;
        j["confusion"] = {{"tp", confusion.tp},
                          {"fp", confusion.fp},
                          {"tn", confusion.tn},
                          {"fn", confusion.fn}};
        auto points = [](const std::vector<std::pair<double, double>>& pts) {
            ojson arr = ojson::array();
            for (const auto& [a, b] : pts) arr.push_back(ojson::array({a, b}));
            return arr;
        };
        j["roc_points"] = points(roc);
        j["sens_spec_points"] = points(sens_spec);
        return j;
    }
};

// AUC from raw scores, F1/confusion from postprocessed labels; uncertain
// truth cells dropped; failed or absent prediction cells are an error.
inline EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                           const GroundTruthGrid& truth, EvalMode mode, ScoringKind scoring) {
    std::map<std::pair<std::string, std::string>, const PredictionRecord*> by_cell;
    for (const auto& p : predictions)
        by_cell[{normalize_name(p.category), normalize_name(p.outcome)}] = &p;

    std::vector<std::string> missing;
    std::vector<std::pair<double, bool>> scored;
    Confusion conf;
    for (const auto& [key, cell] : truth.cells) {
        if (!cell.certain) continue;
        auto it = by_cell.find(key);
        if (it == by_cell.end() || it->second->failed) {
            missing.push_back("(" + key.first + ", " + key.second + ")");
            continue;
        }
        const PredictionRecord& p = *it->second;
        bool truth_pos = binarize(cell.label, mode);
        scored.push_back({score_for(p.effect, mode, scoring), truth_pos});
        bool pred_pos = binarize(postprocess_label(p.effect), mode);
        if (pred_pos && truth_pos)
            ++conf.tp;
        else if (pred_pos && !truth_pos)
            ++conf.fp;
        else if (!pred_pos && truth_pos)
            ++conf.fn;
        else
            ++conf.tn;
    }
    if (!missing.empty())
        throw MissingCells("predictions missing for cells: " + join(missing, ", "));

    EvalReport rep;
    rep.mode = mode;
    rep.scoring = scoring;
    rep.auc = auc(scored);
    rep.confusion = conf;
    rep.f1 = f1_from_confusion(conf);
    rep.roc = roc_points(scored);
    for (const auto& [fpr, tpr] : rep.roc) rep.sens_spec.push_back({tpr, 1.0 - fpr});
    return rep;
}

// ---------------------------------------------------------------------------
// Trial variance
// ---------------------------------------------------------------------------

struct TrialsSummary {
    double mean = 0.0;
    double std_dev = 0.0;
    bool std_defined = false;  // requires >= 2 samples
    std::vector<long> histogram;
    double bin_lo = 0.0;
    double bin_width = 0.0;
};

inline TrialsSummary trials_summary(const std::vector<double>& samples, int bins = 10,
                                    double lo = 0.0, double hi = 1.0) {
    if (samples.empty()) throw ValidationError("trials_summary needs at least one sample");
    TrialsSummary s;
    for (double x : samples) s.mean += x;
    s.mean /= static_cast<double>(samples.size());
    if (samples.size() >= 2) {
        // A constant list has exactly zero deviation; skip the arithmetic so
        // rounding in the mean cannot fabricate residuals.
        bool constant = std::all_of(samples.begin(), samples.end(),
                                    [&](double x) { return x == samples.front(); });
        double var = 0.0;
        if (!constant) {
            for (double x : samples) var += (x - s.mean) * (x - s.mean);
            var /= static_cast<double>(samples.size() - 1);
        }
        s.std_dev = std::sqrt(var);
        s.std_defined = true;
    }
    s.bin_lo = lo;
    s.bin_width = (hi - lo) / static_cast<double>(bins);
    s.histogram.assign(static_cast<size_t>(bins), 0);
    for (double x : samples) {
        int b = static_cast<int>(std::floor((x - lo) / s.bin_width));
        b = std::clamp(b, 0, bins - 1);
        s.histogram[static_cast<size_t>(b)]++;
    }
    return s;
}

}  // namespace malade

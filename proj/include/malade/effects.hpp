#pragma once

#include <optional>
#include <string>

#include "malade/errors.hpp"
#include "malade/messaging.hpp"

namespace malade {

// ---------------------------------------------------------------------------
// Category-effect record: the structured verdict for one (category, outcome)
// cell — label plus calibration and reliability annotations.
// ---------------------------------------------------------------------------

enum class Label { Increase, Decrease, NoEffect };
enum class Frequency { None, Rare, Common };
enum class Evidence { None, Weak, Strong };

inline std::string to_string(Label l) {
    switch (l) {
        case Label::Increase: return "increase";
        case Label::Decrease: return "decrease";
        case Label::NoEffect: return "no-effect";
    }
    return "no-effect";
}

inline std::string to_string(Frequency f) {
    switch (f) {
        case Frequency::None: return "none";
        case Frequency::Rare: return "rare";
        case Frequency::Common: return "common";
    }
    return "none";
}

inline std::string to_string(Evidence e) {
    switch (e) {
        case Evidence::None: return "none";
        case Evidence::Weak: return "weak";
        case Evidence::Strong: return "strong";
    }
    return "none";
}

inline std::optional<Label> label_from_string(const std::string& s) {
    if (s == "increase") return Label::Increase;
    if (s == "decrease") return Label::Decrease;
    if (s == "no-effect") return Label::NoEffect;
    return std::nullopt;
}

inline std::optional<Frequency> frequency_from_string(const std::string& s) {
    if (s == "none") return Frequency::None;
    if (s == "rare") return Frequency::Rare;
    if (s == "common") return Frequency::Common;
    return std::nullopt;
}

inline std::optional<Evidence> evidence_from_string(const std::string& s) {
    if (s == "none") return Evidence::None;
    if (s == "weak") return Evidence::Weak;
    if (s == "strong") return Evidence::Strong;
    return std::nullopt;
}

struct CategoryEffect {
    Label label = Label::NoEffect;
    double confidence = 0.0;
    double probability = 0.0;
    Frequency frequency = Frequency::None;
    Evidence evidence = Evidence::None;
    std::string justification;

    ojson to_json() const {
        ojson j;
        j["label"] = to_string(label);
        j["confidence"] = confidence;
        j["probability"] = probability;
        j["frequency"] = to_string(frequency);
        j["evidence"] = to_string(evidence);
        j["justification"] = justification;
        return j;
    }
};

// Validates raw tool-call fields; returns a human-readable complaint on the
// first violation so the caller can send one corrective message.
inline std::optional<std::string> validate_effect_fields(const json& args) {
    static const char* required[] = {"label", "confidence", "probability", "frequency",
                                     "evidence"};
    for (const char* k : required)
        if (!args.contains(k)) return std::string("missing required field `") + k + "`";
    if (!args["label"].is_string() || !label_from_string(args["label"].get<std::string>()))
        return "field `label` must be one of increase, decrease, no-effect";
    if (!args["confidence"].is_number())
        return "field `confidence` must be a number in [0,1]";
    double c = args["confidence"].get<double>();
    if (c < 0.0 || c > 1.0) return "field `confidence` must be a number in [0,1]";
    if (!args["probability"].is_number())
        return "field `probability` must be a number in [0,1]";
    double p = args["probability"].get<double>();
    if (p < 0.0 || p > 1.0) return "field `probability` must be a number in [0,1]";
    if (!args["frequency"].is_string() ||
        !frequency_from_string(args["frequency"].get<std::string>()))
        return "field `frequency` must be one of none, rare, common";
    if (!args["evidence"].is_string() ||
        !evidence_from_string(args["evidence"].get<std::string>()))
        return "field `evidence` must be one of none, weak, strong";
    return std::nullopt;
}

inline CategoryEffect effect_from_json(const json& args) {
    if (auto err = validate_effect_fields(args)) throw ValidationError(*err);
    CategoryEffect e;
    e.label = *label_from_string(args["label"].get<std::string>());
    e.confidence = args["confidence"].get<double>();
    e.probability = args["probability"].get<double>();
    e.frequency = *frequency_from_string(args["frequency"].get<std::string>());
    e.evidence = *evidence_from_string(args["evidence"].get<std::string>());
    if (args.contains("justification") && args["justification"].is_string())
        e.justification = args["justification"].get<std::string>();
    return e;
}

}  // namespace malade

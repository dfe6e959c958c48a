#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "malade/errors.hpp"
#include "malade/messaging.hpp"
#include "malade/util.hpp"

namespace malade {

// Run configuration: one JSON file declaring the grid, the providers, and the
// caps. Relative paths resolve against the config file's directory, so a run
// is reproducible from any working directory.

struct SubcategoryConfig {
    std::string name;
    std::vector<std::string> search_terms;  // defaults to {name}
};

struct CategoryConfig {
    std::string name;
    std::vector<std::string> search_terms;        // used when there are no subcategories
    std::vector<SubcategoryConfig> subcategories;  // broad categories split into members
};

struct BackendConfig {
    std::string kind = "scripted";  // "scripted" | "live"
    std::string script;             // scripted: playback script path
    std::string model = "gpt-4o";   // live: chat-completions model
    std::string base_url;           // live: endpoint override (else $OPENAI_BASE_URL)
    std::optional<uint64_t> seed;
    double temperature = 0.2;
};

struct DataConfig {
    std::string mode = "fixture";  // "fixture" | "live"
    std::string ndc;               // fixture: drug-directory snapshot
    std::string labels;            // fixture: label-document directory
    std::string prescriptions;     // both modes: local prescriptions table
    std::string base_url = "https://api.fda.gov";  // live: label/directory endpoint
    std::string cache_dir = "label_cache";         // live: on-disk label cache
};

struct AblationConfig {
    bool critics = true;  // false: first answers accepted, critics never consulted
    bool rag = true;      // false: FDAHandler answers from the bare LLM, no retrieval
};

struct CapsConfig {
    int max_steps = 64;
    int max_critic_rounds = 5;
    int parallelism = 4;
};

struct RunConfig {
    BackendConfig backend;
    DataConfig data;
    std::vector<CategoryConfig> categories;
    std::vector<std::string> outcomes;
    int representatives_n = 3;
    int retrieval_k = 4;
    AblationConfig ablation;
    CapsConfig caps;
    std::string output_dir = "out";

    bool scripted() const { return backend.kind == "scripted"; }
    bool fixture_data() const { return data.mode == "fixture"; }

    void validate() const;

    static RunConfig from_json(const json& doc, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);
};

namespace detail {

inline std::string cfg_string(const json& obj, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) throw ConfigError(std::string("config field `") + key + "` must be a string");
    return obj[key].get<std::string>();
}

inline int cfg_int(const json& obj, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer())
        throw ConfigError(std::string("config field `") + key + "` must be an integer");
    return obj[key].get<int>();
}

inline bool cfg_bool(const json& obj, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean())
        throw ConfigError(std::string("config field `") + key + "` must be a boolean");
    return obj[key].get<bool>();
}

inline std::vector<std::string> cfg_string_list(const json& obj, const char* key) {
    std::vector<std::string> out;
    if (!obj.contains(key)) return out;
    if (!obj[key].is_array())
        throw ConfigError(std::string("config field `") + key + "` must be a list of strings");
    for (const auto& v : obj[key]) {
        if (!v.is_string())
            throw ConfigError(std::string("config field `") + key + "` must be a list of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.lexically_normal().string();
    return (base / fp).lexically_normal().string();
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
    using namespace detail;
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    RunConfig cfg;

    if (doc.contains("backend")) {
        const auto& b = doc["backend"];
        if (!b.is_object()) throw ConfigError("config field `backend` must be an object");
        cfg.backend.kind = cfg_string(b, "kind", cfg.backend.kind);
        cfg.backend.script = resolve_path(cfg_string(b, "script", ""), base_dir);
        cfg.backend.model = cfg_string(b, "model", cfg.backend.model);
        cfg.backend.base_url = cfg_string(b, "base_url", "");
        if (b.contains("seed")) {
            if (!b["seed"].is_number_unsigned() && !b["seed"].is_number_integer())
                throw ConfigError("config field `seed` must be an integer");
            cfg.backend.seed = b["seed"].get<uint64_t>();
        }
        if (b.contains("temperature")) {
            if (!b["temperature"].is_number())
                throw ConfigError("config field `temperature` must be a number");
            cfg.backend.temperature = b["temperature"].get<double>();
        }
    }

    if (doc.contains("data")) {
        const auto& d = doc["data"];
        if (!d.is_object()) throw ConfigError("config field `data` must be an object");
        cfg.data.mode = cfg_string(d, "mode", cfg.data.mode);
        cfg.data.ndc = resolve_path(cfg_string(d, "ndc", ""), base_dir);
        cfg.data.labels = resolve_path(cfg_string(d, "labels", ""), base_dir);
        cfg.data.prescriptions = resolve_path(cfg_string(d, "prescriptions", ""), base_dir);
        cfg.data.base_url = cfg_string(d, "base_url", cfg.data.base_url);
        cfg.data.cache_dir = resolve_path(cfg_string(d, "cache_dir", cfg.data.cache_dir), base_dir);
    }

    if (doc.contains("categories")) {
        if (!doc["categories"].is_array())
            throw ConfigError("config field `categories` must be a list");
        for (const auto& c : doc["categories"]) {
            if (!c.is_object()) throw ConfigError("each category must be an object");
            CategoryConfig cat;
            cat.name = cfg_string(c, "name", "");
            cat.search_terms = cfg_string_list(c, "search_terms");
            if (c.contains("subcategories")) {
                if (!c["subcategories"].is_array())
                    throw ConfigError("config field `subcategories` must be a list");
                for (const auto& s : c["subcategories"]) {
                    if (!s.is_object()) throw ConfigError("each subcategory must be an object");
                    SubcategoryConfig sub;
                    sub.name = cfg_string(s, "name", "");
                    sub.search_terms = cfg_string_list(s, "search_terms");
                    if (sub.search_terms.empty() && !sub.name.empty())
                        sub.search_terms = {sub.name};
                    cat.subcategories.push_back(std::move(sub));
                }
            }
            if (cat.search_terms.empty() && cat.subcategories.empty() && !cat.name.empty())
                cat.search_terms = {cat.name};
            cfg.categories.push_back(std::move(cat));
        }
    }

    cfg.outcomes = cfg_string_list(doc, "outcomes");
    cfg.representatives_n = cfg_int(doc, "representatives_n", cfg.representatives_n);
    cfg.retrieval_k = cfg_int(doc, "retrieval_k", cfg.retrieval_k);

    if (doc.contains("ablation")) {
        const auto& a = doc["ablation"];
        if (!a.is_object()) throw ConfigError("config field `ablation` must be an object");
        cfg.ablation.critics = cfg_bool(a, "critics", cfg.ablation.critics);
        cfg.ablation.rag = cfg_bool(a, "rag", cfg.ablation.rag);
    }
    if (doc.contains("caps")) {
        const auto& c = doc["caps"];
        if (!c.is_object()) throw ConfigError("config field `caps` must be an object");
        cfg.caps.max_steps = cfg_int(c, "max_steps", cfg.caps.max_steps);
        cfg.caps.max_critic_rounds = cfg_int(c, "max_critic_rounds", cfg.caps.max_critic_rounds);
        cfg.caps.parallelism = cfg_int(c, "parallelism", cfg.caps.parallelism);
    }
    cfg.output_dir = resolve_path(cfg_string(doc, "output_dir", cfg.output_dir), base_dir);

    cfg.validate();
    return cfg;
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return from_json(doc, path.has_parent_path() ? path.parent_path() : ".");
}

inline void RunConfig::validate() const {
    if (backend.kind != "scripted" && backend.kind != "live")
        throw ConfigError("backend.kind must be \"scripted\" or \"live\", got \"" + backend.kind + "\"");
    if (backend.kind == "scripted" && backend.script.empty())
        throw ConfigError("backend.kind \"scripted\" requires backend.script");
    if (data.mode != "fixture" && data.mode != "live")
        throw ConfigError("data.mode must be \"fixture\" or \"live\", got \"" + data.mode + "\"");
    if (data.mode == "fixture") {
        if (data.ndc.empty()) throw ConfigError("data.mode \"fixture\" requires data.ndc");
        if (data.labels.empty()) throw ConfigError("data.mode \"fixture\" requires data.labels");
    }
    if (data.prescriptions.empty()) throw ConfigError("data.prescriptions is required");
    if (categories.empty()) throw ConfigError("at least one category is required");
    for (const auto& c : categories) {
        if (trim(c.name).empty()) throw ConfigError("every category needs a non-empty name");
        if (c.subcategories.empty() && c.search_terms.empty())
            throw ConfigError("category \"" + c.name + "\" needs search_terms or subcategories");
        for (const auto& s : c.subcategories)
            if (trim(s.name).empty())
                throw ConfigError("category \"" + c.name + "\" has a subcategory without a name");
    }
    if (outcomes.empty()) throw ConfigError("at least one outcome is required");
    for (const auto& o : outcomes)
        if (trim(o).empty()) throw ConfigError("outcomes must be non-empty strings");
    if (representatives_n < 1) throw ConfigError("representatives_n must be >= 1");
    if (retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
    if (caps.max_steps < 1) throw ConfigError("caps.max_steps must be >= 1");
    if (caps.max_critic_rounds < 1) throw ConfigError("caps.max_critic_rounds must be >= 1");
    if (caps.parallelism < 1) throw ConfigError("caps.parallelism must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
}

}  // namespace malade

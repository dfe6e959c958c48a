#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "malade/errors.hpp"
#include "malade/http_util.hpp"
#include "malade/messaging.hpp"
#include "malade/util.hpp"

namespace malade {

// ---------------------------------------------------------------------------
// NDC directory search
// ---------------------------------------------------------------------------

struct NdcDrugRecord {
    std::string name;
    std::vector<std::string> pharm_classes;
    std::vector<std::string> product_ids;
};

namespace detail {

inline void append_unique(std::vector<std::string>& v, const std::string& s) {
    for (const auto& x : v)
        if (x == s) return;
    v.push_back(s);
}

// Parses an NDC-directory result array, deduplicating by normalized drug
// name (generic name preferred) and merging class tags and product ids.
inline std::vector<NdcDrugRecord> parse_ndc_results(const json& results) {
    std::vector<NdcDrugRecord> records;
    std::unordered_map<std::string, size_t> index;
    for (const auto& r : results) {
        std::string name = trim(r.value("generic_name", ""));
        if (name.empty()) name = trim(r.value("brand_name", ""));
        if (name.empty()) continue;
        std::string key = normalize_name(name);
        auto it = index.find(key);
        if (it == index.end()) {
            index[key] = records.size();
            records.push_back({name, {}, {}});
            it = index.find(key);
        }
        NdcDrugRecord& rec = records[it->second];
        if (r.contains("pharm_class") && r["pharm_class"].is_array())
            for (const auto& pc : r["pharm_class"])
                if (pc.is_string()) append_unique(rec.pharm_classes, pc.get<std::string>());
        if (r.contains("product_ndc") && r["product_ndc"].is_string())
            append_unique(rec.product_ids, r["product_ndc"].get<std::string>());
    }
    return records;
}

inline std::vector<std::string> clean_terms(const std::vector<std::string>& terms) {
    std::vector<std::string> cleaned;
    for (const auto& t : terms)
        if (!trim(t).empty()) cleaned.push_back(trim(t));
    if (cleaned.empty())
        throw ValidationError("category search requires at least one non-empty term");
    return cleaned;
}

}  // namespace detail

// File-backed snapshot of the NDC directory. Matching is direct substring
// search over names and class tags — no LLM involvement.
class NdcCatalog {
   public:
    static NdcCatalog load(const std::filesystem::path& path) {
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw ConfigError("bad NDC fixture " + path.string() + ": " + e.what());
        }
        if (!doc.contains("results") || !doc["results"].is_array())
            throw ConfigError("NDC fixture " + path.string() + " lacks a `results` array");
        NdcCatalog c;
        c.records_ = detail::parse_ndc_results(doc["results"]);
        return c;
    }

    // Union over terms of records whose name or any class tag contains the
    // term (case-insensitive); output preserves catalog order, so results
    // are invariant under term reordering and duplicates.
    std::vector<NdcDrugRecord> find_category_drugs(const std::vector<std::string>& terms) const {
        auto cleaned = detail::clean_terms(terms);
        std::vector<NdcDrugRecord> out;
        for (const auto& rec : records_) {
            bool hit = false;
            for (const auto& term : cleaned) {
                if (contains_ci(rec.name, term)) hit = true;
                for (const auto& pc : rec.pharm_classes)
                    if (contains_ci(pc, term)) hit = true;
                if (hit) break;
            }
            if (hit) out.push_back(rec);
        }
        return out;
    }

    size_t size() const { return records_.size(); }

   private:
    std::vector<NdcDrugRecord> records_;
};

// Live NDC-directory client (same record shape as the fixture catalog).
class HttpNdcCatalog {
   public:
    explicit HttpNdcCatalog(std::string base_url) : base_url_(std::move(base_url)) {}

    std::vector<NdcDrugRecord> find_category_drugs(const std::vector<std::string>& terms) const {
        auto cleaned = detail::clean_terms(terms);
        json merged = json::array();
        httplib::Client client(base_url_);
        client.set_read_timeout(30, 0);
        for (const auto& term : cleaned) {
            std::string quoted = url_encode("\"" + term + "\"");
            std::string query = "search=(generic_name:" + quoted + "+brand_name:" + quoted +
                                "+pharm_class:" + quoted + ")&limit=1000";
            auto res = http_with_retry(
                [&]() { return client.Get("/drug/ndc.json?" + query); });
            if (!res)
                throw UpstreamError("NDC directory unreachable: " +
                                    httplib::to_string(res.error()));
            if (res->status == 404) continue;  // no matches for this term
            if (res->status != 200)
                throw UpstreamError("NDC directory returned status " +
                                    std::to_string(res->status));
            auto doc = json::parse(res->body, nullptr, false);
            if (doc.is_discarded() || !doc.contains("results")) continue;
            for (const auto& r : doc["results"]) merged.push_back(r);
        }
        return detail::parse_ndc_results(merged);
    }

   private:
    std::string base_url_;
};

// ---------------------------------------------------------------------------
// Prescription rates
// ---------------------------------------------------------------------------

struct PrescriptionRate {
    std::string name;
    long count = 0;
    double rate = 0.0;
};

// Flat-file stand-in for a hospital prescriptions table: one row per
// prescription event, with a `drug` column.
class RateProvider {
   public:
    static RateProvider load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path))
            throw DatasetMissing("prescriptions dataset not found: " + path.string());
        auto rows = parse_delimited(read_file(path));
        if (rows.empty()) throw DatasetMissing("prescriptions dataset is empty: " + path.string());
        int drug_col = -1;
        for (size_t j = 0; j < rows[0].size(); ++j)
            if (to_lower(trim(rows[0][j])) == "drug") drug_col = static_cast<int>(j);
        if (drug_col < 0)
            throw DatasetMissing("prescriptions dataset lacks a `drug` column: " + path.string());
        RateProvider p;
        for (size_t i = 1; i < rows.size(); ++i) {
            if (static_cast<size_t>(drug_col) >= rows[i].size()) continue;
            p.counts_[normalize_name(rows[i][static_cast<size_t>(drug_col)])]++;
            p.total_++;
        }
        return p;
    }

    std::vector<PrescriptionRate> prescription_rates(const std::vector<std::string>& names) const {
        std::vector<PrescriptionRate> out;
        for (const auto& name : names) {
            PrescriptionRate r;
            r.name = name;
            auto it = counts_.find(normalize_name(name));
            if (it != counts_.end()) r.count = it->second;
            r.rate = total_ > 0 ? static_cast<double>(r.count) / static_cast<double>(total_) : 0.0;
            out.push_back(r);
        }
        return out;
    }

    long total_rows() const { return total_; }

   private:
    std::unordered_map<std::string, long> counts_;
    long total_ = 0;
};

// ---------------------------------------------------------------------------
// Drug labels
// ---------------------------------------------------------------------------

struct DrugLabel {
    std::string drug;
    std::map<std::string, std::string> sections;
    std::string source_id;
    std::string fetched_at;
};

namespace detail {

inline DrugLabel label_from_document(const json& doc) {
    DrugLabel label;
    label.drug = doc.value("drug", "");
    label.source_id = doc.value("source_id", "");
    label.fetched_at = doc.value("fetched_at", "");
    if (doc.contains("sections") && doc["sections"].is_object())
        for (const auto& [k, v] : doc["sections"].items())
            if (v.is_string()) label.sections[k] = v.get<std::string>();
    return label;
}

}  // namespace detail

class LabelClient {
   public:
    virtual ~LabelClient() = default;
    virtual DrugLabel fetch_label(const std::string& drug) = 0;
};

// Reads label documents from a local directory: <dir>/<slug>.json with
// {drug, source_id, sections}.
class FixtureLabelClient : public LabelClient {
   public:
    explicit FixtureLabelClient(std::filesystem::path dir) : dir_(std::move(dir)) {}

    DrugLabel fetch_label(const std::string& drug) override {
        auto path = dir_ / (slugify(normalize_name(drug)) + ".json");
        if (!std::filesystem::exists(path))
            throw NotFound("no label document for drug '" + drug + "' (" + path.string() + ")");
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw ConfigError("bad label fixture " + path.string() + ": " + e.what());
        }
        auto label = detail::label_from_document(doc);
        if (label.sections.empty())
            throw NotFound("label document for '" + drug + "' has no sections");
        return label;
    }

   private:
    std::filesystem::path dir_;
};

// Live drug-label client with an on-disk cache keyed by normalized name.
// Labels are snapshots, so cached entries never expire; `set_refresh(true)`
// forces refetching.
class HttpLabelClient : public LabelClient {
   public:
    HttpLabelClient(std::string base_url, std::filesystem::path cache_dir,
                    std::function<void(const std::string&)> logger = nullptr)
        : base_url_(std::move(base_url)), cache_dir_(std::move(cache_dir)), logger_(std::move(logger)) {
        std::filesystem::create_directories(cache_dir_);
    }

    void set_refresh(bool refresh) { refresh_ = refresh; }

    DrugLabel fetch_label(const std::string& drug) override {
        auto cache_path = cache_dir_ / (slugify(normalize_name(drug)) + ".json");
        if (!refresh_ && std::filesystem::exists(cache_path)) {
            auto doc = json::parse(read_file(cache_path), nullptr, false);
            if (!doc.is_discarded()) {
                auto label = detail::label_from_document(doc);
                if (!label.sections.empty()) return label;
            }
        }

        httplib::Client client(base_url_);
        client.set_read_timeout(30, 0);
        std::string quoted = url_encode("\"" + trim(drug) + "\"");
        std::string query = "search=(openfda.generic_name:" + quoted +
                            "+openfda.brand_name:" + quoted + ")&limit=10";
        auto res = http_with_retry([&]() { return client.Get("/drug/label.json?" + query); });
        if (!res)
            throw UpstreamError("label endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status == 404) throw NotFound("no label document for drug '" + drug + "'");
        if (res->status != 200)
            throw UpstreamError("label endpoint returned status " + std::to_string(res->status));
        auto body = json::parse(res->body, nullptr, false);
        if (body.is_discarded() || !body.contains("results") || body["results"].empty())
            throw NotFound("no label document for drug '" + drug + "'");

        // Several products can share a name; take the most recent document
        // and note the ambiguity.
        const json* best = nullptr;
        for (const auto& r : body["results"]) {
            if (!best || r.value("effective_time", "") > best->value("effective_time", ""))
                best = &r;
        }
        if (body["results"].size() > 1 && logger_)
            logger_("label lookup for '" + drug + "' matched " +
                    std::to_string(body["results"].size()) + " documents; picked " +
                    best->value("id", "?"));

        DrugLabel label;
        label.drug = trim(drug);
        label.source_id = best->value("id", "");
        label.fetched_at = iso8601_now();
        for (const auto& [key, value] : best->items()) {
            if (!value.is_array() || key == "openfda") continue;
            std::string joined;
            bool all_strings = true;
            for (const auto& piece : value) {
                if (!piece.is_string()) {
                    all_strings = false;
                    break;
                }
                if (!joined.empty()) joined += ' ';
                joined += piece.get<std::string>();
            }
            if (all_strings && !joined.empty()) label.sections[key] = joined;
        }
        if (label.sections.empty())
            throw NotFound("label document for '" + drug + "' has no usable sections");

        ojson cached;
        cached["drug"] = label.drug;
        cached["source_id"] = label.source_id;
        cached["fetched_at"] = label.fetched_at;
        ojson sections;
        for (const auto& [k, v] : label.sections) sections[k] = v;
        cached["sections"] = std::move(sections);
        write_file(cache_path, cached.dump(2));
        return label;
    }

   private:
    std::string base_url_;
    std::filesystem::path cache_dir_;
    std::function<void(const std::string&)> logger_;
    bool refresh_ = false;
};

}  // namespace malade

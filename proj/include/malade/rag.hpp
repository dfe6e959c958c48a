#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "malade/embedder.hpp"
#include "malade/errors.hpp"
#include "malade/messaging.hpp"
#include "malade/util.hpp"

namespace malade {

struct Chunk {
    std::string id;
    std::string drug;     // display tag, e.g. LISINOPRIL
    std::string section;  // label-field name, e.g. warnings_and_cautions
    std::string text;
    std::vector<float> embedding;
    long ordinal = 0;  // ingestion sequence number
};

struct RetrievalQuery {
    std::string text;
    int k = 4;
    std::vector<std::string> filter_drugs;
};

// Splits one label section into retrieval-sized chunks: pass-through when it
// fits the budget, else sliding windows with fixed overlap, cut at a sentence
// boundary in the window's second half when one exists.
inline std::vector<std::string> chunk_section(const std::string& text, size_t budget = 1200,
                                              size_t overlap = 180) {
    if (text.size() <= budget) return {text};
    std::vector<std::string> chunks;
    size_t start = 0;
    while (true) {
        size_t end = std::min(start + budget, text.size());
        if (end < text.size()) {
            // Look for the last sentence end in (start + budget/2, end).
            size_t floor = start + budget / 2;
            for (size_t i = end; i-- > floor;) {
                char c = text[i];
                bool sentence_end = (c == '.' || c == '!' || c == '?') &&
                                    (i + 1 >= text.size() ||
                                     std::isspace(static_cast<unsigned char>(text[i + 1])));
                if (sentence_end) {
                    end = i + 1;
                    break;
                }
            }
        }
        chunks.push_back(text.substr(start, end - start));
        if (end >= text.size()) break;
        start = end - overlap;
    }
    return chunks;
}

namespace detail {

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0, na = 0, nb = 0;
    size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// 1-based competition ranks: score descending, ties by ordinal ascending.
inline std::vector<long> ranks_of(const std::vector<double>& scores,
                                  const std::vector<long>& ordinals) {
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ordinals[a] < ordinals[b];
    });
    std::vector<long> rank(scores.size());
    for (size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = static_cast<long>(pos) + 1;
    return rank;
}

// Candidate indices ordered by reciprocal-rank-fused score (descending);
// fused-score ties broken by ordinal ascending. Also returns fused scores.
inline std::pair<std::vector<size_t>, std::vector<double>> fused_order(
    const std::vector<double>& sem, const std::vector<double>& lex,
    const std::vector<long>& ordinals, double rrf_constant) {
    auto rs = ranks_of(sem, ordinals);
    auto rl = ranks_of(lex, ordinals);
    std::vector<double> fused(sem.size());
    for (size_t i = 0; i < fused.size(); ++i)
        fused[i] = 1.0 / (rrf_constant + static_cast<double>(rs[i])) +
                   1.0 / (rrf_constant + static_cast<double>(rl[i]));
    std::vector<size_t> order(fused.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (fused[a] != fused[b]) return fused[a] > fused[b];
        return ordinals[a] < ordinals[b];
    });
    return {order, fused};
}

}  // namespace detail

// In-memory document store with hybrid retrieval: cosine similarity over
// embeddings fused with BM25 keyword relevance by reciprocal-rank fusion.
// Retrieval is an exact scan — store sizes here are thousands of chunks.
class RagStore {
   public:
    static constexpr int kIndexVersion = 1;
    static constexpr double kBm25K1 = 1.2;
    static constexpr double kBm25B = 0.75;
    static constexpr double kRrfConstant = 60.0;

    explicit RagStore(std::shared_ptr<Embedder> embedder) : embedder_(std::move(embedder)) {}

    RagStore(RagStore&& other) noexcept
        : embedder_(std::move(other.embedder_)),
          chunks_(std::move(other.chunks_)),
          next_ordinal_(other.next_ordinal_) {}

    const Embedder& embedder() const { return *embedder_; }

    std::vector<std::string> ingest(const std::string& drug,
                                    const std::map<std::string, std::string>& sections) {
        if (sections.empty()) throw ValidationError("ingest requires at least one section");
        std::vector<std::string> ids;
        for (const auto& [section, text] : sections) {
            auto section_ids = ingest_section(drug, section, text);
            ids.insert(ids.end(), section_ids.begin(), section_ids.end());
        }
        return ids;
    }

    // Single-passage convenience used by fixtures and tests.
    std::string ingest_chunk(const std::string& drug, const std::string& section,
                             const std::string& text) {
        return ingest_section(drug, section, text).front();
    }

    std::vector<std::pair<Chunk, double>> retrieve(const RetrievalQuery& q) const {
        std::shared_lock lock(mutex_);
        std::vector<const Chunk*> cands;
        for (const auto& c : chunks_) {
            if (!q.filter_drugs.empty()) {
                bool ok = false;
                for (const auto& f : q.filter_drugs)
                    if (normalize_name(f) == normalize_name(c.drug)) {
                        ok = true;
                        break;
                    }
                if (!ok) continue;
            }
            cands.push_back(&c);
        }
        if (cands.empty()) return {};

        auto qvec = embedder_->embed(q.text);
        std::vector<double> sem(cands.size()), lex(cands.size(), 0.0);
        for (size_t i = 0; i < cands.size(); ++i)
            sem[i] = detail::cosine(qvec, cands[i]->embedding);

        // BM25 with document statistics over the candidate set.
        std::vector<std::unordered_map<std::string, long>> tfs(cands.size());
        std::vector<double> dls(cands.size());
        double avgdl = 0.0;
        for (size_t i = 0; i < cands.size(); ++i) {
            auto tokens = tokenize_words(cands[i]->text);
            dls[i] = static_cast<double>(tokens.size());
            avgdl += dls[i];
            for (const auto& t : tokens) tfs[i][t]++;
        }
        avgdl /= static_cast<double>(cands.size());
        auto qtokens = tokenize_words(q.text);
        std::sort(qtokens.begin(), qtokens.end());
        qtokens.erase(std::unique(qtokens.begin(), qtokens.end()), qtokens.end());
        for (const auto& term : qtokens) {
            long df = 0;
            for (const auto& tf : tfs) df += tf.count(term) ? 1 : 0;
            if (df == 0) continue;
            double n = static_cast<double>(cands.size());
            double idf = std::log(1.0 + (n - static_cast<double>(df) + 0.5) /
                                            (static_cast<double>(df) + 0.5));
            for (size_t i = 0; i < cands.size(); ++i) {
                auto it = tfs[i].find(term);
                if (it == tfs[i].end()) continue;
                double tf = static_cast<double>(it->second);
                lex[i] += idf * tf * (kBm25K1 + 1.0) /
                          (tf + kBm25K1 * (1.0 - kBm25B + kBm25B * dls[i] / avgdl));
            }
        }

        std::vector<long> ordinals(cands.size());
        for (size_t i = 0; i < cands.size(); ++i) ordinals[i] = cands[i]->ordinal;
        auto [order, fused] = detail::fused_order(sem, lex, ordinals, kRrfConstant);
        std::vector<std::pair<Chunk, double>> out;
        for (size_t pos = 0; pos < order.size() && pos < static_cast<size_t>(q.k); ++pos)
            out.push_back({*cands[order[pos]], fused[order[pos]]});
        return out;
    }

    size_t size() const {
        std::shared_lock lock(mutex_);
        return chunks_.size();
    }

    std::vector<Chunk> all_chunks() const {
        std::shared_lock lock(mutex_);
        return chunks_;
    }

    bool has_drug(const std::string& drug) const {
        std::shared_lock lock(mutex_);
        for (const auto& c : chunks_)
            if (normalize_name(c.drug) == normalize_name(drug)) return true;
        return false;
    }

    // Versioned single-file index: chunks with vectors plus the lexical
    // postings (term -> [ordinal, tf] pairs) kept alongside for inspection.
    void save(const std::filesystem::path& path) const {
        std::shared_lock lock(mutex_);
        ojson doc;
        doc["version"] = kIndexVersion;
        doc["embedder"] = embedder_->id();
        doc["dimension"] = embedder_->dimension();
        doc["next_ordinal"] = next_ordinal_;
        ojson arr = ojson::array();
        std::map<std::string, ojson> postings;
        for (const auto& c : chunks_) {
            ojson j;
            j["id"] = c.id;
            j["drug"] = c.drug;
            j["section"] = c.section;
            j["text"] = c.text;
            j["ordinal"] = c.ordinal;
            j["embedding"] = c.embedding;
            arr.push_back(std::move(j));
            std::unordered_map<std::string, long> tf;
            for (const auto& t : tokenize_words(c.text)) tf[t]++;
            for (const auto& [term, count] : tf) {
                if (!postings.count(term)) postings[term] = ojson::array();
                postings[term].push_back(ojson::array({c.ordinal, count}));
            }
        }
        doc["chunks"] = std::move(arr);
        ojson post;
        for (auto& [term, plist] : postings) post[term] = std::move(plist);
        doc["postings"] = std::move(post);
        write_file(path, doc.dump());
    }

    static RagStore load(const std::filesystem::path& path, std::shared_ptr<Embedder> embedder) {
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw Error("unreadable index file " + path.string() + ": " + e.what());
        }
        if (!doc.contains("version") || doc["version"].get<int>() != kIndexVersion)
            throw IndexVersionMismatch("index " + path.string() + " has version " +
                                       (doc.contains("version") ? doc["version"].dump() : "?") +
                                       ", expected " + std::to_string(kIndexVersion));
        if (doc.value("dimension", 0) != embedder->dimension() ||
            doc.value("embedder", "") != embedder->id())
            throw IndexVersionMismatch("index " + path.string() +
                                       " was built with a different embedder");
        RagStore store(std::move(embedder));
        for (const auto& j : doc["chunks"]) {
            Chunk c;
            c.id = j.at("id").get<std::string>();
            c.drug = j.at("drug").get<std::string>();
            c.section = j.at("section").get<std::string>();
            c.text = j.at("text").get<std::string>();
            c.ordinal = j.at("ordinal").get<long>();
            c.embedding = j.at("embedding").get<std::vector<float>>();
            store.chunks_.push_back(std::move(c));
        }
        store.next_ordinal_ = doc.value("next_ordinal", static_cast<long>(store.chunks_.size()));
        return store;
    }

   private:
    std::vector<std::string> ingest_section(const std::string& drug, const std::string& section,
                                            const std::string& text) {
        std::string tag = to_upper(normalize_name(drug));
        std::unique_lock lock(mutex_);
        // Re-ingesting a (drug, section) replaces its prior chunks.
        chunks_.erase(std::remove_if(chunks_.begin(), chunks_.end(),
                                     [&](const Chunk& c) {
                                         return c.drug == tag && c.section == section;
                                     }),
                      chunks_.end());
        std::vector<std::string> ids;
        int i = 0;
        for (const auto& piece : chunk_section(text)) {
            Chunk c;
            c.id = tag + ":" + section + ":" + std::to_string(i++);
            c.drug = tag;
            c.section = section;
            c.text = piece;
            c.ordinal = next_ordinal_++;
            try {
                c.embedding = embedder_->embed(piece);
            } catch (const std::exception& e) {
                throw EmbeddingError(c.id, e.what());
            }
            ids.push_back(c.id);
            chunks_.push_back(std::move(c));
        }
        return ids;
    }

    std::shared_ptr<Embedder> embedder_;
    std::vector<Chunk> chunks_;
    long next_ordinal_ = 0;
    mutable std::shared_mutex mutex_;
};

// Grounded-answer prompt: passages with drug/section provenance, then the
// question and the grounding instruction. Zero passages produce an explicit
// marker that drives NO_ANSWER downstream.
inline std::string augment_prompt(const std::string& question, const std::vector<Chunk>& passages) {
    if (passages.empty())
        return "No relevant passages found.\n\nQuestion: " + question;
    std::string out = "Passages:\n";
    int i = 1;
    for (const auto& c : passages) {
        out += std::to_string(i++) + ". " + c.drug + ": " + c.section + ":\n" + c.text + "\n\n";
    }
    out +=
        "Answer the question below based ONLY on these passages, and indicate which passages "
        "support your answer.\n\nQuestion: " +
        question;
    return out;
}

}  // namespace malade

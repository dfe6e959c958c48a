#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <thread>

#include "malade/rag.hpp"
#include "malade/util.hpp"

using namespace malade;

namespace {

// Independent reimplementation of the hybrid ranking for oracle comparison:
// cosine ranking + BM25 (k1=1.2, b=0.75, stats over the candidate set),
// reciprocal-rank fusion with constant 60, ties by ordinal.
std::vector<std::string> brute_force_topk(const RagStore& store, const RetrievalQuery& q) {
    std::vector<Chunk> cands;
    for (const auto& c : store.all_chunks()) {
        if (!q.filter_drugs.empty()) {
            bool ok = false;
            for (const auto& f : q.filter_drugs)
                if (normalize_name(f) == normalize_name(c.drug)) ok = true;
            if (!ok) continue;
        }
        cands.push_back(c);
    }
    if (cands.empty()) return {};

    auto qvec = store.embedder().embed(q.text);
    auto cosine = [](const std::vector<float>& a, const std::vector<float>& b) {
        double dot = 0, na = 0, nb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += static_cast<double>(a[i]) * b[i];
            na += static_cast<double>(a[i]) * a[i];
            nb += static_cast<double>(b[i]) * b[i];
        }
        if (na == 0 || nb == 0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    std::vector<double> sem(cands.size()), lex(cands.size());
    for (size_t i = 0; i < cands.size(); ++i) sem[i] = cosine(qvec, cands[i].embedding);

    // BM25 over the candidate set.
    double avgdl = 0;
    std::vector<std::vector<std::string>> docs;
    for (const auto& c : cands) {
        docs.push_back(tokenize_words(c.text));
        avgdl += static_cast<double>(docs.back().size());
    }
    avgdl /= static_cast<double>(cands.size());
    auto qtokens = tokenize_words(q.text);
    std::sort(qtokens.begin(), qtokens.end());
    qtokens.erase(std::unique(qtokens.begin(), qtokens.end()), qtokens.end());
    const double k1 = 1.2, b = 0.75;
    for (const auto& term : qtokens) {
        long df = 0;
        for (const auto& d : docs)
            if (std::count(d.begin(), d.end(), term) > 0) ++df;
        if (df == 0) continue;
        double n = static_cast<double>(cands.size());
        double idf = std::log(1.0 + (n - static_cast<double>(df) + 0.5) /
                                        (static_cast<double>(df) + 0.5));
        for (size_t i = 0; i < cands.size(); ++i) {
            double tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), term));
            if (tf == 0) continue;
            double dl = static_cast<double>(docs[i].size());
            lex[i] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
    }

    auto ranks = [&](const std::vector<double>& scores) {
        std::vector<size_t> order(cands.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
            if (scores[x] != scores[y]) return scores[x] > scores[y];
            return cands[x].ordinal < cands[y].ordinal;
        });
        std::vector<long> rank(cands.size());
        for (size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = static_cast<long>(pos) + 1;
        return rank;
    };
    auto rs = ranks(sem), rl = ranks(lex);
    std::vector<double> fused(cands.size());
    for (size_t i = 0; i < cands.size(); ++i)
        fused[i] = 1.0 / (60.0 + static_cast<double>(rs[i])) +
                   1.0 / (60.0 + static_cast<double>(rl[i]));
    std::vector<size_t> order(cands.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
        if (fused[x] != fused[y]) return fused[x] > fused[y];
        return cands[x].ordinal < cands[y].ordinal;
    });
    std::vector<std::string> ids;
    for (size_t pos = 0; pos < order.size() && pos < static_cast<size_t>(q.k); ++pos)
        ids.push_back(cands[order[pos]].id);
    return ids;
}

std::string synthetic_text(std::mt19937& rng, int words) {
    // Zipf-ish vocabulary so document frequencies vary.
    std::string out;
    for (int i = 0; i < words; ++i) {
        int v = static_cast<int>(std::sqrt(static_cast<double>(rng() % 900)));
        if (!out.empty()) out += ' ';
        out += "w" + std::to_string(v);
    }
    return out;
}

}  // namespace

TEST_CASE("chunker: short sections pass through untouched") {
    std::string text(1200, 'a');
    auto chunks = chunk_section(text);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0] == text);
    CHECK(chunk_section("tiny").size() == 1);
}

TEST_CASE("chunker: 5000 characters without boundaries yield 5 windows with 180 overlap") {
    // No sentence punctuation anywhere, so every cut lands at the hard budget.
    std::string text;
    while (text.size() < 5000) text += "abcde fghij ";
    text.resize(5000);
    auto chunks = chunk_section(text, 1200, 180);
    REQUIRE(chunks.size() == 5);
    for (size_t i = 0; i + 1 < chunks.size(); ++i) {
        CHECK(chunks[i].size() == 1200);
        CHECK(chunks[i].substr(chunks[i].size() - 180) == chunks[i + 1].substr(0, 180));
    }
    // Windows reconstruct the original text exactly.
    std::string rebuilt = chunks[0];
    for (size_t i = 1; i < chunks.size(); ++i) rebuilt += chunks[i].substr(180);
    CHECK(rebuilt == text);
}

TEST_CASE("chunker: cuts prefer sentence boundaries") {
    // ~40 sentences of ~100 chars each; every window should end on a period.
    std::string sentence =
        "The quick brown fox jumps over the lazy dog while the festival crowd watches on quietly.";
    std::string text;
    for (int i = 0; i < 40; ++i) text += sentence + " ";
    auto chunks = chunk_section(text, 1200, 180);
    REQUIRE(chunks.size() >= 3);
    std::string rebuilt = chunks[0];
    for (size_t i = 1; i < chunks.size(); ++i) rebuilt += chunks[i].substr(180);
    CHECK(rebuilt == text);
    for (size_t i = 0; i + 1 < chunks.size(); ++i) {
        CHECK(chunks[i].size() <= 1200);
        std::string t = trim(chunks[i]);
        CHECK(t.back() == '.');
    }
}

TEST_CASE("hash embedder: unit norm, fixed dimension, deterministic") {
    HashEmbedder emb;
    CHECK(emb.dimension() == 256);
    auto v = emb.embed("angioedema risk with lisinopril");
    REQUIRE(v.size() == 256);
    double norm = 0;
    for (float x : v) norm += static_cast<double>(x) * x;
    CHECK(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-6));
    CHECK(emb.embed("angioedema risk with lisinopril") == v);
    CHECK(emb.embed("completely different words here") != v);
    auto zero = emb.embed("");
    for (float x : zero) CHECK(x == 0.0f);
}

TEST_CASE("ingest tags chunks and replaces on re-ingest") {
    RagStore store(std::make_shared<HashEmbedder>());
    auto ids = store.ingest(
        "Lisinopril",
        {{"warnings", "Angioedema of the face, extremities, lips, tongue, glottis and/or larynx "
                      "has been reported in patients treated with ACE inhibitors, including "
                      "lisinopril."}});
    REQUIRE(ids.size() == 1);
    auto chunks = store.all_chunks();
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].drug == "LISINOPRIL");
    CHECK(chunks[0].section == "warnings");
    CHECK(chunks[0].embedding.size() == 256);

    store.ingest("LISINOPRIL", {{"warnings", "Replacement text for the warnings section."}});
    chunks = store.all_chunks();
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text.find("Replacement") != std::string::npos);

    CHECK_THROWS_AS(store.ingest("Lisinopril", {}), ValidationError);
}

TEST_CASE("retrieve: self-query ranks its own chunk first") {
    RagStore store(std::make_shared<HashEmbedder>());
    std::mt19937 rng(42);
    for (int d = 0; d < 10; ++d)
        store.ingest("drug" + std::to_string(d), {{"sec", synthetic_text(rng, 60)}});
    std::string needle =
        "post marketing reports of gastric and duodenal ulcers some severe and with complications";
    store.ingest("alendronate", {{"warnings_and_cautions", needle}});
    RetrievalQuery q;
    q.text = needle;
    q.k = 3;
    auto got = store.retrieve(q);
    REQUIRE(!got.empty());
    CHECK(got[0].first.text == needle);
    CHECK(got.size() == 3);
}

TEST_CASE("retrieve: filter soundness on a 500-chunk store") {
    RagStore store(std::make_shared<HashEmbedder>());
    std::mt19937 rng(7);
    for (int i = 0; i < 500; ++i) {
        std::string drug = "drug" + std::to_string(i % 25);
        store.ingest_chunk(drug, "sec" + std::to_string(i), synthetic_text(rng, 40));
    }
    CHECK(store.size() == 500);
    RetrievalQuery q;
    q.text = "w1 w2 w3 w4";
    q.k = 50;
    q.filter_drugs = {"Drug3", "drug17"};
    auto got = store.retrieve(q);
    CHECK(!got.empty());
    for (const auto& [chunk, score] : got) {
        bool ok = normalize_name(chunk.drug) == "drug3" || normalize_name(chunk.drug) == "drug17";
        CHECK(ok);
    }
    // A filter matching nothing returns empty, not an error.
    q.filter_drugs = {"unknown-drug"};
    CHECK(store.retrieve(q).empty());
}

TEST_CASE("retrieve equals the brute-force fused oracle") {
    RagStore store(std::make_shared<HashEmbedder>());
    std::mt19937 rng(20260825);
    for (int i = 0; i < 600; ++i) {
        std::string drug = "drug" + std::to_string(i % 12);
        store.ingest_chunk(drug, "s" + std::to_string(i), synthetic_text(rng, 30 + (i % 50)));
    }
    for (int trial = 0; trial < 40; ++trial) {
        RetrievalQuery q;
        q.text = synthetic_text(rng, 8);
        q.k = 1 + static_cast<int>(rng() % 20);
        if (trial % 3 == 0) q.filter_drugs = {"drug" + std::to_string(rng() % 12)};
        auto got = store.retrieve(q);
        auto expect = brute_force_topk(store, q);
        REQUIRE(got.size() == expect.size());
        for (size_t i = 0; i < got.size(); ++i) CHECK(got[i].first.id == expect[i]);
        // Fused scores are descending.
        for (size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].second >= got[i].second);
    }
}

TEST_CASE("retrieve: equal component scores break ties by ordinal") {
    RagStore store(std::make_shared<HashEmbedder>());
    // Identical text twice: identical cosine and BM25. Rank assignment (and
    // hence the final order) must prefer the earlier-ingested chunk.
    store.ingest_chunk("a", "s", "duplicate passage text one two three");
    store.ingest_chunk("b", "s", "duplicate passage text one two three");
    RetrievalQuery q;
    q.text = "duplicate passage text";
    q.k = 2;
    auto got = store.retrieve(q);
    REQUIRE(got.size() == 2);
    CHECK(got[0].first.ordinal < got[1].first.ordinal);
}

TEST_CASE("fusion: equal fused scores break ties by ordinal") {
    // Crossed rankings — A is semantic rank 1 / lexical rank 2, B the
    // reverse — give byte-identical fused scores; ordinal must decide.
    std::vector<double> sem = {0.9, 0.8};
    std::vector<double> lex = {0.2, 0.3};
    {
        std::vector<long> ordinals = {7, 3};
        auto [order, fused] = detail::fused_order(sem, lex, ordinals, 60.0);
        REQUIRE(fused[0] == fused[1]);
        CHECK(order == std::vector<size_t>{1, 0});  // ordinal 3 first
    }
    {
        std::vector<long> ordinals = {3, 7};
        auto [order, fused] = detail::fused_order(sem, lex, ordinals, 60.0);
        REQUIRE(fused[0] == fused[1]);
        CHECK(order == std::vector<size_t>{0, 1});
    }
    // Sanity: without a tie the higher fused score wins regardless of ordinal.
    {
        std::vector<double> lex2 = {0.3, 0.2};  // A wins both rankings
        std::vector<long> ordinals = {9, 1};
        auto [order, fused] = detail::fused_order(sem, lex2, ordinals, 60.0);
        CHECK(fused[0] > fused[1]);
        CHECK(order == std::vector<size_t>{0, 1});
    }
}

TEST_CASE("store persistence round-trips and rejects foreign versions") {
    auto dir = std::filesystem::temp_directory_path() / "malade_rag_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "index.json";

    RagStore store(std::make_shared<HashEmbedder>());
    std::mt19937 rng(3);
    for (int i = 0; i < 30; ++i)
        store.ingest_chunk("drug" + std::to_string(i % 3), "s" + std::to_string(i),
                           synthetic_text(rng, 25));
    store.save(path);

    auto loaded = RagStore::load(path, std::make_shared<HashEmbedder>());
    CHECK(loaded.size() == store.size());
    RetrievalQuery q;
    q.text = "w3 w7 w11";
    q.k = 10;
    auto a = store.retrieve(q);
    auto b = loaded.retrieve(q);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first.id == b[i].first.id);
        CHECK(a[i].second == b[i].second);
    }

    auto doc = json::parse(read_file(path));
    doc["version"] = 99;
    write_file(path, doc.dump());
    CHECK_THROWS_AS(RagStore::load(path, std::make_shared<HashEmbedder>()),
                    IndexVersionMismatch);
    std::filesystem::remove_all(dir);
}

TEST_CASE("augment_prompt enumerates passages with provenance and is deterministic") {
    Chunk c1;
    c1.drug = "LISINOPRIL";
    c1.section = "warnings";
    c1.text = "Angioedema has been reported.";
    Chunk c2;
    c2.drug = "ALENDRONATE";
    c2.section = "warnings_and_cautions";
    c2.text = "Gastric ulcers reported post-marketing.";
    std::string p = augment_prompt("Does lisinopril increase angioedema risk?", {c1, c2});
    CHECK(p.find("1. LISINOPRIL: warnings:") != std::string::npos);
    CHECK(p.find("2. ALENDRONATE: warnings_and_cautions:") != std::string::npos);
    CHECK(p.find("Angioedema has been reported.") != std::string::npos);
    CHECK(p.find("Does lisinopril increase angioedema risk?") != std::string::npos);
    CHECK(p.find("based ONLY on these passages") != std::string::npos);
    CHECK(p == augment_prompt("Does lisinopril increase angioedema risk?", {c1, c2}));
    CHECK(p.find("1. LISINOPRIL") < p.find("2. ALENDRONATE"));

    std::string empty = augment_prompt("anything?", {});
    CHECK(empty.find("No relevant passages found") != std::string::npos);
}

TEST_CASE("concurrent retrieves are consistent") {
    auto store = std::make_shared<RagStore>(std::make_shared<HashEmbedder>());
    std::mt19937 rng(11);
    for (int i = 0; i < 120; ++i)
        store->ingest_chunk("d" + std::to_string(i % 6), "s" + std::to_string(i),
                            synthetic_text(rng, 30));
    RetrievalQuery q;
    q.text = "w2 w5 w9";
    q.k = 8;
    auto baseline = store->retrieve(q);
    std::vector<std::thread> threads;
    std::vector<int> mismatches(8, 0);
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&, t]() {
            for (int i = 0; i < 50; ++i) {
                auto got = store->retrieve(q);
                if (got.size() != baseline.size()) {
                    mismatches[static_cast<size_t>(t)]++;
                    continue;
                }
                for (size_t j = 0; j < got.size(); ++j)
                    if (got[j].first.id != baseline[j].first.id) mismatches[static_cast<size_t>(t)]++;
            }
        });
    for (auto& th : threads) th.join();
    for (int m : mismatches) CHECK(m == 0);
}

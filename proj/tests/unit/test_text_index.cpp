#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "imgsearch/error.hpp"
#include "imgsearch/text_index.hpp"
#include "support/gen.hpp"

using namespace imgsearch;

namespace {

using Doc = std::pair<std::string, std::vector<std::string>>;

// Brute force over raw token lists; shares nothing with the index but the formula.
std::vector<TextHit> oracle(const std::vector<Doc>& docs, const std::vector<std::string>& query, std::size_t k) {
    std::map<std::string, std::uint32_t> qtf;
    for (const auto& t : query) ++qtf[t];
    const double n = static_cast<double>(docs.size());
    std::vector<TextHit> hits;
    for (const auto& [id, toks] : docs) {
        double score = 0.0;
        for (const auto& [term, q] : qtf) {
            std::size_t df = 0;
            for (const auto& [other, ot] : docs) df += std::count(ot.begin(), ot.end(), term) > 0;
            if (df == 0) continue;
            const auto tf = static_cast<std::uint32_t>(std::count(toks.begin(), toks.end(), term));
            if (tf == 0) continue;
            const double idf = std::log((n + 1.0) / (static_cast<double>(df) + 1.0)) + 1.0;
            score += (q * idf) * (tf * idf);
        }
        if (score > 0) hits.push_back({id, score});
    }
    std::sort(hits.begin(), hits.end(), [](const TextHit& a, const TextHit& b) {
        return a.score > b.score || (a.score == b.score && a.element_id < b.element_id);
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& t : v) s += (s.empty() ? "" : " ") + t;
    return s;
}

}  // namespace

TEST_CASE("tokenize") {
    CHECK(tokenize("en Kat, to") == std::vector<std::string>{"en", "kat", "to"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("  ,.;  ").empty());
    CHECK(tokenize("Blåbær-syltetøy") == std::vector<std::string>{"blåbær", "syltetøy"});
    CHECK(tokenize("ÆØÅ æøå") == std::vector<std::string>{"æøå", "æøå"});
    CHECK(tokenize("Årbok 1893") == std::vector<std::string>{"årbok", "1893"});
    CHECK(tokenize("ΑΘΗΝΑ Москва") == std::vector<std::string>{"αθηνα", "москва"});
    CHECK(tokenize("a\xff" "b") == std::vector<std::string>{"a", "b"});  // invalid byte splits
}

TEST_CASE("index_document bookkeeping") {
    InvertedIndex idx;
    idx.index_document("d1", {"a", "a", "b"});
    CHECK(idx.doc_count() == 1);
    CHECK(idx.term_freq("d1", "a") == 2u);
    CHECK(idx.term_freq("d1", "b") == 1u);
    CHECK_FALSE(idx.term_freq("d1", "c").has_value());
    idx.index_document("d2", {"b"});
    CHECK(idx.doc_freq("b") == 2);
    idx.index_document("empty", {});
    CHECK(idx.doc_count() == 3);
    CHECK(idx.contains("empty"));
    CHECK(idx.term_count() == 2);
    CHECK_THROWS_AS(idx.index_document("d1", {"x"}), InvalidArgument);
    CHECK(idx.idf("b") == doctest::Approx(std::log(4.0 / 3.0) + 1.0));
    CHECK(idx.idf("zzz") == doctest::Approx(std::log(4.0) + 1.0));
}

TEST_CASE("basic search behaviour") {
    InvertedIndex idx;
    idx.index_document("a", tokenize("en kat i huset"));
    idx.index_document("b", tokenize("hund og hest"));
    const auto hits = idx.search("kat", 10);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].element_id == "a");
    CHECK(idx.search("elefant", 10).empty());
    CHECK(idx.search("", 10).empty());
    CHECK(idx.search("kat", 0).empty());
}

TEST_CASE("five-document score table equals brute force") {
    const std::vector<Doc> docs = {{"d1", tokenize("kat kat hund")},
                                   {"d2", tokenize("hund hest")},
                                   {"d3", tokenize("kat fugl fugl fugl")},
                                   {"d4", tokenize("")},
                                   {"d5", tokenize("hest hest hest kat")}};
    InvertedIndex idx;
    for (const auto& [id, t] : docs) idx.index_document(id, t);
    for (const char* q : {"kat", "hund kat", "hest hest", "fugl kat hund hest", "ingen"}) {
        const auto got = idx.search(q, 10);
        const auto want = oracle(docs, tokenize(q), 10);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].element_id == want[i].element_id);
            CHECK(got[i].score == want[i].score);
        }
    }
}

TEST_CASE("random corpora match brute force exactly") {
    Rng rng(77);
    for (int c = 0; c < 50; ++c) {
        const std::size_t ndocs = 1 + rng.below(200);
        const std::size_t vocab = 1 + rng.below(50);
        std::vector<Doc> docs;
        InvertedIndex idx;
        for (std::size_t d = 0; d < ndocs; ++d) {
            docs.push_back({testgen::id_for(d), testgen::words_from(rng, vocab, rng.below(20))});
            idx.index_document(docs.back().first, docs.back().second);
        }
        for (int q = 0; q < 5; ++q) {
            const auto query = testgen::words_from(rng, vocab + 3, 1 + rng.below(4));
            const std::size_t k = 1 + rng.below(ndocs + 5);
            const auto got = idx.search(join(query), k);
            const auto want = oracle(docs, query, k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].element_id == want[i].element_id);
                CHECK(got[i].score == want[i].score);
            }
        }
    }
}

TEST_CASE("scores are additive over disjoint query terms") {
    Rng rng(78);
    for (int c = 0; c < 20; ++c) {
        InvertedIndex idx;
        for (std::size_t d = 0; d < 60; ++d) idx.index_document(testgen::id_for(d), testgen::words_from(rng, 12, 10));
        const std::string q1 = "w1 w2", q2 = "w5 w7 w7";
        std::map<std::string, double> s1, s2;
        for (const auto& h : idx.search(q1, 100)) s1[h.element_id] = h.score;
        for (const auto& h : idx.search(q2, 100)) s2[h.element_id] = h.score;
        for (const auto& h : idx.search(q1 + " " + q2, 100)) {
            const double want = s1[h.element_id] + s2[h.element_id];
            CHECK(h.score == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("unrelated documents do not reorder existing hits") {
    Rng rng(79);
    InvertedIndex idx;
    for (std::size_t d = 0; d < 40; ++d) idx.index_document(testgen::id_for(d), testgen::words_from(rng, 8, 6));
    const auto before = idx.search("w1 w3", 100);
    idx.index_document("zz_new", {"x1", "x2"});
    const auto after = idx.search("w1 w3", 100);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].element_id == after[i].element_id);
}

TEST_CASE("postings snapshot round trip") {
    testgen::TempDir dir("tidx");
    Rng rng(80);
    InvertedIndex idx;
    for (std::size_t d = 0; d < 100; ++d) idx.index_document(testgen::id_for(d), testgen::words_from(rng, 30, rng.below(15)));
    idx.save(dir / "p.bin", dir / "m.json");
    const auto back = InvertedIndex::load(dir / "p.bin", dir / "m.json");
    std::ostringstream a, b;
    idx.write_postings(a);
    back.write_postings(b);
    CHECK(a.str() == b.str());
    CHECK(back.doc_count() == idx.doc_count());
    const auto h1 = idx.search("w3 w4", 20), h2 = back.search("w3 w4", 20);
    REQUIRE(h1.size() == h2.size());
    for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i].score == h2[i].score);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "claimcheck/error.hpp"
#include "claimcheck/retrieval.hpp"
#include "claimcheck/text.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace claimcheck;
using testing_support::claim;
using testing_support::doc;
using testing_support::TempDir;

// ---------------------------------------------------------------------------
// Tokenization.
// ---------------------------------------------------------------------------

TEST_CASE("tokenize basics") {
    CHECK(text::tokenize("").empty());
    CHECK(text::tokenize("AB12 cd") == std::vector<std::string>{"ab12", "cd"});
    CHECK(text::tokenize("  ,;!  ").empty());
}

TEST_CASE("tokenize emits CJK unigrams plus bigrams") {
    // 3-character run: 3 unigrams + 2 bigrams, by hand:
    //   今 今天 天 天气 气
    const auto terms = text::tokenize("今天气");
    CHECK(terms == std::vector<std::string>{"今", "今天", "天", "天气", "气"});
}

TEST_CASE("tokenize splits mixed CJK and ASCII runs") {
    const auto terms = text::tokenize("GDP增长3point5");
    CHECK(terms == std::vector<std::string>{"gdp", "增", "增长", "长", "3point5"});
}

TEST_CASE("tokenize is deterministic") {
    const std::string input = "Mixed 文本 with 标点符号, and spaces";
    CHECK(text::tokenize(input) == text::tokenize(input));
}

// ---------------------------------------------------------------------------
// Index construction.
// ---------------------------------------------------------------------------

TEST_CASE("build_index statistics") {
    SUBCASE("one doc of 4 tokens has avg length 4") {
        const auto idx = RetrievalIndex::build({doc("d1", "alpha beta gamma delta")});
        CHECK(idx.avg_doc_length() == doctest::Approx(4.0));
        CHECK(idx.doc_length("d1") == 4);
    }
    SUBCASE("a term shared by 2 docs has 2 postings") {
        const auto idx =
            RetrievalIndex::build({doc("d1", "shared alpha"), doc("d2", "shared beta")});
        REQUIRE(idx.postings("shared") != nullptr);
        CHECK(idx.postings("shared")->size() == 2);
        REQUIRE(idx.postings("alpha") != nullptr);
        CHECK(idx.postings("alpha")->size() == 1);
    }
    SUBCASE("empty corpus is an error") {
        CHECK_THROWS_AS(RetrievalIndex::build({}), Error);
    }
}

TEST_CASE("postings match a brute-force term scan on a 10-doc corpus") {
    std::mt19937 rng(42);
    const auto corpus = testing_support::random_corpus(rng, 10, 1);
    const auto idx = RetrievalIndex::build(corpus.docs);

    // Oracle: for every term of every doc, count occurrences by scanning.
    for (const auto& d : corpus.docs) {
        const auto terms = text::tokenize(d.text);
        for (const auto& term : terms) {
            std::uint32_t tf = 0;
            for (const auto& t : terms) {
                if (t == term) ++tf;
            }
            const auto* plist = idx.postings(term);
            REQUIRE(plist != nullptr);
            bool found = false;
            for (const auto& p : *plist) {
                if (idx.doc_ids()[p.doc] == d.id) {
                    found = true;
                    CHECK(p.tf == tf);
                }
            }
            CHECK(found);
        }
    }
}

// ---------------------------------------------------------------------------
// BM25 scoring.
// ---------------------------------------------------------------------------

TEST_CASE("bm25 score is 0 without shared terms") {
    const auto idx = RetrievalIndex::build({doc("d1", "alpha beta")});
    CHECK(idx.score(text::tokenize("gamma delta"), "d1") == 0.0);
}

TEST_CASE("bm25 single-doc single-term closed form") {
    // N=1, df=1, tf=1, len=avg: idf = ln(0.5/1.5 + 1) = ln(4/3) and the tf
    // factor cancels, so the score is exactly ln(4/3).
    const auto idx = RetrievalIndex::build({doc("d1", "apple")});
    CHECK(idx.score(text::tokenize("apple"), "d1") ==
          doctest::Approx(0.28768207245178085).epsilon(1e-12));
}

TEST_CASE("bm25 score is non-decreasing in term frequency") {
    // Same length docs, rising tf of the query term.
    const auto idx = RetrievalIndex::build({doc("d1", "q a a a"), doc("d2", "q q a a"),
                                            doc("d3", "q q q a"), doc("d4", "q q q q")});
    const auto q = text::tokenize("q");
    double prev = -1.0;
    for (const auto& id : {"d1", "d2", "d3", "d4"}) {
        const double s = idx.score(q, id);
        CHECK(s >= prev);
        prev = s;
    }
}

TEST_CASE("5-doc ranking matches the exhaustive oracle") {
    const std::vector<EvidenceDoc> docs = {
        doc("d1", "flood warnings issued across the region"),
        doc("d2", "the flood destroyed flood defenses"),
        doc("d3", "economy shrinks amid uncertainty"),
        doc("d4", "flood relief effort underway"),
        doc("d5", "warnings about market volatility")};
    const auto idx = RetrievalIndex::build(docs);
    const std::string query = "flood warnings";
    const auto got = idx.search(query, 5);
    const auto want = oracle::bm25_rank(docs, query, 5, 1.2, 0.75, false, std::nullopt);
    REQUIRE(got.entries.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got.entries[i].doc_id == want[i].id);
        CHECK(got.entries[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
    }
}

// ---------------------------------------------------------------------------
// Search and date filtering.
// ---------------------------------------------------------------------------

TEST_CASE("date filter with a late as_of changes nothing") {
    const std::vector<EvidenceDoc> docs = {doc("d1", "alpha beta", "2020-01-01"),
                                           doc("d2", "alpha gamma", "2021-06-15"),
                                           doc("d3", "beta gamma")};
    const auto idx = RetrievalIndex::build(docs);
    const auto off = idx.search("alpha beta", 3, DateMode::kOff, std::nullopt);
    const auto filtered =
        idx.search("alpha beta", 3, DateMode::kFilter, CalendarDate{2022, 1, 1});
    REQUIRE(off.entries.size() == filtered.entries.size());
    for (std::size_t i = 0; i < off.entries.size(); ++i) {
        CHECK(off.entries[i].doc_id == filtered.entries[i].doc_id);
        CHECK(off.entries[i].score == filtered.entries[i].score);
    }
}

TEST_CASE("date filter excludes future-dated docs but keeps undated ones") {
    const std::vector<EvidenceDoc> docs = {doc("d1", "alpha", "2023-01-01"),
                                           doc("d2", "alpha", "2020-01-01"),
                                           doc("d3", "alpha")};
    const auto idx = RetrievalIndex::build(docs);
    const auto got = idx.search("alpha", 3, DateMode::kFilter, CalendarDate{2021, 1, 1});
    REQUIRE(got.entries.size() == 2);
    for (const auto& e : got.entries) CHECK(e.doc_id != "d1");
}

TEST_CASE("8-doc search equals full scoring + sort + truncate") {
    std::mt19937 rng(99);
    auto corpus = testing_support::random_corpus(rng, 8, 1);
    while (corpus.docs.size() < 8) {
        corpus.docs.push_back(doc("extra" + std::to_string(corpus.docs.size()), "filler text"));
    }
    const auto idx = RetrievalIndex::build(corpus.docs);
    const auto got = idx.search(corpus.queries[0], 3);
    const auto want =
        oracle::bm25_rank(corpus.docs, corpus.queries[0], 3, 1.2, 0.75, false, std::nullopt);
    REQUIRE(got.entries.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got.entries[i].doc_id == want[i].id);
        CHECK(got.entries[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
    }
}

TEST_CASE("k larger than the corpus returns every doc, ranked") {
    const auto idx = RetrievalIndex::build({doc("d1", "alpha"), doc("d2", "beta")});
    const auto got = idx.search("alpha", 10);
    CHECK(got.entries.size() == 2);
    CHECK(got.entries[0].doc_id == "d1");
    CHECK(got.entries[1].score == 0.0);
}

TEST_CASE("search is invariant to doc dates when date mode is off") {
    std::vector<EvidenceDoc> dated = {doc("d1", "alpha beta", "1999-01-01"),
                                      doc("d2", "alpha gamma", "2030-12-31")};
    std::vector<EvidenceDoc> undated = {doc("d1", "alpha beta"), doc("d2", "alpha gamma")};
    const auto a = RetrievalIndex::build(dated).search("alpha beta", 2, DateMode::kOff,
                                                       CalendarDate{2000, 1, 1});
    const auto b = RetrievalIndex::build(undated).search("alpha beta", 2, DateMode::kOff,
                                                         CalendarDate{2000, 1, 1});
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].doc_id == b.entries[i].doc_id);
        CHECK(a.entries[i].score == b.entries[i].score);
    }
}

TEST_CASE("randomized corpora match the oracle exactly, date filter included") {
    std::mt19937 rng(2024);
    for (int round = 0; round < 10; ++round) {
        const auto corpus = testing_support::random_corpus(rng, 50, 5);
        const auto idx = RetrievalIndex::build(corpus.docs);
        for (const auto& query : corpus.queries) {
            for (const bool filter : {false, true}) {
                const std::optional<CalendarDate> as_of =
                    filter ? std::optional(CalendarDate{2022, 6, 15}) : std::nullopt;
                const auto got =
                    idx.search(query, 7, filter ? DateMode::kFilter : DateMode::kOff, as_of);
                const auto want =
                    oracle::bm25_rank(corpus.docs, query, 7, 1.2, 0.75, filter, as_of);
                REQUIRE(got.entries.size() == want.size());
                for (std::size_t i = 0; i < want.size(); ++i) {
                    CHECK(got.entries[i].doc_id == want[i].id);
                    CHECK(got.entries[i].score ==
                          doctest::Approx(want[i].score).epsilon(1e-12));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Recall@k.
// ---------------------------------------------------------------------------

namespace {

// Rankings where each claim's gold evidence sits at a fixed 1-based rank.
std::unordered_map<std::string, RankedList> rankings_with_gold_at(
    const std::vector<std::size_t>& ranks) {
    std::unordered_map<std::string, RankedList> out;
    for (std::size_t s = 0; s < ranks.size(); ++s) {
        RankedList r;
        r.query_id = "c" + std::to_string(s);
        for (std::size_t pos = 1; pos <= 8; ++pos) {
            const std::string id =
                pos == ranks[s] ? "gold" + std::to_string(s) : "filler" + std::to_string(pos);
            r.entries.push_back({id, 10.0 - static_cast<double>(pos)});
        }
        out[r.query_id] = std::move(r);
    }
    return out;
}

std::vector<ClaimSample> claims_for(std::size_t n) {
    std::vector<ClaimSample> out;
    for (std::size_t s = 0; s < n; ++s) {
        out.push_back(claim("c" + std::to_string(s), "text", Label::kSup,
                            {"gold" + std::to_string(s)}));
    }
    return out;
}

}  // namespace

TEST_CASE("recall@k counts hands-on fixtures correctly") {
    SUBCASE("every gold at rank 1 gives R@1 = 1") {
        CHECK(recall_at_k(rankings_with_gold_at({1, 1, 1}), claims_for(3), 1) == 1.0);
    }
    SUBCASE("no gold in any top-k gives 0") {
        CHECK(recall_at_k(rankings_with_gold_at({7, 8, 7}), claims_for(3), 3) == 0.0);
    }
    SUBCASE("golds at ranks 1,2,4,6: hand count gives 2 of 4 at k=3, 3 of 4 at k=5") {
        const auto rankings = rankings_with_gold_at({1, 2, 4, 6});
        const auto samples = claims_for(4);
        CHECK(recall_at_k(rankings, samples, 1) == doctest::Approx(0.25));
        CHECK(recall_at_k(rankings, samples, 2) == doctest::Approx(0.5));
        CHECK(recall_at_k(rankings, samples, 3) == doctest::Approx(0.5));
        CHECK(recall_at_k(rankings, samples, 5) == doctest::Approx(0.75));
    }
    SUBCASE("golds at ranks 1,2,3,6 give R@3 = 0.75") {
        CHECK(recall_at_k(rankings_with_gold_at({1, 2, 3, 6}), claims_for(4), 3) ==
              doctest::Approx(0.75));
    }
}

TEST_CASE("recall@k is monotone in k and bounded") {
    std::mt19937 rng(5);
    std::uniform_int_distribution<std::size_t> rank(1, 8);
    for (int round = 0; round < 25; ++round) {
        std::vector<std::size_t> ranks;
        for (int s = 0; s < 6; ++s) ranks.push_back(rank(rng));
        const auto rankings = rankings_with_gold_at(ranks);
        const auto samples = claims_for(6);
        double prev = 0.0;
        for (std::size_t k : {1, 2, 3, 5}) {
            const double r = recall_at_k(rankings, samples, k);
            CHECK(r >= prev);
            CHECK(r <= 1.0);
            prev = r;
        }
    }
}

TEST_CASE("recall@k errors") {
    CHECK_THROWS_AS(recall_at_k({}, {}, 1), Error);
    const auto samples = claims_for(2);
    CHECK_THROWS_WITH_AS(recall_at_k(rankings_with_gold_at({1}), samples, 1),
                         doctest::Contains("c1"), Error);
}

TEST_CASE("strict recall requires every gold id") {
    ClaimSample multi = claim("c0", "text", Label::kSup, {"gold0", "missing"});
    auto rankings = rankings_with_gold_at({1});
    CHECK(recall_at_k(rankings, {multi}, 3, false) == 1.0);
    CHECK(recall_at_k(rankings, {multi}, 3, true) == 0.0);
}

// ---------------------------------------------------------------------------
// Persistence.
// ---------------------------------------------------------------------------

TEST_CASE("index save/load preserves search behavior and header settings") {
    TempDir dir("index");
    std::mt19937 rng(3);
    const auto corpus = testing_support::random_corpus(rng, 20, 3);
    const auto idx =
        RetrievalIndex::build(corpus.docs, {1.5, 0.6}, DateMode::kFilter);
    const std::string path = (dir / "index.jsonl").string();
    idx.save(path);
    const auto loaded = RetrievalIndex::load(path);

    CHECK(loaded.params().k1 == doctest::Approx(1.5));
    CHECK(loaded.params().b == doctest::Approx(0.6));
    CHECK(loaded.default_date_mode() == DateMode::kFilter);
    CHECK(loaded.size() == idx.size());
    CHECK(loaded.avg_doc_length() == doctest::Approx(idx.avg_doc_length()));

    for (const auto& query : corpus.queries) {
        const auto a = idx.search(query, 5, DateMode::kOff);
        const auto b = loaded.search(query, 5, DateMode::kOff);
        REQUIRE(a.entries.size() == b.entries.size());
        for (std::size_t i = 0; i < a.entries.size(); ++i) {
            CHECK(a.entries[i].doc_id == b.entries[i].doc_id);
            CHECK(a.entries[i].score == b.entries[i].score);
        }
    }
}

TEST_CASE("rankings round-trip") {
    TempDir dir("rank");
    std::vector<RankedList> lists(2);
    lists[0].query_id = "c1";
    lists[0].entries = {{"e1", 2.5}, {"e2", 1.0}};
    lists[1].query_id = "c2";
    lists[1].entries = {{"e3", 0.0}};
    const std::string path = (dir / "rank.jsonl").string();
    save_rankings(lists, path);
    const auto loaded = load_rankings(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.at("c1").entries.size() == 2);
    CHECK(loaded.at("c1").entries[0].doc_id == "e1");
    CHECK(loaded.at("c2").entries[0].score == 0.0);
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "claimcheck/corpus.hpp"

namespace claimcheck {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

enum class DateMode { kOff, kFilter };

const char* to_string(DateMode mode);
DateMode date_mode_from_string(const std::string& s);

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;
};

// Scores non-increasing; equal scores ordered by ascending doc id.
struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;
};

struct Posting {
    std::uint32_t doc = 0;  // dense internal index
    std::uint32_t tf = 0;
};

// Inverted index over an evidence library. Built once, then read-only:
// concurrent searches need no synchronization.
class RetrievalIndex {
public:
    static RetrievalIndex build(const std::vector<EvidenceDoc>& docs, Bm25Params params = {},
                                DateMode default_mode = DateMode::kOff);

    // Okapi BM25 for one document, iterating query terms in order:
    //   sum idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen))
    // with idf(t) = ln((N - df + 0.5)/(df + 0.5) + 1), so absent terms add 0
    // and scores are never negative.
    double score(const std::vector<std::string>& query_terms, const std::string& doc_id,
                 const Bm25Params& params) const;
    double score(const std::vector<std::string>& query_terms, const std::string& doc_id) const {
        return score(query_terms, doc_id, params_);
    }

    // Ranks every eligible document (zero-score ones included) and keeps the
    // top k. With DateMode::kFilter and an as_of date, documents published
    // strictly later are excluded before ranking; undated documents stay.
    RankedList search(const std::string& query, std::size_t k,
                      std::optional<DateMode> mode = std::nullopt,
                      std::optional<CalendarDate> as_of = std::nullopt) const;

    std::size_t size() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avg_len_; }
    const Bm25Params& params() const { return params_; }
    DateMode default_date_mode() const { return default_mode_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    std::uint32_t doc_length(const std::string& doc_id) const;
    const std::vector<Posting>* postings(const std::string& term) const;

    void save(const std::string& path) const;
    static RetrievalIndex load(const std::string& path);

private:
    RetrievalIndex() = default;

    std::uint32_t require_doc(const std::string& doc_id) const;

    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::uint32_t> doc_index_;
    std::vector<std::uint32_t> doc_lengths_;
    std::vector<std::optional<CalendarDate>> doc_dates_;
    double avg_len_ = 0.0;
    Bm25Params params_;
    DateMode default_mode_ = DateMode::kOff;
};

// Fraction of samples whose top-k contains at least one gold evidence id
// (all of them with require_all). Multi-evidence samples count as a hit on
// any gold by default.
double recall_at_k(const std::unordered_map<std::string, RankedList>& rankings,
                   const std::vector<ClaimSample>& samples, std::size_t k,
                   bool require_all = false);

void save_rankings(const std::vector<RankedList>& rankings, const std::string& path);
std::unordered_map<std::string, RankedList> load_rankings(const std::string& path);

}  // namespace claimcheck

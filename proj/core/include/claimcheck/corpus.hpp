#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace claimcheck {

enum class Label { kSup, kRef, kNei };

const char* to_string(Label label);
Label label_from_string(const std::string& s);
std::optional<Label> try_label_from_string(const std::string& s);

// Calendar date, ISO 8601. Time-of-day on input is accepted and discarded.
struct CalendarDate {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const CalendarDate&) const = default;

    bool valid() const;
    std::string to_string() const;
    static CalendarDate parse(const std::string& s);  // throws on malformed input
};

// Per-claim trending-platform counters. A field can be genuinely missing,
// which is distinct from zero: influence imputation fills missing fields from
// the dataset's 25th percentile.
struct HotspotIndicators {
    std::optional<long long> views;
    std::optional<long long> discussions;
    std::optional<long long> engagements;
    std::optional<long long> posts;

    bool operator==(const HotspotIndicators&) const = default;
};

struct ClaimSample {
    std::string id;
    std::string claim;
    Label label = Label::kNei;
    std::vector<std::string> gold_evidence_ids;
    std::string explanation;  // may be empty for unannotated rows
    std::optional<HotspotIndicators> hotspot;
    std::optional<int> risk_index;  // 1..5
    std::optional<CalendarDate> claim_date;

    bool operator==(const ClaimSample&) const = default;
};

struct EvidenceDoc {
    std::string id;
    std::string text;
    std::optional<std::string> url;
    std::optional<CalendarDate> published;

    bool operator==(const EvidenceDoc&) const = default;
};

// Immutable id -> doc view over a validated evidence list.
class EvidenceStore {
public:
    EvidenceStore() = default;
    explicit EvidenceStore(std::vector<EvidenceDoc> docs);

    const EvidenceDoc* find(const std::string& id) const;
    const std::vector<EvidenceDoc>& docs() const { return docs_; }
    std::size_t size() const { return docs_.size(); }

private:
    std::vector<EvidenceDoc> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// claims.jsonl, one object per line. Errors carry the 1-based line number.
std::vector<ClaimSample> load_dataset(const std::string& path);
void save_dataset(const std::vector<ClaimSample>& samples, const std::string& path);

// evidence.jsonl.
std::vector<EvidenceDoc> load_evidence_library(const std::string& path);
void save_evidence_library(const std::vector<EvidenceDoc>& docs, const std::string& path);

// Every gold evidence id must resolve in the library.
void check_evidence_links(const std::vector<ClaimSample>& samples, const EvidenceStore& store);

// Merges evidence lists into one deduplicated library. Duplicates are decided
// by normalized-text equality (NFC + whitespace collapse); order is stable by
// first occurrence and earlier lists win id conflicts, so pass the gold
// library first.
std::vector<EvidenceDoc> merge_dedup(const std::vector<std::vector<EvidenceDoc>>& libraries);

void validate_claim(const ClaimSample& sample);
void validate_evidence(const EvidenceDoc& doc);

}  // namespace claimcheck

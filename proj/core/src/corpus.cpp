#include "claimcheck/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "claimcheck/error.hpp"
#include "claimcheck/text.hpp"

namespace claimcheck {

using nlohmann::ordered_json;

const char* to_string(Label label) {
    switch (label) {
        case Label::kSup: return "SUP";
        case Label::kRef: return "REF";
        case Label::kNei: return "NEI";
    }
    return "NEI";
}

std::optional<Label> try_label_from_string(const std::string& s) {
    if (s == "SUP") return Label::kSup;
    if (s == "REF") return Label::kRef;
    if (s == "NEI") return Label::kNei;
    return std::nullopt;
}

Label label_from_string(const std::string& s) {
    auto label = try_label_from_string(s);
    if (!label) throw_validation("unknown label \"" + s + "\" (expected SUP, REF or NEI)");
    return *label;
}

bool CalendarDate::valid() const {
    if (year < 1 || month < 1 || month > 12 || day < 1) return false;
    static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int limit = days[month - 1];
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    if (month == 2 && leap) limit = 29;
    return day <= limit;
}

std::string CalendarDate::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

CalendarDate CalendarDate::parse(const std::string& s) {
    // Accept a full ISO timestamp but keep only the calendar date.
    std::string d = s;
    if (d.size() > 10 && (d[10] == 'T' || d[10] == ' ')) d = d.substr(0, 10);
    CalendarDate out;
    char sep1 = 0;
    char sep2 = 0;
    char trail = 0;
    if (std::sscanf(d.c_str(), "%d%c%d%c%d%c", &out.year, &sep1, &out.month, &sep2, &out.day,
                    &trail) != 5 ||
        sep1 != '-' || sep2 != '-' || !out.valid()) {
        throw_validation("malformed date \"" + s + "\" (expected YYYY-MM-DD)");
    }
    return out;
}

EvidenceStore::EvidenceStore(std::vector<EvidenceDoc> docs) : docs_(std::move(docs)) {
    by_id_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        by_id_.emplace(docs_[i].id, i);
    }
}

const EvidenceDoc* EvidenceStore::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

void validate_claim(const ClaimSample& sample) {
    if (sample.id.empty()) throw_validation("claim with empty id");
    if (text::normalize_for_dedup(sample.claim).empty()) {
        throw_validation("claim \"" + sample.id + "\" has empty claim text");
    }
    if (sample.gold_evidence_ids.empty()) {
        throw_validation("claim \"" + sample.id + "\" has no gold evidence ids");
    }
    if (sample.risk_index && (*sample.risk_index < 1 || *sample.risk_index > 5)) {
        throw_validation("claim \"" + sample.id + "\" risk_index out of range [1,5]");
    }
    if (sample.hotspot) {
        const auto& h = *sample.hotspot;
        for (const auto& [name, v] :
             {std::pair{"views", h.views}, {"discussions", h.discussions},
              {"engagements", h.engagements}, {"posts", h.posts}}) {
            if (v && *v < 0) {
                throw_validation("claim \"" + sample.id + "\" hotspot " + name + " is negative");
            }
        }
    }
}

void validate_evidence(const EvidenceDoc& doc) {
    if (doc.id.empty()) throw_validation("evidence with empty id");
    if (text::normalize_for_dedup(doc.text).empty()) {
        throw_validation("evidence \"" + doc.id + "\" has empty text");
    }
}

namespace {

std::optional<long long> opt_count(const ordered_json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<long long>();
}

ClaimSample claim_from_json(const ordered_json& j) {
    ClaimSample s;
    s.id = j.at("id").get<std::string>();
    s.claim = j.at("claim").get<std::string>();
    s.label = label_from_string(j.at("label").get<std::string>());
    s.gold_evidence_ids = j.at("gold_evidence_ids").get<std::vector<std::string>>();
    if (j.contains("explanation") && !j.at("explanation").is_null()) {
        s.explanation = j.at("explanation").get<std::string>();
    }
    if (j.contains("hotspot") && !j.at("hotspot").is_null()) {
        const auto& h = j.at("hotspot");
        HotspotIndicators ind;
        ind.views = opt_count(h, "views");
        ind.discussions = opt_count(h, "discussions");
        ind.engagements = opt_count(h, "engagements");
        ind.posts = opt_count(h, "posts");
        s.hotspot = ind;
    }
    if (j.contains("risk_index") && !j.at("risk_index").is_null()) {
        s.risk_index = j.at("risk_index").get<int>();
    }
    if (j.contains("claim_date") && !j.at("claim_date").is_null()) {
        s.claim_date = CalendarDate::parse(j.at("claim_date").get<std::string>());
    }
    validate_claim(s);
    return s;
}

ordered_json claim_to_json(const ClaimSample& s) {
    ordered_json j;
    j["id"] = s.id;
    j["claim"] = s.claim;
    j["label"] = to_string(s.label);
    j["gold_evidence_ids"] = s.gold_evidence_ids;
    j["explanation"] = s.explanation;
    if (s.hotspot) {
        ordered_json h;
        auto put = [&h](const char* key, const std::optional<long long>& v) {
            if (v) {
                h[key] = *v;
            } else {
                h[key] = nullptr;
            }
        };
        put("views", s.hotspot->views);
        put("discussions", s.hotspot->discussions);
        put("engagements", s.hotspot->engagements);
        put("posts", s.hotspot->posts);
        j["hotspot"] = h;
    } else {
        j["hotspot"] = nullptr;
    }
    j["risk_index"] = s.risk_index ? ordered_json(*s.risk_index) : ordered_json(nullptr);
    j["claim_date"] =
        s.claim_date ? ordered_json(s.claim_date->to_string()) : ordered_json(nullptr);
    return j;
}

EvidenceDoc evidence_from_json(const ordered_json& j) {
    EvidenceDoc d;
    d.id = j.at("id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    if (j.contains("url") && !j.at("url").is_null()) {
        d.url = j.at("url").get<std::string>();
    }
    if (j.contains("published") && !j.at("published").is_null()) {
        d.published = CalendarDate::parse(j.at("published").get<std::string>());
    }
    validate_evidence(d);
    return d;
}

ordered_json evidence_to_json(const EvidenceDoc& d) {
    ordered_json j;
    j["id"] = d.id;
    j["text"] = d.text;
    j["url"] = d.url ? ordered_json(*d.url) : ordered_json(nullptr);
    j["published"] = d.published ? ordered_json(d.published->to_string()) : ordered_json(nullptr);
    return j;
}

// Applies `parse` per line, decorating any failure with the line number.
template <typename T, typename Parse>
std::vector<T> load_jsonl(const std::string& path, const char* what, Parse parse) {
    std::ifstream in(path);
    if (!in) throw_validation(std::string(what) + " file not found: " + path);
    std::vector<T> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(parse(ordered_json::parse(line)));
        } catch (const Error& e) {
            throw Error(e.kind(), path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::exception& e) {
            throw_validation(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
void require_unique_ids(const std::vector<T>& items, const char* what, const std::string& path) {
    std::unordered_set<std::string> seen;
    for (const auto& item : items) {
        if (!seen.insert(item.id).second) {
            throw_validation(path + ": duplicate " + what + " id \"" + item.id + "\"");
        }
    }
}

}  // namespace

std::vector<ClaimSample> load_dataset(const std::string& path) {
    auto samples = load_jsonl<ClaimSample>(path, "claims", claim_from_json);
    require_unique_ids(samples, "claim", path);
    return samples;
}

void save_dataset(const std::vector<ClaimSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write " + path);
    for (const auto& s : samples) out << claim_to_json(s).dump() << '\n';
}

std::vector<EvidenceDoc> load_evidence_library(const std::string& path) {
    auto docs = load_jsonl<EvidenceDoc>(path, "evidence", evidence_from_json);
    require_unique_ids(docs, "evidence", path);
    return docs;
}

void save_evidence_library(const std::vector<EvidenceDoc>& docs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write " + path);
    for (const auto& d : docs) out << evidence_to_json(d).dump() << '\n';
}

void check_evidence_links(const std::vector<ClaimSample>& samples, const EvidenceStore& store) {
    for (const auto& s : samples) {
        for (const auto& id : s.gold_evidence_ids) {
            if (store.find(id) == nullptr) {
                throw_validation("claim \"" + s.id + "\" references unknown evidence id \"" + id +
                                 "\"");
            }
        }
    }
}

std::vector<EvidenceDoc> merge_dedup(const std::vector<std::vector<EvidenceDoc>>& libraries) {
    std::vector<EvidenceDoc> out;
    std::unordered_set<std::string> seen_text;
    std::unordered_set<std::string> seen_id;
    for (const auto& lib : libraries) {
        for (const auto& doc : lib) {
            validate_evidence(doc);
            const std::string key = text::normalize_for_dedup(doc.text);
            if (seen_text.contains(key)) continue;
            if (seen_id.contains(doc.id)) continue;  // earlier library keeps the id
            seen_text.insert(key);
            seen_id.insert(doc.id);
            out.push_back(doc);
        }
    }
    return out;
}

}  // namespace claimcheck

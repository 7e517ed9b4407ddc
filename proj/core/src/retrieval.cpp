#include "claimcheck/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "claimcheck/error.hpp"
#include "claimcheck/text.hpp"

namespace claimcheck {

using nlohmann::ordered_json;

const char* to_string(DateMode mode) {
    return mode == DateMode::kFilter ? "filter" : "off";
}

DateMode date_mode_from_string(const std::string& s) {
    if (s == "off") return DateMode::kOff;
    if (s == "filter") return DateMode::kFilter;
    throw_validation("unknown date mode \"" + s + "\" (expected off or filter)");
}

RetrievalIndex RetrievalIndex::build(const std::vector<EvidenceDoc>& docs, Bm25Params params,
                                     DateMode default_mode) {
    if (docs.empty()) throw_validation("cannot build an index over an empty corpus");
    RetrievalIndex idx;
    idx.params_ = params;
    idx.default_mode_ = default_mode;
    idx.doc_ids_.reserve(docs.size());

    std::uint64_t total_len = 0;
    for (const auto& doc : docs) {
        validate_evidence(doc);
        const auto d = static_cast<std::uint32_t>(idx.doc_ids_.size());
        if (!idx.doc_index_.emplace(doc.id, d).second) {
            throw_validation("duplicate evidence id \"" + doc.id + "\" while indexing");
        }
        idx.doc_ids_.push_back(doc.id);
        idx.doc_dates_.push_back(doc.published);

        const auto terms = text::tokenize(doc.text);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
        total_len += terms.size();

        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, freq] : tf) {
            idx.postings_[term].push_back(Posting{d, freq});
        }
    }
    idx.avg_len_ = static_cast<double>(total_len) / static_cast<double>(docs.size());
    // Docs are appended in corpus order, so postings are already sorted by
    // internal index; keep that invariant explicit.
    for (auto& [term, plist] : idx.postings_) {
        std::sort(plist.begin(), plist.end(),
                  [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    }
    return idx;
}

std::uint32_t RetrievalIndex::require_doc(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw_validation("unknown doc id \"" + doc_id + "\"");
    return it->second;
}

std::uint32_t RetrievalIndex::doc_length(const std::string& doc_id) const {
    return doc_lengths_[require_doc(doc_id)];
}

const std::vector<Posting>* RetrievalIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

namespace {

double idf_plus_one(std::size_t corpus_size, std::size_t df) {
    const double n = static_cast<double>(corpus_size);
    const double d = static_cast<double>(df);
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double term_contribution(double idf, double tf, double len, double avg_len,
                         const Bm25Params& p) {
    return idf * (tf * (p.k1 + 1.0)) / (tf + p.k1 * (1.0 - p.b + p.b * len / avg_len));
}

}  // namespace

double RetrievalIndex::score(const std::vector<std::string>& query_terms,
                             const std::string& doc_id, const Bm25Params& params) const {
    const std::uint32_t d = require_doc(doc_id);
    const double len = static_cast<double>(doc_lengths_[d]);
    double total = 0.0;
    for (const auto& term : query_terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;  // absent terms contribute 0
        const auto& plist = it->second;
        auto pit = std::lower_bound(plist.begin(), plist.end(), d,
                                    [](const Posting& p, std::uint32_t doc) { return p.doc < doc; });
        const double tf = (pit != plist.end() && pit->doc == d) ? pit->tf : 0.0;
        if (tf == 0.0) continue;
        total += term_contribution(idf_plus_one(size(), plist.size()), tf, len, avg_len_, params);
    }
    return total;
}

RankedList RetrievalIndex::search(const std::string& query, std::size_t k,
                                  std::optional<DateMode> mode,
                                  std::optional<CalendarDate> as_of) const {
    if (k < 1) throw_validation("search requires k >= 1");
    const DateMode effective = mode.value_or(default_mode_);

    std::vector<bool> eligible(size(), true);
    if (effective == DateMode::kFilter && as_of) {
        for (std::size_t d = 0; d < size(); ++d) {
            // Future-dated evidence is invisible; undated evidence stays.
            if (doc_dates_[d] && *doc_dates_[d] > *as_of) eligible[d] = false;
        }
    }

    // Term-at-a-time accumulation. Contributions are added per document in
    // query-term order, which keeps partial sums identical to scoring each
    // document on its own.
    std::vector<double> acc(size(), 0.0);
    const auto terms = text::tokenize(query);
    for (const auto& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& plist = it->second;
        const double idf = idf_plus_one(size(), plist.size());
        for (const Posting& p : plist) {
            if (!eligible[p.doc]) continue;
            acc[p.doc] += term_contribution(idf, static_cast<double>(p.tf),
                                            static_cast<double>(doc_lengths_[p.doc]), avg_len_,
                                            params_);
        }
    }

    std::vector<std::uint32_t> order;
    order.reserve(size());
    for (std::uint32_t d = 0; d < size(); ++d) {
        if (eligible[d]) order.push_back(d);
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (acc[a] != acc[b]) return acc[a] > acc[b];
        return doc_ids_[a] < doc_ids_[b];
    });
    if (order.size() > k) order.resize(k);

    RankedList out;
    out.query_id = query;
    out.entries.reserve(order.size());
    for (std::uint32_t d : order) out.entries.push_back({doc_ids_[d], acc[d]});
    return out;
}

double recall_at_k(const std::unordered_map<std::string, RankedList>& rankings,
                   const std::vector<ClaimSample>& samples, std::size_t k, bool require_all) {
    if (samples.empty()) throw_validation("recall@k over an empty sample set");
    std::string missing;
    std::size_t hits = 0;
    for (const auto& s : samples) {
        auto it = rankings.find(s.id);
        if (it == rankings.end()) {
            missing += missing.empty() ? s.id : ", " + s.id;
            continue;
        }
        const auto& entries = it->second.entries;
        const std::size_t limit = std::min(k, entries.size());
        std::size_t found = 0;
        for (const auto& gold : s.gold_evidence_ids) {
            for (std::size_t r = 0; r < limit; ++r) {
                if (entries[r].doc_id == gold) {
                    ++found;
                    break;
                }
            }
        }
        const bool hit = require_all ? found == s.gold_evidence_ids.size() : found > 0;
        if (hit) ++hits;
    }
    if (!missing.empty()) throw_validation("no ranking for claim ids: " + missing);
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace {
constexpr const char* kIndexFormat = "claimcheck.index";
constexpr int kIndexVersion = 1;
}  // namespace

void RetrievalIndex::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write " + path);
    ordered_json header;
    header["format"] = kIndexFormat;
    header["version"] = kIndexVersion;
    header["k1"] = params_.k1;
    header["b"] = params_.b;
    header["date_mode"] = to_string(default_mode_);
    header["docs"] = doc_ids_.size();
    header["avg_doc_length"] = avg_len_;
    out << header.dump() << '\n';

    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
        ordered_json j;
        j["doc"] = doc_ids_[d];
        j["len"] = doc_lengths_[d];
        j["published"] = doc_dates_[d] ? ordered_json(doc_dates_[d]->to_string())
                                       : ordered_json(nullptr);
        out << j.dump() << '\n';
    }

    // Deterministic term order so identical corpora serialize identically.
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, plist] : postings_) terms.push_back(&term);
    std::sort(terms.begin(), terms.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    for (const std::string* term : terms) {
        ordered_json j;
        j["term"] = *term;
        auto& arr = j["postings"] = ordered_json::array();
        for (const Posting& p : postings_.at(*term)) {
            arr.push_back(ordered_json::array({p.doc, p.tf}));
        }
        out << j.dump() << '\n';
    }
}

RetrievalIndex RetrievalIndex::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_validation("index file not found: " + path);
    std::string line;
    if (!std::getline(in, line)) throw_validation(path + ": empty index file");

    RetrievalIndex idx;
    try {
        const auto header = ordered_json::parse(line);
        if (header.at("format").get<std::string>() != kIndexFormat ||
            header.at("version").get<int>() != kIndexVersion) {
            throw_validation(path + ": unsupported index format");
        }
        idx.params_.k1 = header.at("k1").get<double>();
        idx.params_.b = header.at("b").get<double>();
        idx.default_mode_ = date_mode_from_string(header.at("date_mode").get<std::string>());
        idx.avg_len_ = header.at("avg_doc_length").get<double>();
        const auto n_docs = header.at("docs").get<std::size_t>();

        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = ordered_json::parse(line);
            if (j.contains("doc")) {
                const auto d = static_cast<std::uint32_t>(idx.doc_ids_.size());
                idx.doc_index_.emplace(j.at("doc").get<std::string>(), d);
                idx.doc_ids_.push_back(j.at("doc").get<std::string>());
                idx.doc_lengths_.push_back(j.at("len").get<std::uint32_t>());
                idx.doc_dates_.push_back(
                    j.at("published").is_null()
                        ? std::nullopt
                        : std::optional(CalendarDate::parse(j.at("published").get<std::string>())));
            } else if (j.contains("term")) {
                auto& plist = idx.postings_[j.at("term").get<std::string>()];
                for (const auto& pair : j.at("postings")) {
                    plist.push_back(Posting{pair.at(0).get<std::uint32_t>(),
                                            pair.at(1).get<std::uint32_t>()});
                }
            }
        }
        if (idx.doc_ids_.size() != n_docs) {
            throw_validation(path + ": index truncated (doc count mismatch)");
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw_validation(path + ": malformed index file: " + e.what());
    }
    return idx;
}

void save_rankings(const std::vector<RankedList>& rankings, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write " + path);
    for (const auto& r : rankings) {
        ordered_json j;
        j["id"] = r.query_id;
        auto& arr = j["ranking"] = ordered_json::array();
        for (const auto& e : r.entries) {
            ordered_json entry;
            entry["evidence_id"] = e.doc_id;
            entry["score"] = e.score;
            arr.push_back(entry);
        }
        out << j.dump() << '\n';
    }
}

std::unordered_map<std::string, RankedList> load_rankings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_validation("rankings file not found: " + path);
    std::unordered_map<std::string, RankedList> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = ordered_json::parse(line);
            RankedList r;
            r.query_id = j.at("id").get<std::string>();
            for (const auto& e : j.at("ranking")) {
                r.entries.push_back(
                    {e.at("evidence_id").get<std::string>(), e.at("score").get<double>()});
            }
            out[r.query_id] = std::move(r);
        } catch (const std::exception& e) {
            throw_validation(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace claimcheck

// Independent brute-force oracles for the test suites. Everything here is
// written naively against the stated formulas and must stay decoupled from
// the library implementations it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "claimcheck/corpus.hpp"
#include "claimcheck/text.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// BM25: score every doc with a nested loop, sort, truncate.
// ---------------------------------------------------------------------------

struct ScoredDoc {
    std::string id;
    double score;
};

inline double bm25_one_doc(const std::vector<std::string>& query_terms,
                           const std::vector<std::string>& doc_terms,
                           const std::vector<std::vector<std::string>>& all_docs, double k1,
                           double b) {
    const double n_docs = static_cast<double>(all_docs.size());
    double avg = 0.0;
    for (const auto& d : all_docs) avg += static_cast<double>(d.size());
    avg /= n_docs;

    double total = 0.0;
    for (const auto& q : query_terms) {
        double tf = 0.0;
        for (const auto& t : doc_terms) {
            if (t == q) tf += 1.0;
        }
        if (tf == 0.0) continue;
        double df = 0.0;
        for (const auto& d : all_docs) {
            if (std::find(d.begin(), d.end(), q) != d.end()) df += 1.0;
        }
        const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        const double len = static_cast<double>(doc_terms.size());
        total += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avg));
    }
    return total;
}

// Full scoring + stable sort + truncate, with the date filter applied first.
inline std::vector<ScoredDoc> bm25_rank(const std::vector<claimcheck::EvidenceDoc>& docs,
                                        const std::string& query, std::size_t k, double k1,
                                        double b, bool date_filter,
                                        std::optional<claimcheck::CalendarDate> as_of) {
    std::vector<std::vector<std::string>> doc_terms;
    for (const auto& d : docs) doc_terms.push_back(claimcheck::text::tokenize(d.text));
    const auto query_terms = claimcheck::text::tokenize(query);

    std::vector<ScoredDoc> scored;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (date_filter && as_of && docs[i].published && *docs[i].published > *as_of) continue;
        scored.push_back({docs[i].id, bm25_one_doc(query_terms, doc_terms[i], doc_terms, k1, b)});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& c) {
        if (a.score != c.score) return a.score > c.score;
        return a.id < c.id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

// ---------------------------------------------------------------------------
// Character n-gram overlap metrics.
// ---------------------------------------------------------------------------

inline std::map<std::vector<char32_t>, std::size_t> grams(const std::vector<char32_t>& cps,
                                                          std::size_t n) {
    std::map<std::vector<char32_t>, std::size_t> out;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
        ++out[std::vector<char32_t>(cps.begin() + i, cps.begin() + i + n)];
    }
    return out;
}

inline std::size_t overlap(const std::map<std::vector<char32_t>, std::size_t>& a,
                           const std::map<std::vector<char32_t>, std::size_t>& b) {
    std::size_t total = 0;
    for (const auto& [gram, count] : a) {
        auto it = b.find(gram);
        if (it != b.end()) total += std::min(count, it->second);
    }
    return total;
}

inline double bleu4(const std::string& candidate, const std::string& reference) {
    const auto cand = claimcheck::text::decode_utf8(candidate);
    const auto ref = claimcheck::text::decode_utf8(reference);
    if (cand.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const std::size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
        const std::size_t matched = overlap(grams(cand, n), grams(ref, n));
        const double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                                     : 1.0 / static_cast<double>(total + 1);
        log_sum += std::log(p) / 4.0;
    }
    const double bp =
        cand.size() >= ref.size()
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
    return bp * std::exp(log_sum);
}

// The exact value the add-one smoothing yields when nothing matches.
inline double bleu4_smoothing_floor(std::size_t candidate_len) {
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const std::size_t total = candidate_len >= n ? candidate_len - n + 1 : 0;
        log_sum += std::log(1.0 / static_cast<double>(total + 1)) / 4.0;
    }
    return std::exp(log_sum);
}

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline double rouge_n(const std::string& candidate, const std::string& reference,
                      std::size_t n) {
    const auto cand = claimcheck::text::decode_utf8(candidate);
    const auto ref = claimcheck::text::decode_utf8(reference);
    if (cand.size() < n || ref.size() < n) return 0.0;
    const auto matched = static_cast<double>(overlap(grams(cand, n), grams(ref, n)));
    return f1(matched / static_cast<double>(cand.size() - n + 1),
              matched / static_cast<double>(ref.size() - n + 1));
}

inline std::size_t lcs(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
    std::vector<std::vector<std::size_t>> dp(a.size() + 1,
                                             std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                            : std::max(dp[i - 1][j], dp[i][j - 1]);
        }
    }
    return dp[a.size()][b.size()];
}

inline double rouge_l(const std::string& candidate, const std::string& reference) {
    const auto cand = claimcheck::text::decode_utf8(candidate);
    const auto ref = claimcheck::text::decode_utf8(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    const auto l = static_cast<double>(lcs(cand, ref));
    return f1(l / static_cast<double>(cand.size()), l / static_cast<double>(ref.size()));
}

// ---------------------------------------------------------------------------
// Confusion-matrix classification metrics over the three labels.
// ---------------------------------------------------------------------------

struct Classification {
    double accuracy;
    double f1_macro;
    double precision_macro;
    double recall_macro;
};

inline Classification classify(const std::vector<claimcheck::Label>& preds,
                               const std::vector<claimcheck::Label>& golds) {
    using claimcheck::Label;
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == golds[i]) acc += 1.0;
    }
    acc /= static_cast<double>(preds.size());

    double p_sum = 0.0;
    double r_sum = 0.0;
    double f_sum = 0.0;
    for (Label c : {Label::kSup, Label::kRef, Label::kNei}) {
        double tp = 0.0;
        double pred_c = 0.0;
        double gold_c = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == c && golds[i] == c) tp += 1.0;
            if (preds[i] == c) pred_c += 1.0;
            if (golds[i] == c) gold_c += 1.0;
        }
        const double p = pred_c > 0 ? tp / pred_c : 0.0;
        const double r = gold_c > 0 ? tp / gold_c : 0.0;
        p_sum += p;
        r_sum += r;
        f_sum += f1(p, r);
    }
    return {acc, f_sum / 3.0, p_sum / 3.0, r_sum / 3.0};
}

}  // namespace oracle

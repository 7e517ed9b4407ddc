#include "claimcheck/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "claimcheck/error.hpp"
#include "claimcheck/text.hpp"

namespace claimcheck {

using nlohmann::ordered_json;

namespace {

constexpr Label kAllLabels[] = {Label::kSup, Label::kRef, Label::kNei};

std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }

}  // namespace

ClassificationMetrics classification_metrics(const std::vector<Label>& preds,
                                             const std::vector<Label>& golds) {
    if (preds.size() != golds.size()) {
        throw_validation("classification metrics need aligned predictions and golds");
    }
    if (preds.empty()) throw_validation("classification metrics over an empty set");

    double tp[3] = {0, 0, 0};
    double fp[3] = {0, 0, 0};
    double fn[3] = {0, 0, 0};
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == golds[i]) {
            ++correct;
            ++tp[label_index(preds[i])];
        } else {
            ++fp[label_index(preds[i])];
            ++fn[label_index(golds[i])];
        }
    }

    ClassificationMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    for (Label l : kAllLabels) {
        const std::size_t c = label_index(l);
        const double p = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
        const double r = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
        const double f1 = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
        m.precision_macro += p;
        m.recall_macro += r;
        m.f1_macro += f1;
    }
    m.precision_macro /= 3.0;
    m.recall_macro /= 3.0;
    m.f1_macro /= 3.0;
    return m;
}

namespace {

// Codepoint n-gram counts; the key is the UTF-8 encoding of the gram.
std::unordered_map<std::string, std::size_t> ngram_counts(const std::vector<char32_t>& cps,
                                                          std::size_t n) {
    std::unordered_map<std::string, std::size_t> counts;
    if (cps.size() < n) return counts;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) text::append_utf8(key, cps[i + j]);
        ++counts[key];
    }
    return counts;
}

std::size_t clipped_matches(const std::unordered_map<std::string, std::size_t>& cand,
                            const std::unordered_map<std::string, std::size_t>& ref) {
    std::size_t matches = 0;
    for (const auto& [gram, count] : cand) {
        auto it = ref.find(gram);
        if (it != ref.end()) matches += std::min(count, it->second);
    }
    return matches;
}

std::size_t lcs_length(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double f1_of(double precision, double recall) {
    return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace

double bleu4(const std::string& candidate, const std::string& reference) {
    const auto cand = text::decode_utf8(candidate);
    const auto ref = text::decode_utf8(reference);
    if (cand.empty()) return 0.0;

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand_counts = ngram_counts(cand, n);
        const auto ref_counts = ngram_counts(ref, n);
        const std::size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
        const std::size_t matches = clipped_matches(cand_counts, ref_counts);
        // Add-one smoothing only where the raw count is zero.
        const double p = matches > 0
                             ? static_cast<double>(matches) / static_cast<double>(total)
                             : 1.0 / static_cast<double>(total + 1);
        log_sum += 0.25 * std::log(p);
    }
    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return brevity * std::exp(log_sum);
}

double rouge(const std::string& candidate, const std::string& reference, RougeVariant variant) {
    const auto cand = text::decode_utf8(candidate);
    const auto ref = text::decode_utf8(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    if (variant == RougeVariant::kL) {
        const double lcs = static_cast<double>(lcs_length(cand, ref));
        return f1_of(lcs / static_cast<double>(cand.size()),
                     lcs / static_cast<double>(ref.size()));
    }
    const std::size_t n = variant == RougeVariant::k1 ? 1 : 2;
    if (cand.size() < n || ref.size() < n) return 0.0;
    const auto cand_counts = ngram_counts(cand, n);
    const auto ref_counts = ngram_counts(ref, n);
    const double matches = static_cast<double>(clipped_matches(cand_counts, ref_counts));
    const double cand_total = static_cast<double>(cand.size() - n + 1);
    const double ref_total = static_cast<double>(ref.size() - n + 1);
    return f1_of(matches / cand_total, matches / ref_total);
}

EcsLevel ecs_level(Label gold, Label pred, ConsistencyTier tier) {
    if (gold == pred) {
        switch (tier) {
            case ConsistencyTier::kFull: return {5};
            case ConsistencyTier::kPartial: return {4};
            case ConsistencyTier::kDivergent: return {3};
        }
    }
    return tier == ConsistencyTier::kDivergent ? EcsLevel{1} : EcsLevel{2};
}

namespace {

std::string ascii_lower_copy(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

const std::vector<std::string>& polarity_keywords(Label label) {
    static const std::vector<std::string> sup = {"support", "true",   "correct", "accurate",
                                                 "属实",    "正确",   "支持",    "真实"};
    static const std::vector<std::string> ref = {"refut", "false", "incorrect", "wrong", "虚假",
                                                 "错误",  "不实",  "谣言"};
    static const std::vector<std::string> nei = {"not enough",    "insufficient", "unverifi",
                                                 "cannot verify", "无法确定",     "证据不足",
                                                 "无法核实"};
    switch (label) {
        case Label::kSup: return sup;
        case Label::kRef: return ref;
        case Label::kNei: return nei;
    }
    return nei;
}

bool contains_polarity_keyword(Label label, const std::string& explanation) {
    const std::string lowered = ascii_lower_copy(explanation);
    for (const auto& kw : polarity_keywords(label)) {
        if (lowered.find(kw) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

ConsistencyTier RuleBasedJudge::assess(Label gold, const std::string& gold_explanation,
                                       const std::string& predicted_explanation) {
    const bool keyword = contains_polarity_keyword(gold, predicted_explanation);
    if (gold_explanation.empty()) {
        // No reference text: consistency is judged against the label alone.
        return keyword ? ConsistencyTier::kFull : ConsistencyTier::kDivergent;
    }
    const double overlap = rouge(predicted_explanation, gold_explanation, RougeVariant::kL);
    if (keyword && overlap >= 0.5) return ConsistencyTier::kFull;
    if (overlap >= 0.2) return ConsistencyTier::kPartial;
    return ConsistencyTier::kDivergent;
}

EcsLevel ecs_score(Label gold, Label pred, const std::string& gold_explanation,
                   const std::string& predicted_explanation, EcsJudge& judge) {
    return ecs_level(gold, pred, judge.assess(gold, gold_explanation, predicted_explanation));
}

void InfluenceWeights::validate() const {
    for (double w : {alpha, beta, kappa, lambda}) {
        if (w < 0.0) throw_validation("influence weights must be non-negative");
    }
    if (std::abs(alpha + beta + kappa + lambda - 1.0) > 1e-9) {
        throw_validation("influence weights must sum to 1");
    }
}

namespace {

double percentile25(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double q = 0.25 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(q);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = q - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

}  // namespace

HotspotImputes compute_imputes(const std::vector<ClaimSample>& samples) {
    std::vector<double> views;
    std::vector<double> discussions;
    std::vector<double> engagements;
    std::vector<double> posts;
    for (const auto& s : samples) {
        if (!s.hotspot) continue;
        if (s.hotspot->views) views.push_back(static_cast<double>(*s.hotspot->views));
        if (s.hotspot->discussions) {
            discussions.push_back(static_cast<double>(*s.hotspot->discussions));
        }
        if (s.hotspot->engagements) {
            engagements.push_back(static_cast<double>(*s.hotspot->engagements));
        }
        if (s.hotspot->posts) posts.push_back(static_cast<double>(*s.hotspot->posts));
    }
    return {percentile25(std::move(views)), percentile25(std::move(discussions)),
            percentile25(std::move(engagements)), percentile25(std::move(posts))};
}

double influence_value(double risk, double views, double discussions, double engagements,
                       double posts, const InfluenceWeights& weights) {
    weights.validate();
    for (double v : {views, discussions, engagements, posts}) {
        if (v < 0.0) throw_validation("hotspot counts must be non-negative");
    }
    return risk * (weights.alpha * std::log1p(views) + weights.beta * std::log1p(discussions) +
                   weights.kappa * std::log1p(engagements) + weights.lambda * std::log1p(posts));
}

double influence(const ClaimSample& sample, const InfluenceWeights& weights,
                 const HotspotImputes& imputes) {
    auto pick = [&](const std::optional<long long>& field, double impute) {
        if (!sample.hotspot || !field) return impute;
        if (*field < 0) throw_validation("negative hotspot count on claim \"" + sample.id + "\"");
        return static_cast<double>(*field);
    };
    const double v = pick(sample.hotspot ? sample.hotspot->views : std::nullopt, imputes.views);
    const double d = pick(sample.hotspot ? sample.hotspot->discussions : std::nullopt,
                          imputes.discussions);
    const double e = pick(sample.hotspot ? sample.hotspot->engagements : std::nullopt,
                          imputes.engagements);
    const double p = pick(sample.hotspot ? sample.hotspot->posts : std::nullopt, imputes.posts);
    return influence_value(static_cast<double>(sample.risk_index.value_or(1)), v, d, e, p,
                           weights);
}

std::vector<double> scale_influence(const std::vector<double>& raw) {
    if (raw.empty()) throw_validation("scale_influence over an empty list");
    double max = 0.0;
    for (double v : raw) {
        if (v < 0.0) throw_validation("influence scores must be non-negative");
        max = std::max(max, v);
    }
    if (max <= 0.0) return std::vector<double>(raw.size(), 1.0);
    const double floor = max / 10.0;
    std::vector<double> out;
    out.reserve(raw.size());
    for (double v : raw) out.push_back(std::max(v, floor));
    return out;
}

double hcpi(const std::vector<Label>& golds, const std::vector<Label>& preds,
            const std::vector<double>& ecs_normalized, const std::vector<double>& influences) {
    const std::size_t n = golds.size();
    if (preds.size() != n || ecs_normalized.size() != n || influences.size() != n) {
        throw_validation("hcpi needs aligned golds, predictions, ECS and influences");
    }
    double numerator = 0.0;
    double denominator = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double inf = influences[i];
        denominator += inf;
        switch (golds[i]) {
            case Label::kSup:
                if (preds[i] == Label::kSup) numerator += inf * ecs_normalized[i];
                if (preds[i] == Label::kRef) numerator += -2.0 * inf;
                break;
            case Label::kRef:
                if (preds[i] == Label::kRef) numerator += inf * ecs_normalized[i];
                break;
            case Label::kNei:
                if (preds[i] == Label::kRef) numerator += -inf;
                if (preds[i] == Label::kNei) numerator += inf * ecs_normalized[i];
                break;
        }
    }
    if (denominator == 0.0) throw_validation("hcpi denominator is zero");
    return numerator / denominator;
}

MetricReport build_report(const std::vector<ClaimSample>& samples,
                          const std::vector<VerdictRecord>& predictions,
                          const std::unordered_map<std::string, RankedList>* rankings,
                          const ReportOptions& options) {
    if (samples.empty()) throw_validation("cannot evaluate an empty sample set");

    std::unordered_map<std::string, const VerdictRecord*> by_id;
    for (const auto& p : predictions) by_id.emplace(p.claim_id, &p);
    std::string missing;
    for (const auto& s : samples) {
        if (!by_id.contains(s.id)) missing += missing.empty() ? s.id : ", " + s.id;
    }
    if (!missing.empty()) throw_validation("no prediction for claim ids: " + missing);

    MetricReport report;
    report.samples = samples.size();

    std::vector<Label> golds;
    std::vector<Label> preds;
    golds.reserve(samples.size());
    preds.reserve(samples.size());
    for (const auto& s : samples) {
        golds.push_back(s.label);
        preds.push_back(by_id.at(s.id)->predicted);
    }
    report.classification = classification_metrics(preds, golds);

    // Overlap metrics only make sense against annotated explanations.
    double bleu_sum = 0.0;
    double r1_sum = 0.0;
    double r2_sum = 0.0;
    double rl_sum = 0.0;
    for (const auto& s : samples) {
        if (s.explanation.empty()) continue;
        const std::string& cand = by_id.at(s.id)->explanation;
        bleu_sum += bleu4(cand, s.explanation);
        r1_sum += rouge(cand, s.explanation, RougeVariant::k1);
        r2_sum += rouge(cand, s.explanation, RougeVariant::k2);
        rl_sum += rouge(cand, s.explanation, RougeVariant::kL);
        ++report.explanation_eval_count;
    }
    if (report.explanation_eval_count > 0) {
        const auto n = static_cast<double>(report.explanation_eval_count);
        report.bleu4 = bleu_sum / n;
        report.rouge1 = r1_sum / n;
        report.rouge2 = r2_sum / n;
        report.rougeL = rl_sum / n;
    }

    // Per-sample ECS, then influence-weighted HCPI over the scored samples.
    RuleBasedJudge fallback_judge;
    EcsJudge& judge = options.judge ? *options.judge : fallback_judge;
    std::vector<double> ecs_values(samples.size(), 0.0);
    std::vector<bool> scored(samples.size(), true);
    double ecs_sum = 0.0;
    std::size_t ecs_count = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const auto& p = *by_id.at(s.id);
        if (options.fixed_ecs) {
            ecs_values[i] = *options.fixed_ecs;
        } else {
            try {
                const EcsLevel level = ecs_score(s.label, p.predicted, s.explanation,
                                                 p.explanation, judge);
                ecs_values[i] = level.normalized();
                ++report.ecs_histogram[level.level];
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::kValidation) throw;
                scored[i] = false;
                ++report.ecs_unscored;
                continue;
            }
        }
        ecs_sum += ecs_values[i];
        ++ecs_count;
    }
    report.ecs_mean = ecs_count > 0 ? ecs_sum / static_cast<double>(ecs_count) : 0.0;

    const HotspotImputes imputes = compute_imputes(samples);
    std::vector<double> raw_influence;
    raw_influence.reserve(samples.size());
    for (const auto& s : samples) raw_influence.push_back(influence(s, options.weights, imputes));
    const std::vector<double> scaled = scale_influence(raw_influence);

    std::vector<Label> h_golds;
    std::vector<Label> h_preds;
    std::vector<double> h_ecs;
    std::vector<double> h_inf;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!scored[i]) continue;
        h_golds.push_back(golds[i]);
        h_preds.push_back(preds[i]);
        h_ecs.push_back(ecs_values[i]);
        h_inf.push_back(scaled[i]);
    }
    if (!h_golds.empty()) report.hcpi = hcpi(h_golds, h_preds, h_ecs, h_inf);

    if (rankings != nullptr) {
        for (int k : options.recall_ks) {
            report.recall_at[k] = recall_at_k(*rankings, samples,
                                              static_cast<std::size_t>(k), options.strict_recall);
        }
    }
    return report;
}

void save_report(const MetricReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write " + path);
    ordered_json j;
    j["samples"] = report.samples;
    j["accuracy"] = report.classification.accuracy;
    j["f1_macro"] = report.classification.f1_macro;
    j["precision_macro"] = report.classification.precision_macro;
    j["recall_macro"] = report.classification.recall_macro;
    j["bleu4"] = report.bleu4;
    j["rouge1"] = report.rouge1;
    j["rouge2"] = report.rouge2;
    j["rougeL"] = report.rougeL;
    j["explanation_eval_count"] = report.explanation_eval_count;
    j["ecs_mean"] = report.ecs_mean;
    ordered_json hist = ordered_json::object();
    for (const auto& [level, count] : report.ecs_histogram) {
        hist[std::to_string(level)] = count;
    }
    j["ecs_histogram"] = hist;
    j["ecs_unscored"] = report.ecs_unscored;
    j["hcpi"] = report.hcpi;
    ordered_json rk = ordered_json::object();
    for (const auto& [k, v] : report.recall_at) rk[std::to_string(k)] = v;
    j["recall_at"] = rk;
    out << j.dump(2) << '\n';
}

MetricReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_validation("report file not found: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw_validation(path + ": malformed report: " + e.what());
    }
    MetricReport r;
    r.samples = j.at("samples").get<std::size_t>();
    r.classification.accuracy = j.at("accuracy").get<double>();
    r.classification.f1_macro = j.at("f1_macro").get<double>();
    r.classification.precision_macro = j.at("precision_macro").get<double>();
    r.classification.recall_macro = j.at("recall_macro").get<double>();
    r.bleu4 = j.at("bleu4").get<double>();
    r.rouge1 = j.at("rouge1").get<double>();
    r.rouge2 = j.at("rouge2").get<double>();
    r.rougeL = j.at("rougeL").get<double>();
    r.explanation_eval_count = j.at("explanation_eval_count").get<std::size_t>();
    r.ecs_mean = j.at("ecs_mean").get<double>();
    for (const auto& [key, value] : j.at("ecs_histogram").items()) {
        r.ecs_histogram[std::stoi(key)] = value.get<std::size_t>();
    }
    r.ecs_unscored = j.at("ecs_unscored").get<std::size_t>();
    r.hcpi = j.at("hcpi").get<double>();
    for (const auto& [key, value] : j.at("recall_at").items()) {
        r.recall_at[std::stoi(key)] = value.get<double>();
    }
    return r;
}

std::string format_report(const MetricReport& report) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "samples          " << report.samples << '\n';
    out << "accuracy         " << report.classification.accuracy << '\n';
    out << "f1_macro         " << report.classification.f1_macro << '\n';
    out << "precision_macro  " << report.classification.precision_macro << '\n';
    out << "recall_macro     " << report.classification.recall_macro << '\n';
    out << "bleu4            " << report.bleu4 << '\n';
    out << "rouge1           " << report.rouge1 << '\n';
    out << "rouge2           " << report.rouge2 << '\n';
    out << "rougeL           " << report.rougeL << '\n';
    out << "ecs_mean         " << report.ecs_mean << '\n';
    out << "hcpi             " << report.hcpi << '\n';
    for (const auto& [k, v] : report.recall_at) {
        out << "recall@" << k << "         " << v << '\n';
    }
    if (report.ecs_unscored > 0) {
        out << "ecs_unscored     " << report.ecs_unscored << '\n';
    }
    return out.str();
}

}  // namespace claimcheck

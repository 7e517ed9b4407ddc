#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "claimcheck/corpus.hpp"
#include "claimcheck/pipeline.hpp"
#include "claimcheck/retrieval.hpp"

namespace claimcheck {

// ---------------------------------------------------------------------------
// Verification metrics.
// ---------------------------------------------------------------------------

struct ClassificationMetrics {
    double accuracy = 0.0;
    double f1_macro = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
};

// Macro averages over the three label classes. A class absent from both
// predictions and golds contributes 0 and the divisor stays 3.
ClassificationMetrics classification_metrics(const std::vector<Label>& preds,
                                             const std::vector<Label>& golds);

// ---------------------------------------------------------------------------
// Explanation overlap metrics, computed over Unicode codepoints so Chinese
// text needs no segmenter.
// ---------------------------------------------------------------------------

// Geometric mean of 1..4-gram modified precisions with add-one smoothing on
// zero counts, times the brevity penalty.
double bleu4(const std::string& candidate, const std::string& reference);

enum class RougeVariant { k1, k2, kL };

// F1 of n-gram overlap (1, 2) or of the longest common subsequence (L).
double rouge(const std::string& candidate, const std::string& reference, RougeVariant variant);

// ---------------------------------------------------------------------------
// Explanation consistency (5-level score).
// ---------------------------------------------------------------------------

enum class ConsistencyTier { kDivergent, kPartial, kFull };

// How a judge's tier composes with label correctness:
//   wrong label:   divergent -> 1, partial/full -> 2
//   correct label: divergent -> 3, partial -> 4, full -> 5
struct EcsLevel {
    int level = 1;  // 1..5
    double normalized() const { return static_cast<double>(level) / 5.0; }
};

EcsLevel ecs_level(Label gold, Label pred, ConsistencyTier tier);

// Explanation-consistency judge. The production judge is an LLM behind an
// HTTP endpoint; the rule-based one keeps offline runs self-contained.
class EcsJudge {
public:
    virtual ~EcsJudge() = default;
    virtual ConsistencyTier assess(Label gold, const std::string& gold_explanation,
                                   const std::string& predicted_explanation) = 0;
};

// Keyword + character-ROUGE-L heuristic: full consistency needs the gold
// label's polarity keyword and ROUGE-L >= 0.5; partial needs >= 0.2. An empty
// gold explanation is scored against the label keyword alone.
class RuleBasedJudge : public EcsJudge {
public:
    ConsistencyTier assess(Label gold, const std::string& gold_explanation,
                           const std::string& predicted_explanation) override;
};

// Asks an OpenAI-compatible chat endpoint to grade consistency with one word
// (full / partial / divergent). Unreachable or unparseable judge responses
// raise BackendError, which marks the sample unscored.
class LlmJudge : public EcsJudge {
public:
    LlmJudge(std::string base_url, std::string model, double timeout_s = 30.0,
             int max_retries = 3);
    ConsistencyTier assess(Label gold, const std::string& gold_explanation,
                           const std::string& predicted_explanation) override;

private:
    std::string base_url_;
    std::string model_;
    double timeout_s_;
    int max_retries_;
};

EcsLevel ecs_score(Label gold, Label pred, const std::string& gold_explanation,
                   const std::string& predicted_explanation, EcsJudge& judge);

// ---------------------------------------------------------------------------
// Influence and HCPI.
// ---------------------------------------------------------------------------

struct InfluenceWeights {
    double alpha = 0.05;  // views
    double beta = 0.2;    // discussions
    double kappa = 0.15;  // engagements
    double lambda = 0.6;  // posts

    void validate() const;  // non-negative, sum to 1
};

// 25th percentile of each hotspot field over its non-missing values
// (linear interpolation between closest ranks; 0 when a field is missing
// everywhere).
struct HotspotImputes {
    double views = 0.0;
    double discussions = 0.0;
    double engagements = 0.0;
    double posts = 0.0;
};

HotspotImputes compute_imputes(const std::vector<ClaimSample>& samples);

// risk * (alpha*ln(1+views) + beta*ln(1+discussions) + kappa*ln(1+engagements)
//         + lambda*ln(1+posts)); imputed fields may be fractional.
double influence_value(double risk, double views, double discussions, double engagements,
                       double posts, const InfluenceWeights& weights);

// Sample-level influence: missing fields imputed, absent risk = 1.
double influence(const ClaimSample& sample, const InfluenceWeights& weights,
                 const HotspotImputes& imputes);

// Floor-clamps values below max/10 so max/min <= 10; an all-zero input
// degenerates to all ones.
std::vector<double> scale_influence(const std::vector<double>& raw);

// Influence-weighted, consistency-modulated prediction score:
//   gold SUP: +Inf*ECS if predicted SUP, -2*Inf if predicted REF, else 0
//   gold REF: +Inf*ECS iff predicted REF, else 0
//   gold NEI: -Inf if predicted REF, +Inf*ECS if predicted NEI, else 0
// over the total influence mass. Bounded in [-2, 1].
double hcpi(const std::vector<Label>& golds, const std::vector<Label>& preds,
            const std::vector<double>& ecs_normalized, const std::vector<double>& influences);

// ---------------------------------------------------------------------------
// Aggregate report.
// ---------------------------------------------------------------------------

struct MetricReport {
    std::size_t samples = 0;
    ClassificationMetrics classification;
    double bleu4 = 0.0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    std::size_t explanation_eval_count = 0;  // rows with a gold explanation
    double ecs_mean = 0.0;
    std::map<int, std::size_t> ecs_histogram;  // level -> count
    std::size_t ecs_unscored = 0;              // judge failures
    double hcpi = 0.0;
    std::map<int, double> recall_at;  // k -> R@k; empty when skipped
};

struct ReportOptions {
    InfluenceWeights weights;
    std::vector<int> recall_ks = {1, 2, 3, 5};
    bool strict_recall = false;
    // Fixed ECS short-circuits the judge (useful for calibration runs);
    // otherwise `judge` is consulted per sample.
    std::optional<double> fixed_ecs;
    EcsJudge* judge = nullptr;  // nullptr -> RuleBasedJudge
};

MetricReport build_report(const std::vector<ClaimSample>& samples,
                          const std::vector<VerdictRecord>& predictions,
                          const std::unordered_map<std::string, RankedList>* rankings,
                          const ReportOptions& options = {});

void save_report(const MetricReport& report, const std::string& path);
MetricReport load_report(const std::string& path);
std::string format_report(const MetricReport& report);

}  // namespace claimcheck

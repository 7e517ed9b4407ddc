#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "claimcheck/corpus.hpp"
#include "claimcheck/decoding.hpp"
#include "claimcheck/retrieval.hpp"

namespace claimcheck {

// Six-part reasoning prompt: relevance -> initial label, key-information
// extraction, consistency -> refined label, explanation draft, conflict
// reflection question, final answer block. The markers are what the engine
// keys on; everything else is instruction text.
struct TriangulationTemplate {
    std::string evidence_sentinel = "[NEED_EVIDENCE]";
    std::string conflict_question =
        "Is there any conflict among the claim, the evidence, the label and the explanation? "
        "Answer \"yes\" or \"no\".";
    // Suffix of the conflict question used as the reward trigger source text.
    std::string trigger_tail = "Answer \"yes\" or \"no\".";
    std::string final_label_marker = "FINAL_LABEL:";
    std::string explanation_marker = "EXPLANATION:";
    std::string evidence_block_prefix = "[EVIDENCE ";
    std::string cap_notice =
        "[NO_FURTHER_EVIDENCE] No further evidence is available; conclude with the final "
        "answer now.";
    std::string reflection_cap_notice =
        "[REFLECTION_LIMIT] Maximum reflections reached; conclude with the final answer now.";

    void validate() const;  // markers pairwise distinct and non-empty
};

// Deterministic prompt text embedding the claim exactly once. Evidence bodies
// never appear here; they arrive later through injection.
std::string render_prompt(const ClaimSample& claim, const TriangulationTemplate& tmpl);

struct ParsedVerdict {
    Label label = Label::kNei;
    std::string explanation;
    bool conflict_resolved = false;
};

// Reads the LAST final-label marker (later reflections supersede earlier
// conclusions), the explanation under the last explanation marker, and the
// last yes/no conflict answer. Throws ErrorKind::kParse when the transcript
// has no usable final block.
ParsedVerdict parse_verdict(const std::string& transcript, const TriangulationTemplate& tmpl);

// ---------------------------------------------------------------------------
// Dynamic evidence augmentation.
// ---------------------------------------------------------------------------

struct DeaCandidate {
    std::string evidence_id;
    std::string text;
};

enum class DeaActionKind { kContinue, kInject, kCapNotice };

struct DeaAction {
    DeaActionKind kind = DeaActionKind::kContinue;
    std::string evidence_id;
    std::string text;  // full splice text (evidence block or cap notice)
};

// Walks the initial ranking, one candidate per sentinel, truncating each body
// to the budget. After the cap (or when candidates run out) every further
// sentinel draws the fixed conclude-now notice.
class DeaState {
public:
    DeaState(std::vector<DeaCandidate> candidates, int cap, std::size_t budget_codepoints,
             const TriangulationTemplate& tmpl);

    // Scans emitted text for new sentinel occurrences; call until kContinue.
    DeaAction step(std::string_view emitted_text);

    int injections() const { return injections_; }
    std::size_t injected_chars() const { return injected_chars_; }
    const std::vector<std::string>& injected_ids() const { return injected_ids_; }

private:
    std::vector<DeaCandidate> candidates_;
    int cap_;
    std::size_t budget_;
    const TriangulationTemplate* tmpl_;
    std::size_t scan_pos_ = 0;
    int injections_ = 0;
    std::size_t injected_chars_ = 0;
    std::vector<std::string> injected_ids_;
};

// ---------------------------------------------------------------------------
// Per-claim orchestration.
// ---------------------------------------------------------------------------

struct VerdictRecord {
    std::string claim_id;
    Label predicted = Label::kNei;
    std::string explanation;
    bool conflict_resolved = false;
    std::vector<std::string> evidence_used;
    int reflections = 0;
    int dea_injections = 0;
    std::size_t injected_chars = 0;
    std::int64_t wall_ms = 0;

    enum class Fallback { kNone, kEmptyRetrieval, kUnparseable };
    Fallback fallback = Fallback::kNone;
};

struct PipelineCaps {
    int max_evidence = 3;
    std::size_t evidence_budget = 3000;  // codepoints per injected evidence
    int max_reflections = 3;
    std::size_t max_output_tokens = 5000;
    std::size_t max_input_codepoints = 16000;
    bool gold_evidence = false;  // bypass retrieval, use the annotated golds
    std::optional<DateMode> date_mode;
};

// Reward parameters expressed as text pieces; each backend interns them into
// its own token space (tokenizations differ across backends).
struct RewardPieces {
    double delta0 = 20.0;
    double gamma = 0.1;
    std::vector<std::string> trigger_pieces;  // empty -> template trigger tail as one piece
    std::vector<std::string> target_pieces = {"yes"};
};

RewardConfig resolve_reward_config(TokenBackend& backend, const TriangulationTemplate& tmpl,
                                   const RewardPieces& pieces, int max_reflections);

// When the context outgrows the input cap, the oldest injected evidence body
// is elided first; reasoning text is never dropped.
std::string elide_oldest_evidence(std::string context, const TriangulationTemplate& tmpl);

// Full FactISR pass for one claim: retrieve candidates, render the prompt,
// generate with DEA hooks + reward decoding, parse the verdict. Unparseable
// output is retried once, then falls back to NEI.
VerdictRecord run_claim(const ClaimSample& claim, const RetrievalIndex* index,
                        const EvidenceStore& store, TokenBackend& backend,
                        const TriangulationTemplate& tmpl, const RewardPieces& reward,
                        const PipelineCaps& caps);

void save_predictions(const std::vector<VerdictRecord>& records, const std::string& path,
                      bool zero_wall_ms = false);
std::vector<VerdictRecord> load_predictions(const std::string& path);

}  // namespace claimcheck

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace claimcheck {

using TokenId = std::int32_t;

// Next-token logits, keyed by token id. Remote backends may only expose the
// top-k slice; tokens absent from the map are treated as unreachable.
struct StepLogits {
    std::map<TokenId, double> values;

    bool operator==(const StepLogits&) const = default;
};

// Additive per-token logit bias attached to a backend request.
struct TokenBias {
    std::map<TokenId, double> add;

    bool empty() const { return add.empty(); }
};

struct RewardEvent {
    std::size_t step = 0;   // index of the rewarded output token
    int iteration = 0;      // trigger hit count before this event
    double magnitude = 0.0;  // delta0 * gamma^iteration
};

// Decayed affirmative-token reward: whenever the generated tail matches the
// trigger sequence, reward targets gain delta0 * gamma^i before the next
// greedy pick, where i counts trigger hits so far.
struct RewardConfig {
    double delta0 = 20.0;
    double gamma = 0.1;
    std::vector<TokenId> trigger;
    std::set<TokenId> reward_targets;
    int max_reflections = 3;

    void validate() const;  // 0 < gamma < 1, non-empty trigger and targets
};

class TokenBackend;

// Per-claim generation state. Owned by exactly one worker.
struct DecodeSession {
    std::vector<TokenId> generated;
    int trigger_hits = 0;
    int dea_injections = 0;
    int reflections = 0;
    std::size_t tokens_emitted = 0;
    bool rewards_enabled = true;
    std::vector<RewardEvent> rewards;
};

// True iff the last |trigger| tokens of `generated` equal the trigger.
// Mid-sequence occurrences do not count.
bool match_trigger(std::span<const TokenId> generated, std::span<const TokenId> trigger);

// Eq-style reward step: on a tail match (and rewards enabled), every reward
// target present in the logit map gains delta0 * gamma^i and the session's
// hit count advances; otherwise the logits come back untouched.
StepLogits apply_reward(StepLogits logits, DecodeSession& session, const RewardConfig& cfg);

// Argmax with ties broken by lowest token id.
TokenId greedy_step(const StepLogits& logits);

// ---------------------------------------------------------------------------
// Token-stream backend contract.
// ---------------------------------------------------------------------------

struct StreamStep {
    TokenId token = -1;
    std::string piece;
    std::optional<StepLogits> logits;  // present on logit-exposing backends
    bool end_of_stream = false;
};

// One generation stream per decode session. `context` is the caller-owned
// source of truth (prompt + emitted tokens + injected text); implementations
// must resynchronize when it diverges from their buffered continuation.
class TokenStream {
public:
    virtual ~TokenStream() = default;
    virtual StreamStep next(const std::string& context, const TokenBias& bias) = 0;
};

class TokenBackend {
public:
    // kLogits backends expose per-step logits and get true decayed rewards;
    // kTokenBias backends only accept an additive bias per request.
    enum class Tier { kLogits, kTokenBias };

    virtual ~TokenBackend() = default;
    virtual Tier tier() const = 0;
    virtual std::unique_ptr<TokenStream> start(const std::string& prompt) = 0;
    virtual TokenId intern(const std::string& piece) = 0;
    virtual std::string piece(TokenId id) const = 0;
};

const char* to_string(TokenBackend::Tier tier);

// ---------------------------------------------------------------------------
// Generation loop.
// ---------------------------------------------------------------------------

struct HookView {
    const std::string& emitted_text;  // model output so far, injections excluded
    const std::string& token_piece;
    TokenId token = -1;
    bool rewarded = false;  // a trigger hit biased this token's selection
    DecodeSession& session;
};

struct HookOutcome {
    bool stop = false;
    std::vector<std::string> inject_texts;  // spliced into the context, in order
};

using TokenHook = std::function<HookOutcome(const HookView&)>;

struct GenerateLimits {
    std::size_t max_output_tokens = 5000;
    // 0 disables context trimming; otherwise overflow_trim is applied when the
    // context exceeds this many codepoints.
    std::size_t max_context_codepoints = 0;
    std::function<std::string(std::string)> overflow_trim;
};

struct GenerateResult {
    std::vector<TokenId> tokens;
    std::string emitted_text;
    std::string final_context;
    DecodeSession session;
    bool length_capped = false;
    bool hook_stopped = false;
};

// Streams tokens from the backend under greedy selection with reward
// decoding. Hooks fire after every token and may splice text into the
// context (evidence injection) or stop the stream. Backend failures raise
// BackendError with the partial transcript attached.
GenerateResult generate(TokenBackend& backend, const std::string& prompt, const RewardConfig& cfg,
                        const TokenHook& hook = {}, const GenerateLimits& limits = {});

}  // namespace claimcheck

#include "claimcheck/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "claimcheck/error.hpp"
#include "claimcheck/text.hpp"

namespace claimcheck {

const char* to_string(TokenBackend::Tier tier) {
    return tier == TokenBackend::Tier::kLogits ? "logits" : "token-bias";
}

void RewardConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw_validation("reward gamma must lie in (0,1)");
    if (trigger.empty()) throw_validation("reward trigger sequence is empty");
    if (reward_targets.empty()) throw_validation("reward target set is empty");
    if (max_reflections < 0) throw_validation("max_reflections must be >= 0");
}

bool match_trigger(std::span<const TokenId> generated, std::span<const TokenId> trigger) {
    if (trigger.empty() || generated.size() < trigger.size()) return false;
    return std::equal(trigger.begin(), trigger.end(), generated.end() - trigger.size());
}

StepLogits apply_reward(StepLogits logits, DecodeSession& session, const RewardConfig& cfg) {
    if (!session.rewards_enabled || !match_trigger(session.generated, cfg.trigger)) {
        return logits;
    }
    const double magnitude = cfg.delta0 * std::pow(cfg.gamma, session.trigger_hits);
    for (TokenId target : cfg.reward_targets) {
        auto it = logits.values.find(target);
        if (it != logits.values.end()) it->second += magnitude;
    }
    session.rewards.push_back(
        {session.tokens_emitted, session.trigger_hits, magnitude});
    ++session.trigger_hits;
    return logits;
}

TokenId greedy_step(const StepLogits& logits) {
    if (logits.values.empty()) throw_internal("greedy_step over empty logits");
    auto best = logits.values.begin();
    for (auto it = std::next(best); it != logits.values.end(); ++it) {
        if (it->second > best->second) best = it;  // map order makes ties pick the lowest id
    }
    return best->first;
}

GenerateResult generate(TokenBackend& backend, const std::string& prompt, const RewardConfig& cfg,
                        const TokenHook& hook, const GenerateLimits& limits) {
    cfg.validate();
    GenerateResult result;
    DecodeSession& session = result.session;
    std::string context = prompt;
    std::string& emitted = result.emitted_text;

    auto stream = backend.start(prompt);
    const bool local_rewards = backend.tier() == TokenBackend::Tier::kLogits;
    // Reward decoding exists to force reflection passes; with none allowed
    // it stays off from the first token.
    session.rewards_enabled = cfg.max_reflections > 0;

    for (;;) {
        if (session.tokens_emitted >= limits.max_output_tokens) {
            result.length_capped = true;
            break;
        }

        const bool matched =
            session.rewards_enabled && match_trigger(session.generated, cfg.trigger);
        TokenBias bias;
        if (!local_rewards && matched) {
            const double magnitude = cfg.delta0 * std::pow(cfg.gamma, session.trigger_hits);
            for (TokenId target : cfg.reward_targets) bias.add[target] = magnitude;
        }

        StreamStep step;
        try {
            step = stream->next(context, bias);
        } catch (const BackendError& e) {
            throw BackendError(e.what(), emitted);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::kBackend) throw BackendError(e.what(), emitted);
            throw;
        }
        if (step.end_of_stream) break;

        TokenId token;
        bool rewarded = false;
        if (local_rewards) {
            if (!step.logits) throw_internal("logit-tier backend returned no logits");
            const int hits_before = session.trigger_hits;
            const StepLogits adjusted = apply_reward(*step.logits, session, cfg);
            rewarded = session.trigger_hits > hits_before;
            token = greedy_step(adjusted);
        } else {
            if (matched) {
                session.rewards.push_back({session.tokens_emitted, session.trigger_hits,
                                           bias.add.begin()->second});
                ++session.trigger_hits;
                rewarded = true;
            }
            token = step.token;
        }

        session.generated.push_back(token);
        ++session.tokens_emitted;
        const std::string piece = backend.piece(token);
        context += piece;
        emitted += piece;
        result.tokens.push_back(token);

        if (hook) {
            HookView view{emitted, piece, token, rewarded, session};
            HookOutcome outcome = hook(view);
            for (const auto& text : outcome.inject_texts) context += text;
            if (outcome.stop) {
                result.hook_stopped = true;
                break;
            }
        }

        if (limits.max_context_codepoints > 0 && limits.overflow_trim &&
            text::count_codepoints(context) > limits.max_context_codepoints) {
            context = limits.overflow_trim(std::move(context));
        }
    }

    result.final_context = std::move(context);
    return result;
}

}  // namespace claimcheck

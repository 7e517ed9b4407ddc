#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "claimcheck/backends.hpp"
#include "claimcheck/decoding.hpp"
#include "claimcheck/error.hpp"
#include "support/helpers.hpp"

using namespace claimcheck;
using testing_support::ScriptBuilder;

namespace {

RewardConfig config_for(MockBackend& backend, double delta0 = 20.0, double gamma = 0.1) {
    RewardConfig cfg;
    cfg.delta0 = delta0;
    cfg.gamma = gamma;
    cfg.trigger = {backend.intern("TRIGGER")};
    cfg.reward_targets = {backend.intern("yes")};
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// match_trigger.
// ---------------------------------------------------------------------------

TEST_CASE("match_trigger is suffix-only") {
    const std::vector<TokenId> trigger = {7, 8};
    SUBCASE("shorter than the trigger never matches") {
        const std::vector<TokenId> gen = {7};
        CHECK_FALSE(match_trigger(gen, trigger));
    }
    SUBCASE("exact tail match") {
        const std::vector<TokenId> gen = {1, 2, 7, 8};
        CHECK(match_trigger(gen, trigger));
    }
    SUBCASE("mid-sequence occurrence does not match") {
        const std::vector<TokenId> gen = {7, 8, 3};
        CHECK_FALSE(match_trigger(gen, trigger));
    }
    SUBCASE("empty trigger never matches") {
        const std::vector<TokenId> gen = {1};
        CHECK_FALSE(match_trigger(gen, std::vector<TokenId>{}));
    }
}

// ---------------------------------------------------------------------------
// apply_reward.
// ---------------------------------------------------------------------------

TEST_CASE("apply_reward adds the decayed bias on a trigger match") {
    RewardConfig cfg;
    cfg.delta0 = 20.0;
    cfg.gamma = 0.1;
    cfg.trigger = {5};
    cfg.reward_targets = {1};

    DecodeSession session;
    session.generated = {5};  // tail matches

    StepLogits logits;
    logits.values = {{1, 0.0}, {2, 3.0}};

    SUBCASE("first hit adds exactly 20") {
        const auto out = apply_reward(logits, session, cfg);
        CHECK(out.values.at(1) == 20.0);
        CHECK(out.values.at(2) == 3.0);
        CHECK(session.trigger_hits == 1);
        REQUIRE(session.rewards.size() == 1);
        CHECK(session.rewards[0].magnitude == 20.0);
    }
    SUBCASE("third hit adds 20 * 0.1^2 = 0.2") {
        session.trigger_hits = 2;
        const auto out = apply_reward(logits, session, cfg);
        CHECK(out.values.at(1) == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(session.trigger_hits == 3);
    }
    SUBCASE("no trigger leaves logits bit-identical") {
        session.generated = {4};
        const auto out = apply_reward(logits, session, cfg);
        CHECK(out == logits);
        CHECK(session.trigger_hits == 0);
        CHECK(session.rewards.empty());
    }
}

TEST_CASE("apply_reward touches only reward targets, by exactly delta0*gamma^i") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> logit(-5.0, 5.0);
    RewardConfig cfg;
    cfg.delta0 = 7.5;
    cfg.gamma = 0.5;
    cfg.trigger = {9};
    cfg.reward_targets = {2, 4};

    for (int hit = 0; hit < 6; ++hit) {
        StepLogits logits;
        for (TokenId t = 0; t < 8; ++t) logits.values[t] = logit(rng);
        DecodeSession session;
        session.generated = {9};
        session.trigger_hits = hit;
        const double expected = 7.5 * std::pow(0.5, hit);
        const auto out = apply_reward(logits, session, cfg);
        for (TokenId t = 0; t < 8; ++t) {
            if (cfg.reward_targets.contains(t)) {
                CHECK(out.values.at(t) == logits.values.at(t) + expected);
            } else {
                CHECK(out.values.at(t) == logits.values.at(t));
            }
        }
    }
}

TEST_CASE("apply_reward with delta0 = 0 is the identity on logits") {
    RewardConfig cfg;
    cfg.delta0 = 0.0;
    cfg.trigger = {1};
    cfg.reward_targets = {0};
    StepLogits logits;
    logits.values = {{0, 1.25}, {1, -0.5}};
    DecodeSession session;
    session.generated = {1};
    CHECK(apply_reward(logits, session, cfg) == logits);
}

TEST_CASE("total reward over many hits is bounded by delta0/(1-gamma)") {
    RewardConfig cfg;
    cfg.delta0 = 20.0;
    cfg.gamma = 0.1;
    cfg.trigger = {1};
    cfg.reward_targets = {0};
    DecodeSession session;
    session.generated = {1};
    StepLogits logits;
    logits.values = {{0, 0.0}};
    for (int i = 0; i < 200; ++i) logits = apply_reward(logits, session, cfg);
    const double bound = cfg.delta0 / (1.0 - cfg.gamma);
    CHECK(logits.values.at(0) <= bound);
    CHECK(logits.values.at(0) == doctest::Approx(bound).epsilon(1e-9));
    // Geometric decay: each event is gamma times the previous one.
    for (std::size_t i = 1; i < session.rewards.size(); ++i) {
        CHECK(session.rewards[i].magnitude ==
              doctest::Approx(session.rewards[i - 1].magnitude * cfg.gamma).epsilon(1e-12));
    }
}

TEST_CASE("reward config validation") {
    RewardConfig cfg;
    cfg.trigger = {1};
    cfg.reward_targets = {2};
    CHECK_NOTHROW(cfg.validate());
    SUBCASE("gamma at the boundaries is rejected") {
        cfg.gamma = 0.0;
        CHECK_THROWS_AS(cfg.validate(), Error);
        cfg.gamma = 1.0;
        CHECK_THROWS_AS(cfg.validate(), Error);
    }
    SUBCASE("empty trigger is rejected") {
        cfg.trigger.clear();
        CHECK_THROWS_AS(cfg.validate(), Error);
    }
    SUBCASE("empty target set is rejected") {
        cfg.reward_targets.clear();
        CHECK_THROWS_AS(cfg.validate(), Error);
    }
}

// ---------------------------------------------------------------------------
// greedy_step.
// ---------------------------------------------------------------------------

TEST_CASE("greedy_step picks the argmax, ties to the lowest id") {
    StepLogits logits;
    logits.values = {{3, 1.0}, {7, 0.5}};
    CHECK(greedy_step(logits) == 3);
    logits.values = {{3, 1.0}, {7, 1.0}};
    CHECK(greedy_step(logits) == 3);
    logits.values = {{9, 2.0}, {4, 1.0}};
    CHECK(greedy_step(logits) == 9);
    CHECK_THROWS_AS(greedy_step(StepLogits{}), Error);
}

TEST_CASE("greedy_step is invariant to a constant shift") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> logit(-10.0, 10.0);
    std::uniform_real_distribution<double> shift(-100.0, 100.0);
    for (int round = 0; round < 50; ++round) {
        StepLogits logits;
        for (TokenId t = 0; t < 12; ++t) logits.values[t] = logit(rng);
        const TokenId base = greedy_step(logits);
        StepLogits shifted = logits;
        const double c = shift(rng);
        for (auto& [t, v] : shifted.values) v += c;
        CHECK(greedy_step(shifted) == base);
    }
}

TEST_CASE("reward arithmetic decides the winner across hits") {
    // Target at 0.0 vs competitor at 5.0: the i=0 reward of 20 flips the
    // choice, the i=2 reward of 0.2 does not.
    RewardConfig cfg;
    cfg.delta0 = 20.0;
    cfg.gamma = 0.1;
    cfg.trigger = {5};
    cfg.reward_targets = {0};
    StepLogits logits;
    logits.values = {{0, 0.0}, {1, 5.0}};

    DecodeSession at_first;
    at_first.generated = {5};
    CHECK(greedy_step(apply_reward(logits, at_first, cfg)) == 0);

    DecodeSession at_third;
    at_third.generated = {5};
    at_third.trigger_hits = 2;
    CHECK(greedy_step(apply_reward(logits, at_third, cfg)) == 1);
}

// ---------------------------------------------------------------------------
// generate() over the scripted backend.
// ---------------------------------------------------------------------------

TEST_CASE("generate passes a script through verbatim when nothing triggers") {
    MockBackend backend(ScriptBuilder()
                            .emit("alpha ")
                            .emit("beta ")
                            .emit("gamma ")
                            .emit("delta ")
                            .emit("epsilon")
                            .build());
    const auto result = generate(backend, "prompt: ", config_for(backend));
    CHECK(result.emitted_text == "alpha beta gamma delta epsilon");
    CHECK(result.tokens.size() == 5);
    CHECK(result.session.trigger_hits == 0);
    CHECK_FALSE(result.length_capped);
    CHECK(result.final_context == "prompt: alpha beta gamma delta epsilon");
}

TEST_CASE("a trigger with margin below 20 forces the reward target") {
    // Script: ... TRIGGER, then "no" leads "yes" by 5. At i=0 the bias is 20,
    // so "yes" must win the greedy pick.
    MockBackend backend(
        ScriptBuilder().emit("thinking ").emit("TRIGGER").answer_no_by(5.0).build());
    const auto result = generate(backend, "", config_for(backend));
    CHECK(result.emitted_text == "thinking TRIGGERyes");
    CHECK(result.session.trigger_hits == 1);
    REQUIRE(result.session.rewards.size() == 1);
    CHECK(result.session.rewards[0].magnitude == 20.0);
}

TEST_CASE("on the fourth hit the decayed reward loses to a 1.0 margin") {
    ScriptBuilder script;
    for (int i = 0; i < 3; ++i) {
        script.emit("TRIGGER");
        script.answer_no_by(0.01);  // tiny margin: rewards at 20, 2, 0.2 all win
    }
    script.emit("TRIGGER");
    script.answer_no_by(1.0);  // i=3 reward 0.02 < 1.0: "no" wins, loop ends
    script.emit(" done");
    MockBackend backend(script.build());
    const auto result = generate(backend, "", config_for(backend));
    CHECK(result.session.trigger_hits == 4);
    const std::string& text = result.emitted_text;
    CHECK(text.find("no done") != std::string::npos);
    // The first three answers were forced to yes.
    std::size_t yes_count = 0;
    for (std::size_t pos = text.find("yes"); pos != std::string::npos;
         pos = text.find("yes", pos + 1)) {
        ++yes_count;
    }
    CHECK(yes_count == 3);
}

TEST_CASE("token-bias tier reproduces the logits-tier outcome") {
    auto make_script = [] {
        return ScriptBuilder()
            .emit("start ")
            .emit("TRIGGER")
            .answer_no_by(5.0)
            .emit(" rethink ")
            .emit("TRIGGER")
            .answer_no_by(5.0)  // i=1 reward 2 < 5: stays "no"
            .emit(" end")
            .build();
    };
    MockBackend logits_backend(make_script(), TokenBackend::Tier::kLogits);
    MockBackend bias_backend(make_script(), TokenBackend::Tier::kTokenBias);
    const auto a = generate(logits_backend, "p", config_for(logits_backend));
    const auto b = generate(bias_backend, "p", config_for(bias_backend));
    CHECK(a.emitted_text == b.emitted_text);
    CHECK(a.session.trigger_hits == b.session.trigger_hits);
    CHECK(a.emitted_text == "start TRIGGERyes rethink TRIGGERno end");
}

TEST_CASE("hooks can inject text and stop the stream") {
    MockBackend backend(ScriptBuilder()
                            .emit("one ")
                            .emit("two ")
                            .emit("three ")
                            .emit("four")
                            .build());
    int tokens_seen = 0;
    TokenHook hook = [&](const HookView& view) {
        HookOutcome out;
        ++tokens_seen;
        if (view.token_piece == "one ") out.inject_texts.push_back("[INJECTED]");
        if (view.token_piece == "three ") out.stop = true;
        return out;
    };
    const auto result = generate(backend, "p: ", config_for(backend), hook);
    CHECK(result.hook_stopped);
    CHECK(tokens_seen == 3);
    CHECK(result.emitted_text == "one two three ");
    CHECK(result.final_context == "p: one [INJECTED]two three ");
}

TEST_CASE("the output-length cap flags the result") {
    MockBackend backend(
        ScriptBuilder().emit("a").emit("b").emit("c").emit("d").emit("e").build());
    GenerateLimits limits;
    limits.max_output_tokens = 3;
    const auto result = generate(backend, "", config_for(backend), {}, limits);
    CHECK(result.length_capped);
    CHECK(result.tokens.size() == 3);
}

TEST_CASE("max_reflections = 0 disables rewards entirely") {
    MockBackend backend(ScriptBuilder().emit("TRIGGER").answer_no_by(5.0).build());
    auto cfg = config_for(backend);
    cfg.max_reflections = 0;
    const auto result = generate(backend, "", cfg);
    CHECK(result.emitted_text == "TRIGGERno");
    CHECK(result.session.trigger_hits == 0);
}

TEST_CASE("a multi-token trigger only fires on the full suffix") {
    MockBackend backend(ScriptBuilder()
                            .emit("any ")
                            .emit("conflict")
                            .emit("?")
                            .answer_no_by(5.0)
                            .build());
    RewardConfig cfg;
    cfg.trigger = {backend.intern("conflict"), backend.intern("?")};
    cfg.reward_targets = {backend.intern("yes")};
    const auto result = generate(backend, "", cfg);
    CHECK(result.session.trigger_hits == 1);
    CHECK(result.emitted_text == "any conflict?yes");
}

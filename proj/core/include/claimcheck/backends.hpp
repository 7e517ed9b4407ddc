#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "claimcheck/decoding.hpp"

namespace claimcheck {

// String piece <-> token id interning shared by a backend's streams.
class Vocabulary {
public:
    TokenId intern(const std::string& piece);
    std::string piece(TokenId id) const;
    std::optional<TokenId> lookup(const std::string& piece) const;

private:
    mutable std::mutex mu_;
    std::vector<std::string> pieces_;
    std::map<std::string, TokenId> ids_;
};

// ---------------------------------------------------------------------------
// Scripted mock backend. Deterministic by construction; used by every
// offline test.
// ---------------------------------------------------------------------------

struct MockStep {
    std::string token;  // what greedy decoding would emit unbiased
    std::vector<std::pair<std::string, double>> logits;
};

struct MockBranch {
    std::string needle;  // context substring that fires the branch
    std::string label;
};

// Script file format, one directive per line:
//   token | tokenA:logit,tokenB:logit,...
//   branch "substring" -> label
//   :label            (starts the step section named `label`)
// '#' starts a comment. Steps before the first section form the main path;
// a branch whose needle appears in the context jumps the cursor to its
// section (each branch fires at most once).
struct MockScript {
    std::vector<MockStep> main;
    std::map<std::string, std::vector<MockStep>> sections;
    std::vector<MockBranch> branches;

    static MockScript parse(const std::string& source);
    static MockScript parse_file(const std::string& path);
    void validate() const;
};

class MockBackend : public TokenBackend {
public:
    explicit MockBackend(MockScript script, Tier tier = Tier::kLogits);

    Tier tier() const override { return tier_; }
    std::unique_ptr<TokenStream> start(const std::string& prompt) override;
    TokenId intern(const std::string& piece) override { return vocab_.intern(piece); }
    std::string piece(TokenId id) const override { return vocab_.piece(id); }

    const MockScript& script() const { return script_; }

private:
    friend class MockStream;
    MockScript script_;
    Tier tier_;
    Vocabulary vocab_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible remote backend (chat/completions, streamed or per-token).
// ---------------------------------------------------------------------------

struct RemoteBackendConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000
    std::string model;
    double timeout_s = 60.0;
    TokenBackend::Tier tier = TokenBackend::Tier::kTokenBias;
    int max_retries = 3;  // total attempt budget
    int top_logprobs = 20;
    // Server-side tokenizer ids for pieces we need to bias; logit_bias keys
    // must be in the server's id space, not ours.
    std::map<std::string, long long> server_token_ids;
    std::string api_key_env = "CLAIMCHECK_API_KEY";

    void validate() const;
};

class RemoteBackend : public TokenBackend {
public:
    explicit RemoteBackend(RemoteBackendConfig config);
    ~RemoteBackend() override;

    Tier tier() const override { return config_.tier; }
    std::unique_ptr<TokenStream> start(const std::string& prompt) override;
    TokenId intern(const std::string& piece) override { return vocab_.intern(piece); }
    std::string piece(TokenId id) const override { return vocab_.piece(id); }

    const RemoteBackendConfig& config() const { return config_; }

private:
    friend class RemoteStream;
    RemoteBackendConfig config_;
    Vocabulary vocab_;
};

// `spec` is either "mock:<script path>" or a http(s) base URL.
std::unique_ptr<TokenBackend> make_backend(const std::string& spec,
                                           const RemoteBackendConfig& remote_defaults = {});

}  // namespace claimcheck

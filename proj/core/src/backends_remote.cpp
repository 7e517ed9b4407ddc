#include <chrono>
#include <cstdlib>
#include <deque>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "claimcheck/backends.hpp"
#include "claimcheck/error.hpp"

namespace claimcheck {

using nlohmann::json;

void RemoteBackendConfig::validate() const {
    if (base_url.empty()) throw_validation("remote backend needs a base URL");
    if (timeout_s <= 0.0) throw_validation("remote backend timeout must be positive");
    if (max_retries < 0) throw_validation("remote backend retries must be >= 0");
}

namespace {

struct ParsedUrl {
    std::string host_port;  // scheme://host:port, as httplib::Client wants it
    std::string path_prefix;
};

ParsedUrl split_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = base_url.find('/', host_start);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

bool retryable_status(int status) {
    return status == 429 || status >= 500;
}

}  // namespace

class RemoteStream : public TokenStream {
public:
    RemoteStream(RemoteBackend& backend, std::string prompt)
        : backend_(backend), expected_context_(std::move(prompt)) {}

    StreamStep next(const std::string& context, const TokenBias& bias) override {
        if (context != expected_context_ || bias.add != buffered_bias_) {
            // The caller spliced text in, overrode a token, or the reward
            // changed: the buffered continuation is stale.
            buffer_.clear();
            finished_ = false;
        }
        if (buffer_.empty() && !finished_) fill_buffer(context, bias);
        if (buffer_.empty()) {
            StreamStep end;
            end.end_of_stream = true;
            return end;
        }
        StreamStep step = std::move(buffer_.front());
        buffer_.pop_front();
        expected_context_ = context + step.piece;
        return step;
    }

private:
    void fill_buffer(const std::string& context, const TokenBias& bias) {
        const auto& cfg = backend_.config_;
        const bool per_token = cfg.tier == TokenBackend::Tier::kLogits;

        json body;
        body["model"] = cfg.model;
        body["messages"] = json::array({{{"role", "user"}, {"content", context}}});
        if (per_token) {
            body["max_tokens"] = 1;
            body["logprobs"] = true;
            body["top_logprobs"] = cfg.top_logprobs;
        } else {
            body["stream"] = true;
        }
        if (!bias.add.empty()) {
            json jb = json::object();
            for (const auto& [token, delta] : bias.add) {
                jb[std::to_string(server_id(token))] = delta;
            }
            body["logit_bias"] = std::move(jb);
        }

        const std::string response = post_with_retries(body.dump());
        if (per_token) {
            parse_single(response);
        } else {
            parse_sse(response);
        }
        buffered_bias_ = bias.add;
    }

    long long server_id(TokenId token) const {
        const std::string piece = backend_.vocab_.piece(token);
        auto it = backend_.config_.server_token_ids.find(piece);
        if (it != backend_.config_.server_token_ids.end()) return it->second;
        // Without a mapping the local id is all we have; callers that intern
        // true server ids up front get exact forwarding.
        return token;
    }

    std::string post_with_retries(const std::string& body) {
        const auto& cfg = backend_.config_;
        const ParsedUrl url = split_url(cfg.base_url);
        const int attempts = std::max(1, cfg.max_retries);
        std::string last_error;
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(50LL << (attempt - 2)));
            }
            httplib::Client client(url.host_port);
            client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
            client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
            httplib::Headers headers;
            if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
                headers.emplace("Authorization", std::string("Bearer ") + key);
            }
            auto res = client.Post(url.path_prefix + "/v1/chat/completions", headers, body,
                                   "application/json");
            if (!res) {
                last_error = "connection failed: " + httplib::to_string(res.error());
                continue;
            }
            if (retryable_status(res->status)) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw BackendError("backend returned HTTP " + std::to_string(res->status) + ": " +
                                   res->body);
            }
            return res->body;
        }
        throw BackendError("backend unreachable after " + std::to_string(attempts) +
                           " attempts (" + last_error + ")");
    }

    void parse_single(const std::string& body) {
        try {
            const json j = json::parse(body);
            const auto& choice = j.at("choices").at(0);
            const std::string finish =
                choice.value("finish_reason", std::string());
            if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
                const auto& content = choice.at("logprobs").at("content");
                if (!content.empty()) {
                    const auto& first = content.at(0);
                    StreamStep step;
                    step.piece = first.at("token").get<std::string>();
                    step.token = backend_.vocab_.intern(step.piece);
                    StepLogits logits;
                    logits.values[step.token] = first.at("logprob").get<double>();
                    if (first.contains("top_logprobs")) {
                        for (const auto& alt : first.at("top_logprobs")) {
                            logits.values[backend_.vocab_.intern(
                                alt.at("token").get<std::string>())] =
                                alt.at("logprob").get<double>();
                        }
                    }
                    step.logits = std::move(logits);
                    buffer_.push_back(std::move(step));
                }
            } else if (choice.contains("message")) {
                const std::string text = choice.at("message").value("content", std::string());
                if (!text.empty()) {
                    StreamStep step;
                    step.piece = text;
                    step.token = backend_.vocab_.intern(text);
                    buffer_.push_back(std::move(step));
                }
            }
            if (finish == "stop" || finish == "length" || buffer_.empty()) finished_ = true;
        } catch (const json::exception& e) {
            throw BackendError(std::string("malformed backend response: ") + e.what());
        }
    }

    void parse_sse(const std::string& body) {
        std::size_t pos = 0;
        try {
            while (pos < body.size()) {
                auto eol = body.find('\n', pos);
                if (eol == std::string::npos) eol = body.size();
                std::string line = body.substr(pos, eol - pos);
                pos = eol + 1;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.rfind("data:", 0) != 0) continue;
                std::string payload = line.substr(5);
                if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
                if (payload == "[DONE]") {
                    finished_ = true;
                    break;
                }
                const json j = json::parse(payload);
                const auto& choice = j.at("choices").at(0);
                if (choice.contains("delta") && choice.at("delta").contains("content")) {
                    const std::string piece =
                        choice.at("delta").at("content").get<std::string>();
                    if (!piece.empty()) {
                        StreamStep step;
                        step.piece = piece;
                        step.token = backend_.vocab_.intern(piece);
                        buffer_.push_back(std::move(step));
                    }
                }
                if (!choice.value("finish_reason", std::string()).empty()) finished_ = true;
            }
        } catch (const json::exception& e) {
            throw BackendError(std::string("malformed backend stream: ") + e.what());
        }
        if (buffer_.empty()) finished_ = true;
    }

    RemoteBackend& backend_;
    std::string expected_context_;
    std::deque<StreamStep> buffer_;
    std::map<TokenId, double> buffered_bias_;
    bool finished_ = false;
};

RemoteBackend::RemoteBackend(RemoteBackendConfig config) : config_(std::move(config)) {
    config_.validate();
    for (const auto& [piece, id] : config_.server_token_ids) vocab_.intern(piece);
}

RemoteBackend::~RemoteBackend() = default;

std::unique_ptr<TokenStream> RemoteBackend::start(const std::string& prompt) {
    return std::make_unique<RemoteStream>(*this, prompt);
}

std::unique_ptr<TokenBackend> make_backend(const std::string& spec,
                                           const RemoteBackendConfig& remote_defaults) {
    if (spec.rfind("mock:", 0) == 0) {
        return std::make_unique<MockBackend>(MockScript::parse_file(spec.substr(5)));
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        RemoteBackendConfig cfg = remote_defaults;
        cfg.base_url = spec;
        return std::make_unique<RemoteBackend>(std::move(cfg));
    }
    throw_validation("backend spec must be mock:<script> or an http(s) URL, got \"" + spec + "\"");
}

}  // namespace claimcheck

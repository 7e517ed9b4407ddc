#include <chrono>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "claimcheck/error.hpp"
#include "claimcheck/metrics.hpp"

namespace claimcheck {

using nlohmann::json;

LlmJudge::LlmJudge(std::string base_url, std::string model, double timeout_s, int max_retries)
    : base_url_(std::move(base_url)),
      model_(std::move(model)),
      timeout_s_(timeout_s),
      max_retries_(max_retries) {
    if (base_url_.empty()) throw_validation("LLM judge needs a base URL");
}

ConsistencyTier LlmJudge::assess(Label gold, const std::string& gold_explanation,
                                 const std::string& predicted_explanation) {
    std::string prompt;
    prompt += "Grade how consistent a generated fact-checking explanation is with the "
              "reference.\n";
    prompt += "Reference label: " + std::string(to_string(gold)) + "\n";
    prompt += "Reference explanation: " + gold_explanation + "\n";
    prompt += "Generated explanation: " + predicted_explanation + "\n";
    prompt += "Answer with exactly one word: full, partial or divergent.";

    json body;
    body["model"] = model_;
    body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
    body["max_tokens"] = 4;

    auto scheme_end = base_url_.find("://");
    const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = base_url_.find('/', host_start);
    const std::string host =
        path_start == std::string::npos ? base_url_ : base_url_.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    std::string last_error;
    const int attempts = std::max(1, max_retries_);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50LL << (attempt - 2)));
        }
        httplib::Client client(host);
        client.set_connection_timeout(std::chrono::duration<double>(timeout_s_));
        client.set_read_timeout(std::chrono::duration<double>(timeout_s_));
        auto res = client.Post(prefix + "/v1/chat/completions", body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed";
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendError("judge returned HTTP " + std::to_string(res->status));
        }
        try {
            const json j = json::parse(res->body);
            std::string answer =
                j.at("choices").at(0).at("message").value("content", std::string());
            for (char& c : answer) {
                c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            if (answer.find("full") != std::string::npos) return ConsistencyTier::kFull;
            if (answer.find("partial") != std::string::npos) return ConsistencyTier::kPartial;
            if (answer.find("diverg") != std::string::npos) return ConsistencyTier::kDivergent;
            throw BackendError("judge answer not in {full, partial, divergent}: " + answer);
        } catch (const json::exception& e) {
            throw BackendError(std::string("malformed judge response: ") + e.what());
        }
    }
    throw BackendError("judge unreachable after " + std::to_string(attempts) + " attempts (" +
                       last_error + ")");
}

}  // namespace claimcheck

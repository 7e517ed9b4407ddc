#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "claimcheck/backends.hpp"
#include "claimcheck/corpus.hpp"

namespace testing_support {

// Unique scratch directory, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("claimcheck_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline claimcheck::EvidenceDoc doc(std::string id, std::string text,
                                   std::optional<std::string> published = std::nullopt) {
    claimcheck::EvidenceDoc d;
    d.id = std::move(id);
    d.text = std::move(text);
    if (published) d.published = claimcheck::CalendarDate::parse(*published);
    return d;
}

inline claimcheck::ClaimSample claim(std::string id, std::string text, claimcheck::Label label,
                                     std::vector<std::string> golds) {
    claimcheck::ClaimSample s;
    s.id = std::move(id);
    s.claim = std::move(text);
    s.label = label;
    s.gold_evidence_ids = std::move(golds);
    return s;
}

// One-token-per-step script builder for decoding/pipeline tests.
class ScriptBuilder {
public:
    // The step's unbiased argmax is `token` with the given margin over every
    // listed competitor.
    ScriptBuilder& emit(const std::string& token, double logit = 5.0) {
        script_.main.push_back({token, {{token, logit}}});
        return *this;
    }
    ScriptBuilder& emit_with(const std::string& token,
                             std::vector<std::pair<std::string, double>> logits) {
        script_.main.push_back({token, std::move(logits)});
        return *this;
    }
    // Conflict answer step: "no" leads "yes" by `margin`.
    ScriptBuilder& answer_no_by(double margin) {
        script_.main.push_back({"no", {{"no", margin}, {"yes", 0.0}}});
        return *this;
    }
    claimcheck::MockScript build() const { return script_; }

private:
    claimcheck::MockScript script_;
};

// Deterministic random corpus generation for oracle-equivalence sweeps.
struct RandomCorpus {
    std::vector<claimcheck::EvidenceDoc> docs;
    std::vector<std::string> queries;
};

inline RandomCorpus random_corpus(std::mt19937& rng, std::size_t max_docs = 50,
                                  std::size_t max_queries = 10) {
    static const std::vector<std::string> ascii_pool = {
        "moon", "virus", "economy", "vaccine", "flood",  "policy",
        "bank", "storm", "market",  "fraud",   "energy", "river"};
    static const std::vector<std::string> cjk_pool = {"疫苗", "经济", "洪水", "政策",
                                                      "市场", "能源", "谣言", "调查"};

    std::uniform_int_distribution<std::size_t> n_docs(1, max_docs);
    std::uniform_int_distribution<std::size_t> n_queries(1, max_queries);
    std::uniform_int_distribution<std::size_t> n_words(1, 12);
    std::uniform_int_distribution<std::size_t> pick_ascii(0, ascii_pool.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_cjk(0, cjk_pool.size() - 1);
    std::uniform_int_distribution<int> coin(0, 3);
    std::uniform_int_distribution<int> year(2019, 2024);
    std::uniform_int_distribution<int> month(1, 12);
    std::uniform_int_distribution<int> day(1, 28);

    auto make_text = [&] {
        std::string text;
        const std::size_t words = n_words(rng);
        for (std::size_t w = 0; w < words; ++w) {
            if (!text.empty()) text += ' ';
            text += coin(rng) == 0 ? cjk_pool[pick_cjk(rng)] : ascii_pool[pick_ascii(rng)];
        }
        return text;
    };

    RandomCorpus corpus;
    const std::size_t docs = n_docs(rng);
    for (std::size_t i = 0; i < docs; ++i) {
        claimcheck::EvidenceDoc d;
        d.id = "d" + std::to_string(i);
        d.text = make_text();
        if (coin(rng) != 0) {
            d.published = claimcheck::CalendarDate{year(rng), month(rng), day(rng)};
        }
        corpus.docs.push_back(std::move(d));
    }
    const std::size_t queries = n_queries(rng);
    for (std::size_t q = 0; q < queries; ++q) corpus.queries.push_back(make_text());
    return corpus;
}

}  // namespace testing_support

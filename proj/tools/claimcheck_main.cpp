#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "claimcheck/backends.hpp"
#include "claimcheck/corpus.hpp"
#include "claimcheck/error.hpp"
#include "claimcheck/manifest.hpp"
#include "claimcheck/metrics.hpp"
#include "claimcheck/pipeline.hpp"
#include "claimcheck/retrieval.hpp"
#include "claimcheck/version.hpp"

namespace cc = claimcheck;
namespace fs = std::filesystem;

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

cc::RunManifest new_manifest(const std::string& command) {
    cc::RunManifest m;
    m.command = command;
    m.version = cc::kVersion;
    m.created_at = now_iso8601();
    return m;
}

// The manifest lands next to the command's primary output, also on failure.
struct ManifestGuard {
    cc::RunManifest manifest;
    std::string path;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void finish() {
        manifest.timings_ms["total"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                           std::chrono::steady_clock::now() - start)
                                           .count();
        if (!path.empty()) manifest.write(path);
    }
    void fail(const std::string& error) {
        manifest.error = error;
        finish();
    }
};

struct IngestArgs {
    std::string claims;
    std::string evidence;
    std::string out_dir;
};

int cmd_ingest(const IngestArgs& args) {
    ManifestGuard guard{new_manifest("ingest"),
                        (fs::path(args.out_dir) / "ingest.manifest.json").string()};
    guard.manifest.config = {{"claims", args.claims},
                             {"evidence", args.evidence},
                             {"out", args.out_dir}};
    try {
        fs::create_directories(args.out_dir);
        guard.manifest.add_input(args.claims);
        guard.manifest.add_input(args.evidence);

        const auto samples = cc::load_dataset(args.claims);
        const auto docs = cc::load_evidence_library(args.evidence);
        const cc::EvidenceStore store(docs);
        cc::check_evidence_links(samples, store);

        cc::save_dataset(samples, (fs::path(args.out_dir) / "claims.jsonl").string());
        cc::save_evidence_library(docs, (fs::path(args.out_dir) / "evidence.jsonl").string());
        guard.finish();
        std::cout << "ingested " << samples.size() << " claims, " << docs.size()
                  << " evidence docs into " << args.out_dir << "\n";
        return 0;
    } catch (const cc::Error& e) {
        guard.fail(e.what());
        throw;
    }
}

struct IndexArgs {
    std::string evidence;
    std::string out;
    double k1 = 1.2;
    double b = 0.75;
    std::string date_mode = "off";
};

int cmd_index(const IndexArgs& args) {
    ManifestGuard guard{new_manifest("index"), args.out + ".manifest.json"};
    guard.manifest.config = {{"evidence", args.evidence},
                             {"out", args.out},
                             {"k1", std::to_string(args.k1)},
                             {"b", std::to_string(args.b)},
                             {"date_mode", args.date_mode}};
    try {
        guard.manifest.add_input(args.evidence);
        const auto docs = cc::load_evidence_library(args.evidence);
        const auto index = cc::RetrievalIndex::build(
            docs, {args.k1, args.b}, cc::date_mode_from_string(args.date_mode));
        index.save(args.out);
        guard.finish();
        std::cout << "indexed " << index.size() << " docs -> " << args.out << "\n";
        return 0;
    } catch (const cc::Error& e) {
        guard.fail(e.what());
        throw;
    }
}

struct RetrieveArgs {
    std::string index;
    std::string claims;
    std::string out;
    std::size_t k = 5;
    std::string date_mode;  // empty -> index default
};

int cmd_retrieve(const RetrieveArgs& args) {
    ManifestGuard guard{new_manifest("retrieve"), args.out + ".manifest.json"};
    guard.manifest.config = {{"index", args.index},
                             {"claims", args.claims},
                             {"out", args.out},
                             {"k", std::to_string(args.k)},
                             {"date_mode", args.date_mode}};
    try {
        guard.manifest.add_input(args.index);
        guard.manifest.add_input(args.claims);
        const auto index = cc::RetrievalIndex::load(args.index);
        const auto samples = cc::load_dataset(args.claims);
        std::optional<cc::DateMode> mode;
        if (!args.date_mode.empty()) mode = cc::date_mode_from_string(args.date_mode);

        std::vector<cc::RankedList> rankings;
        rankings.reserve(samples.size());
        for (const auto& s : samples) {
            cc::RankedList r = index.search(s.claim, args.k, mode, s.claim_date);
            r.query_id = s.id;
            rankings.push_back(std::move(r));
        }
        cc::save_rankings(rankings, args.out);
        guard.finish();
        std::cout << "retrieved top-" << args.k << " for " << samples.size() << " claims -> "
                  << args.out << "\n";
        return 0;
    } catch (const cc::Error& e) {
        guard.fail(e.what());
        throw;
    }
}

struct VerifyArgs {
    std::string claims;
    std::string evidence;
    std::string index;
    std::string backend;
    std::string out;
    std::string model = "default";
    int max_evidence = 3;
    std::size_t evidence_budget = 3000;
    int max_reflections = 3;
    std::size_t max_output_tokens = 5000;
    double delta0 = 20.0;
    double gamma = 0.1;
    std::vector<std::string> trigger_pieces;
    std::vector<std::string> target_pieces = {"yes"};
    std::string date_mode;
    int parallel = 1;
    bool gold_evidence = false;
    bool resume = false;
    bool deterministic = false;
    std::string trace_dir;
    std::string backend_tier = "logits";
};

int cmd_verify(const VerifyArgs& args) {
    ManifestGuard guard{new_manifest("verify"), args.out + ".manifest.json"};
    guard.manifest.config = {{"claims", args.claims},
                             {"evidence", args.evidence},
                             {"index", args.index},
                             {"backend", args.backend},
                             {"max_evidence", std::to_string(args.max_evidence)},
                             {"evidence_budget", std::to_string(args.evidence_budget)},
                             {"max_reflections", std::to_string(args.max_reflections)},
                             {"delta0", std::to_string(args.delta0)},
                             {"gamma", std::to_string(args.gamma)},
                             {"parallel", std::to_string(args.parallel)},
                             {"gold_evidence", args.gold_evidence ? "true" : "false"},
                             {"deterministic", args.deterministic ? "true" : "false"}};
    try {
        guard.manifest.add_input(args.claims);
        guard.manifest.add_input(args.evidence);
        if (!args.index.empty()) guard.manifest.add_input(args.index);

        const auto samples = cc::load_dataset(args.claims);
        const cc::EvidenceStore store(cc::load_evidence_library(args.evidence));
        std::optional<cc::RetrievalIndex> index;
        if (!args.index.empty()) index = cc::RetrievalIndex::load(args.index);
        if (!index && !args.gold_evidence) {
            cc::throw_validation("verify needs --index unless --gold-evidence is set");
        }

        cc::RemoteBackendConfig remote;
        remote.model = args.model;
        remote.tier = args.backend_tier == "token-bias" ? cc::TokenBackend::Tier::kTokenBias
                                                        : cc::TokenBackend::Tier::kLogits;
        auto backend = cc::make_backend(args.backend, remote);

        cc::TriangulationTemplate tmpl;
        cc::RewardPieces reward;
        reward.delta0 = args.delta0;
        reward.gamma = args.gamma;
        reward.trigger_pieces = args.trigger_pieces;
        if (!args.target_pieces.empty()) reward.target_pieces = args.target_pieces;

        cc::PipelineCaps caps;
        caps.max_evidence = args.max_evidence;
        caps.evidence_budget = args.evidence_budget;
        caps.max_reflections = args.max_reflections;
        caps.max_output_tokens = args.max_output_tokens;
        caps.gold_evidence = args.gold_evidence;
        if (!args.date_mode.empty()) caps.date_mode = cc::date_mode_from_string(args.date_mode);

        std::unordered_set<std::string> done;
        std::vector<cc::VerdictRecord> existing;
        if (args.resume && fs::exists(args.out)) {
            existing = cc::load_predictions(args.out);
            for (const auto& r : existing) done.insert(r.claim_id);
        }

        std::vector<const cc::ClaimSample*> todo;
        for (const auto& s : samples) {
            if (!done.contains(s.id)) todo.push_back(&s);
        }

        std::vector<cc::VerdictRecord> fresh(todo.size());
        std::atomic<std::size_t> cursor{0};
        std::mutex error_mu;
        std::optional<cc::Error> first_error;
        auto worker = [&] {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= todo.size()) return;
                try {
                    fresh[i] = cc::run_claim(*todo[i], index ? &*index : nullptr, store, *backend,
                                             tmpl, reward, caps);
                } catch (const cc::Error& e) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = e;
                    return;
                }
            }
        };
        const int n_workers = std::max(1, args.parallel);
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (first_error) throw *first_error;

        // File order follows the claims file regardless of worker timing.
        std::vector<cc::VerdictRecord> all = std::move(existing);
        all.insert(all.end(), fresh.begin(), fresh.end());
        std::unordered_map<std::string, std::size_t> order;
        for (std::size_t i = 0; i < samples.size(); ++i) order[samples[i].id] = i;
        std::sort(all.begin(), all.end(),
                  [&](const cc::VerdictRecord& a, const cc::VerdictRecord& b) {
                      return order.at(a.claim_id) < order.at(b.claim_id);
                  });
        cc::save_predictions(all, args.out, args.deterministic);

        if (!args.trace_dir.empty()) {
            fs::create_directories(args.trace_dir);
            guard.manifest.traces.push_back(args.trace_dir);
        }
        guard.finish();
        std::cout << "verified " << fresh.size() << " claims (" << done.size() << " resumed) -> "
                  << args.out << "\n";
        return 0;
    } catch (const cc::Error& e) {
        guard.fail(e.what());
        throw;
    }
}

struct EvaluateArgs {
    std::string claims;
    std::string predictions;
    std::string rankings;
    std::string out;
    bool skip_retrieval = false;
    bool strict_recall = false;
    std::vector<double> weights;
    std::string ecs_mode = "fallback";  // fallback | fixed | judge
    double ecs_fixed = 1.0;
    std::string judge_url;
    std::string judge_model = "default";
};

int cmd_evaluate(const EvaluateArgs& args) {
    ManifestGuard guard{new_manifest("evaluate"), args.out + ".manifest.json"};
    guard.manifest.config = {{"claims", args.claims},
                             {"predictions", args.predictions},
                             {"rankings", args.rankings},
                             {"out", args.out},
                             {"ecs_mode", args.ecs_mode}};
    try {
        guard.manifest.add_input(args.claims);
        guard.manifest.add_input(args.predictions);
        if (!args.rankings.empty()) guard.manifest.add_input(args.rankings);

        const auto samples = cc::load_dataset(args.claims);
        const auto predictions = cc::load_predictions(args.predictions);

        std::optional<std::unordered_map<std::string, cc::RankedList>> rankings;
        if (!args.skip_retrieval) {
            if (args.rankings.empty()) {
                cc::throw_validation(
                    "evaluate needs --rankings or --skip-retrieval-metrics");
            }
            rankings = cc::load_rankings(args.rankings);
        }

        cc::ReportOptions options;
        if (!args.weights.empty()) {
            if (args.weights.size() != 4) {
                cc::throw_validation("--weights expects four values a,b,k,l");
            }
            options.weights = {args.weights[0], args.weights[1], args.weights[2],
                               args.weights[3]};
        }
        options.weights.validate();
        options.strict_recall = args.strict_recall;

        std::unique_ptr<cc::LlmJudge> llm_judge;
        if (args.ecs_mode == "fixed") {
            options.fixed_ecs = args.ecs_fixed;
        } else if (args.ecs_mode == "judge") {
            std::string url = args.judge_url;
            if (url.empty()) {
                if (const char* env = std::getenv("CLAIMCHECK_JUDGE_URL")) url = env;
            }
            if (url.empty()) {
                cc::throw_validation(
                    "--ecs-mode judge needs --judge-url or CLAIMCHECK_JUDGE_URL");
            }
            llm_judge = std::make_unique<cc::LlmJudge>(url, args.judge_model);
            options.judge = llm_judge.get();
        } else if (args.ecs_mode != "fallback") {
            cc::throw_validation("--ecs-mode must be fallback, fixed or judge");
        }

        const cc::MetricReport report =
            cc::build_report(samples, predictions, rankings ? &*rankings : nullptr, options);
        cc::save_report(report, args.out);
        guard.finish();
        std::cout << cc::format_report(report);
        std::cout << "report -> " << args.out << "\n";
        return 0;
    } catch (const cc::Error& e) {
        guard.fail(e.what());
        throw;
    }
}

int cmd_report(const std::string& path) {
    const cc::MetricReport report = cc::load_report(path);
    std::cout << cc::format_report(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fact-checking orchestration engine: evidence retrieval, reward-decoded "
                 "verification and metric reports"};
    app.set_version_flag("--version", cc::kVersion);
    app.set_config("--config", "", "TOML config file (flags override it)");
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Validate and store claims + evidence");
    ingest_cmd->add_option("--claims", ingest.claims, "claims.jsonl")->required();
    ingest_cmd->add_option("--evidence", ingest.evidence, "evidence.jsonl")->required();
    ingest_cmd->add_option("--out", ingest.out_dir, "output directory")->required();

    IndexArgs index;
    auto* index_cmd = app.add_subcommand("index", "Build the BM25 inverted index");
    index_cmd->add_option("--evidence", index.evidence, "evidence.jsonl")->required();
    index_cmd->add_option("--out", index.out, "index file")->required();
    index_cmd->add_option("--k1", index.k1, "BM25 k1");
    index_cmd->add_option("--b", index.b, "BM25 b");
    index_cmd->add_option("--date-mode", index.date_mode, "off|filter (default search mode)")
        ->check(CLI::IsMember({"off", "filter"}));

    RetrieveArgs retrieve;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank evidence per claim");
    retrieve_cmd->add_option("--index", retrieve.index, "index file")->required();
    retrieve_cmd->add_option("--claims", retrieve.claims, "claims.jsonl")->required();
    retrieve_cmd->add_option("--out", retrieve.out, "rankings.jsonl")->required();
    retrieve_cmd->add_option("--k", retrieve.k, "entries per claim");
    retrieve_cmd->add_option("--date-mode", retrieve.date_mode, "override index date mode")
        ->check(CLI::IsMember({"off", "filter"}));

    VerifyArgs verify;
    auto* verify_cmd = app.add_subcommand("verify", "Run the full verification pipeline");
    verify_cmd->add_option("--claims", verify.claims, "claims.jsonl")->required();
    verify_cmd->add_option("--evidence", verify.evidence, "evidence.jsonl")->required();
    verify_cmd->add_option("--index", verify.index, "index file");
    verify_cmd->add_option("--backend", verify.backend, "mock:<script> or http(s) URL")
        ->required();
    verify_cmd->add_option("--out", verify.out, "predictions.jsonl")->required();
    verify_cmd->add_option("--model", verify.model, "remote model name");
    verify_cmd->add_option("--max-evidence", verify.max_evidence, "retrieval/injection cap");
    verify_cmd->add_option("--evidence-budget", verify.evidence_budget,
                           "codepoints per injected evidence");
    verify_cmd->add_option("--max-reflections", verify.max_reflections, "reflection cap");
    verify_cmd->add_option("--max-output-tokens", verify.max_output_tokens, "output length cap");
    verify_cmd->add_option("--delta0", verify.delta0, "initial reward");
    verify_cmd->add_option("--gamma", verify.gamma, "reward decay in (0,1)");
    verify_cmd->add_option("--trigger-piece", verify.trigger_pieces,
                           "trigger token piece(s); default: template trigger tail");
    verify_cmd->add_option("--target-piece", verify.target_pieces,
                           "reward target token piece(s)");
    verify_cmd->add_option("--date-mode", verify.date_mode, "override index date mode")
        ->check(CLI::IsMember({"off", "filter"}));
    verify_cmd->add_option("--parallel", verify.parallel, "claim-level workers");
    verify_cmd->add_flag("--gold-evidence", verify.gold_evidence,
                         "bypass retrieval, use annotated golds");
    verify_cmd->add_flag("--resume", verify.resume, "skip claims already in the output");
    verify_cmd->add_flag("--deterministic", verify.deterministic,
                         "zero wall_ms in predictions for byte-stable output");
    verify_cmd->add_option("--trace-dir", verify.trace_dir, "per-claim trace directory");
    verify_cmd->add_option("--backend-tier", verify.backend_tier, "logits|token-bias")
        ->check(CLI::IsMember({"logits", "token-bias"}));

    EvaluateArgs evaluate;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Compute the metric report");
    evaluate_cmd->add_option("--claims", evaluate.claims, "claims.jsonl")->required();
    evaluate_cmd->add_option("--predictions", evaluate.predictions, "predictions.jsonl")
        ->required();
    evaluate_cmd->add_option("--rankings", evaluate.rankings, "rankings.jsonl");
    evaluate_cmd->add_option("--out", evaluate.out, "report.json")->required();
    evaluate_cmd->add_flag("--skip-retrieval-metrics", evaluate.skip_retrieval,
                           "omit R@k from the report");
    evaluate_cmd->add_flag("--strict-recall", evaluate.strict_recall,
                           "multi-evidence samples hit only when all golds retrieved");
    evaluate_cmd->add_option("--weights", evaluate.weights,
                             "influence weights a,b,k,l (sum to 1)")
        ->delimiter(',');
    evaluate_cmd->add_option("--ecs-mode", evaluate.ecs_mode, "fallback|fixed|judge");
    evaluate_cmd->add_option("--ecs-fixed", evaluate.ecs_fixed, "ECS value for --ecs-mode fixed");
    evaluate_cmd->add_option("--judge-url", evaluate.judge_url,
                             "judge endpoint (or CLAIMCHECK_JUDGE_URL)");
    evaluate_cmd->add_option("--judge-model", evaluate.judge_model, "judge model name");

    std::string report_path;
    auto* report_cmd = app.add_subcommand("report", "Pretty-print a report.json");
    report_cmd->add_option("--report", report_path, "report.json")->required();

    try {
        app.parse(argc, argv);
        if (*ingest_cmd) return cmd_ingest(ingest);
        if (*index_cmd) return cmd_index(index);
        if (*retrieve_cmd) return cmd_retrieve(retrieve);
        if (*verify_cmd) return cmd_verify(verify);
        if (*evaluate_cmd) return cmd_evaluate(evaluate);
        if (*report_cmd) return cmd_report(report_path);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const cc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

#include "claimcheck/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "claimcheck/error.hpp"
#include "claimcheck/text.hpp"

namespace claimcheck {

using nlohmann::ordered_json;

void TriangulationTemplate::validate() const {
    const std::vector<const std::string*> markers = {
        &evidence_sentinel, &trigger_tail, &final_label_marker, &explanation_marker};
    for (const auto* m : markers) {
        if (m->empty()) throw_validation("template marker is empty");
    }
    for (std::size_t i = 0; i < markers.size(); ++i) {
        for (std::size_t j = i + 1; j < markers.size(); ++j) {
            if (*markers[i] == *markers[j]) {
                throw_validation("template markers must be pairwise distinct: \"" + *markers[i] +
                                 "\"");
            }
        }
    }
    if (conflict_question.find(trigger_tail) == std::string::npos) {
        throw_validation("trigger tail must be a suffix piece of the conflict question");
    }
}

std::string render_prompt(const ClaimSample& claim, const TriangulationTemplate& tmpl) {
    tmpl.validate();
    if (text::normalize_for_dedup(claim.claim).empty()) {
        throw_validation("claim \"" + claim.id + "\" has empty text");
    }
    for (const auto& [name, marker] :
         {std::pair{"evidence sentinel", tmpl.evidence_sentinel},
          {"final label marker", tmpl.final_label_marker},
          {"explanation marker", tmpl.explanation_marker},
          {"trigger tail", tmpl.trigger_tail}}) {
        if (claim.claim.find(marker) != std::string::npos) {
            throw_validation("claim \"" + claim.id + "\" collides with the " + name);
        }
    }

    std::string p;
    p += "You are a careful fact-checking assistant. Verify the claim below against evidence "
         "from a curated library.\n\n";
    p += "CLAIM: " + claim.claim + "\n\n";
    p += "No evidence is attached yet. Whenever you need the next piece of evidence, write the "
         "marker " + tmpl.evidence_sentinel + " on a line of its own and continue after the "
         "evidence appears.\n\n";
    p += "Work through these steps:\n";
    p += "1. Relevance: judge how each evidence item relates to the claim and state an initial "
         "label (SUP, REF or NEI).\n";
    p += "2. Key information: extract the decisive facts from the evidence.\n";
    p += "3. Consistency: check the extracted facts against the claim and refine the label.\n";
    p += "4. Explanation: draft a short explanation that justifies the label.\n";
    p += "5. Reflection: ask yourself: " + tmpl.conflict_question + " If yes, revisit steps 1-4 "
         "before concluding.\n";
    p += "6. Final answer, exactly in this form:\n";
    p += tmpl.final_label_marker + " <SUP|REF|NEI>\n";
    p += tmpl.explanation_marker + " <explanation>\n";

    // The claim must appear exactly once; a second occurrence means a marker
    // or instruction collided with the claim text.
    std::size_t occurrences = 0;
    for (std::size_t pos = p.find(claim.claim); pos != std::string::npos;
         pos = p.find(claim.claim, pos + 1)) {
        ++occurrences;
    }
    if (occurrences != 1) {
        throw_validation("claim \"" + claim.id + "\" text collides with the prompt template");
    }
    return p;
}

namespace {

std::string trim_copy(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Last occurrence of any of the yes/no words after `from`, or npos.
std::optional<bool> read_yes_no(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) || c == ',' || c == '.' || c == ':') continue;
        std::string word;
        while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
            ++i;
        }
        if (word == "yes") return true;
        if (word == "no") return false;
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

ParsedVerdict parse_verdict(const std::string& transcript, const TriangulationTemplate& tmpl) {
    const auto label_pos = transcript.rfind(tmpl.final_label_marker);
    if (label_pos == std::string::npos) {
        throw_parse("transcript has no final-label marker");
    }
    const std::size_t label_start = label_pos + tmpl.final_label_marker.size();
    auto label_end = transcript.find('\n', label_start);
    if (label_end == std::string::npos) label_end = transcript.size();
    const std::string label_text =
        trim_copy(std::string_view(transcript).substr(label_start, label_end - label_start));
    const auto label = try_label_from_string(label_text);
    if (!label) throw_parse("final label \"" + label_text + "\" is not SUP/REF/NEI");

    const auto expl_pos = transcript.rfind(tmpl.explanation_marker);
    if (expl_pos == std::string::npos) throw_parse("transcript has no explanation marker");
    ParsedVerdict out;
    out.label = *label;
    out.explanation = trim_copy(
        std::string_view(transcript).substr(expl_pos + tmpl.explanation_marker.size()));
    if (out.explanation.empty()) throw_parse("explanation field is empty");

    // Last conflict answer wins; an unresolved (or never-asked) conflict
    // keeps the flag false.
    out.conflict_resolved = false;
    std::size_t last_tail = std::string::npos;
    for (std::size_t pos = transcript.find(tmpl.trigger_tail); pos != std::string::npos;
         pos = transcript.find(tmpl.trigger_tail, pos + 1)) {
        last_tail = pos;
    }
    if (last_tail != std::string::npos) {
        const auto answer = read_yes_no(
            std::string_view(transcript).substr(last_tail + tmpl.trigger_tail.size()));
        out.conflict_resolved = answer.has_value() && !*answer;
    }
    return out;
}

DeaState::DeaState(std::vector<DeaCandidate> candidates, int cap, std::size_t budget_codepoints,
                   const TriangulationTemplate& tmpl)
    : candidates_(std::move(candidates)), cap_(cap), budget_(budget_codepoints), tmpl_(&tmpl) {
    if (candidates_.empty()) throw_validation("DEA needs at least one candidate");
}

DeaAction DeaState::step(std::string_view emitted_text) {
    const auto pos = emitted_text.find(tmpl_->evidence_sentinel, scan_pos_);
    if (pos == std::string_view::npos) {
        // Advance past text that can no longer start a sentinel, keeping a
        // window for one that spans token boundaries. Never rewinds.
        const std::size_t keep = tmpl_->evidence_sentinel.size() - 1;
        const std::size_t tail = emitted_text.size() > keep ? emitted_text.size() - keep : 0;
        scan_pos_ = std::max(scan_pos_, tail);
        return {DeaActionKind::kContinue, {}, {}};
    }
    scan_pos_ = pos + tmpl_->evidence_sentinel.size();

    if (injections_ >= cap_ || injections_ >= static_cast<int>(candidates_.size())) {
        return {DeaActionKind::kCapNotice, {}, "\n" + tmpl_->cap_notice + "\n"};
    }
    const DeaCandidate& cand = candidates_[static_cast<std::size_t>(injections_)];
    const std::string body = text::truncate_codepoints(cand.text, budget_);
    ++injections_;
    injected_chars_ += text::count_codepoints(body);
    injected_ids_.push_back(cand.evidence_id);
    DeaAction action;
    action.kind = DeaActionKind::kInject;
    action.evidence_id = cand.evidence_id;
    action.text = "\n" + tmpl_->evidence_block_prefix + cand.evidence_id + "] " + body + "\n";
    return action;
}

RewardConfig resolve_reward_config(TokenBackend& backend, const TriangulationTemplate& tmpl,
                                   const RewardPieces& pieces, int max_reflections) {
    RewardConfig cfg;
    cfg.delta0 = pieces.delta0;
    cfg.gamma = pieces.gamma;
    cfg.max_reflections = max_reflections;
    const std::vector<std::string>& trigger =
        pieces.trigger_pieces.empty() ? std::vector<std::string>{tmpl.trigger_tail}
                                      : pieces.trigger_pieces;
    for (const auto& piece : trigger) cfg.trigger.push_back(backend.intern(piece));
    for (const auto& piece : pieces.target_pieces) cfg.reward_targets.insert(backend.intern(piece));
    cfg.validate();
    return cfg;
}

std::string elide_oldest_evidence(std::string context, const TriangulationTemplate& tmpl) {
    const std::string& prefix = tmpl.evidence_block_prefix;
    const std::string omitted = "(omitted)]";
    std::size_t pos = 0;
    while ((pos = context.find(prefix, pos)) != std::string::npos) {
        const auto close = context.find("] ", pos + prefix.size());
        if (close == std::string::npos) break;
        const auto end = context.find('\n', close);
        const std::size_t body_end = end == std::string::npos ? context.size() : end;
        if (context.compare(pos + prefix.size(), omitted.size(), omitted) == 0) {
            pos = body_end;  // already elided
            continue;
        }
        const std::string id = context.substr(pos + prefix.size(), close - pos - prefix.size());
        context.replace(pos, body_end - pos, prefix + omitted + " evidence " + id + " elided");
        return context;
    }
    return context;  // nothing left to elide
}

VerdictRecord run_claim(const ClaimSample& claim, const RetrievalIndex* index,
                        const EvidenceStore& store, TokenBackend& backend,
                        const TriangulationTemplate& tmpl, const RewardPieces& reward,
                        const PipelineCaps& caps) {
    const auto t0 = std::chrono::steady_clock::now();
    VerdictRecord record;
    record.claim_id = claim.id;
    auto finish = [&](VerdictRecord r) {
        r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
        return r;
    };

    // Candidate evidence, rank order.
    std::vector<DeaCandidate> candidates;
    if (caps.gold_evidence) {
        for (const auto& id : claim.gold_evidence_ids) {
            const EvidenceDoc* doc = store.find(id);
            if (doc == nullptr) throw_validation("gold evidence id \"" + id + "\" not in store");
            candidates.push_back({doc->id, doc->text});
        }
    } else {
        if (index == nullptr) throw_validation("verify without --gold-evidence needs an index");
        const RankedList ranked = index->search(claim.claim, static_cast<std::size_t>(
                                                                  caps.max_evidence),
                                                caps.date_mode, claim.claim_date);
        for (const auto& entry : ranked.entries) {
            const EvidenceDoc* doc = store.find(entry.doc_id);
            if (doc == nullptr) {
                throw_internal("index doc \"" + entry.doc_id + "\" missing from store");
            }
            candidates.push_back({doc->id, doc->text});
        }
    }
    if (candidates.empty()) {
        record.fallback = VerdictRecord::Fallback::kEmptyRetrieval;
        record.predicted = Label::kNei;
        record.conflict_resolved = false;
        return finish(record);
    }

    const std::string prompt = render_prompt(claim, tmpl);
    const RewardConfig cfg =
        resolve_reward_config(backend, tmpl, reward, caps.max_reflections);

    std::vector<std::string> dea_ids;
    std::size_t dea_chars = 0;

    auto attempt = [&]() -> GenerateResult {
        DeaState dea(candidates, caps.max_evidence, caps.evidence_budget, tmpl);

        TokenHook hook = [&](const HookView& view) {
            HookOutcome outcome;

            // The token a trigger hit biased is the conflict answer; an
            // affirmative answer enters another reflection pass.
            if (view.rewarded && cfg.reward_targets.contains(view.token)) {
                if (view.session.reflections < caps.max_reflections) {
                    ++view.session.reflections;
                }
                if (view.session.reflections >= caps.max_reflections) {
                    view.session.rewards_enabled = false;
                    outcome.inject_texts.push_back("\n" + tmpl.reflection_cap_notice + "\n");
                }
            }

            // Evidence requests; a single token may complete several
            // sentinels.
            for (;;) {
                const DeaAction action = dea.step(view.emitted_text);
                if (action.kind == DeaActionKind::kContinue) break;
                outcome.inject_texts.push_back(action.text);
                if (action.kind == DeaActionKind::kInject) {
                    ++view.session.dea_injections;
                }
            }
            return outcome;
        };

        GenerateLimits limits;
        limits.max_output_tokens = caps.max_output_tokens;
        limits.max_context_codepoints = caps.max_input_codepoints;
        limits.overflow_trim = [&tmpl](std::string ctx) {
            return elide_oldest_evidence(std::move(ctx), tmpl);
        };
        GenerateResult result = generate(backend, prompt, cfg, hook, limits);
        dea_ids = dea.injected_ids();
        dea_chars = dea.injected_chars();
        return result;
    };

    // One retry on unparseable output, then the NEI fallback.
    for (int round = 0; round < 2; ++round) {
        const GenerateResult result = attempt();
        record.evidence_used = dea_ids;
        record.dea_injections = result.session.dea_injections;
        record.injected_chars = dea_chars;
        record.reflections = result.session.reflections;
        try {
            const ParsedVerdict verdict = parse_verdict(result.emitted_text, tmpl);
            record.predicted = verdict.label;
            record.explanation = verdict.explanation;
            record.conflict_resolved = verdict.conflict_resolved;
            return finish(record);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::kParse) throw;
        }
    }
    record.fallback = VerdictRecord::Fallback::kUnparseable;
    record.predicted = Label::kNei;
    record.explanation.clear();
    record.conflict_resolved = false;
    return finish(record);
}

void save_predictions(const std::vector<VerdictRecord>& records, const std::string& path,
                      bool zero_wall_ms) {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write " + path);
    for (const auto& r : records) {
        ordered_json j;
        j["id"] = r.claim_id;
        j["predicted_label"] = to_string(r.predicted);
        j["explanation"] = r.explanation;
        j["conflict_resolved"] = r.conflict_resolved;
        j["evidence_used"] = r.evidence_used;
        j["reflections"] = r.reflections;
        j["dea_injections"] = r.dea_injections;
        j["injected_chars"] = r.injected_chars;
        j["wall_ms"] = zero_wall_ms ? 0 : r.wall_ms;
        out << j.dump() << '\n';
    }
}

std::vector<VerdictRecord> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_validation("predictions file not found: " + path);
    std::vector<VerdictRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = ordered_json::parse(line);
            VerdictRecord r;
            r.claim_id = j.at("id").get<std::string>();
            r.predicted = label_from_string(j.at("predicted_label").get<std::string>());
            r.explanation = j.at("explanation").get<std::string>();
            r.conflict_resolved = j.at("conflict_resolved").get<bool>();
            r.evidence_used = j.at("evidence_used").get<std::vector<std::string>>();
            r.reflections = j.at("reflections").get<int>();
            r.dea_injections = j.at("dea_injections").get<int>();
            r.injected_chars = j.at("injected_chars").get<std::size_t>();
            r.wall_ms = j.at("wall_ms").get<std::int64_t>();
            out.push_back(std::move(r));
        } catch (const Error& e) {
            throw Error(e.kind(), path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::exception& e) {
            throw_validation(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace claimcheck

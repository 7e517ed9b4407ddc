#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "claimcheck/backends.hpp"
#include "claimcheck/error.hpp"

namespace claimcheck {

TokenId Vocabulary::intern(const std::string& piece) {
    std::lock_guard lock(mu_);
    auto it = ids_.find(piece);
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<TokenId>(pieces_.size());
    pieces_.push_back(piece);
    ids_.emplace(piece, id);
    return id;
}

std::string Vocabulary::piece(TokenId id) const {
    std::lock_guard lock(mu_);
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
        throw_internal("unknown token id " + std::to_string(id));
    }
    return pieces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::lookup(const std::string& piece) const {
    std::lock_guard lock(mu_);
    auto it = ids_.find(piece);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// The script format is line-based, so tokens spell newlines as \n.
std::string unescape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            switch (s[i + 1]) {
                case 'n': out += '\n'; ++i; continue;
                case 't': out += '\t'; ++i; continue;
                case 's': out += ' '; ++i; continue;
                case '\\': out += '\\'; ++i; continue;
                default: break;
            }
        }
        out += s[i];
    }
    return out;
}

MockStep parse_step(const std::string& line, std::size_t lineno) {
    const auto bar = line.find(" | ");
    if (bar == std::string::npos) {
        throw_validation("mock script line " + std::to_string(lineno) +
                         ": expected `token | tokenA:logit,...`");
    }
    MockStep step;
    step.token = unescape(trim(line.substr(0, bar)));
    if (step.token.empty()) {
        throw_validation("mock script line " + std::to_string(lineno) + ": empty token");
    }
    std::stringstream rest(line.substr(bar + 3));
    std::string item;
    while (std::getline(rest, item, ',')) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos) {
            throw_validation("mock script line " + std::to_string(lineno) +
                             ": malformed logit entry \"" + item + "\"");
        }
        const std::string piece = unescape(trim(item.substr(0, colon)));
        if (piece.empty()) {
            throw_validation("mock script line " + std::to_string(lineno) + ": empty logit token");
        }
        try {
            step.logits.emplace_back(piece, std::stod(item.substr(colon + 1)));
        } catch (const std::exception&) {
            throw_validation("mock script line " + std::to_string(lineno) +
                             ": bad logit value in \"" + item + "\"");
        }
    }
    return step;
}

}  // namespace

MockScript MockScript::parse(const std::string& source) {
    MockScript script;
    std::vector<MockStep>* current = &script.main;
    std::istringstream in(source);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t[0] == ':') {
            const std::string label = trim(t.substr(1));
            if (label.empty()) {
                throw_validation("mock script line " + std::to_string(lineno) + ": empty label");
            }
            current = &script.sections[label];
            continue;
        }
        if (t.rfind("branch ", 0) == 0) {
            const auto q1 = t.find('"');
            const auto q2 = t.find('"', q1 + 1);
            const auto arrow = t.find("->", q2 == std::string::npos ? 0 : q2);
            if (q1 == std::string::npos || q2 == std::string::npos || arrow == std::string::npos) {
                throw_validation("mock script line " + std::to_string(lineno) +
                                 ": expected `branch \"substring\" -> label`");
            }
            MockBranch br;
            br.needle = t.substr(q1 + 1, q2 - q1 - 1);
            br.label = trim(t.substr(arrow + 2));
            if (br.needle.empty() || br.label.empty()) {
                throw_validation("mock script line " + std::to_string(lineno) +
                                 ": branch needs a substring and a label");
            }
            script.branches.push_back(std::move(br));
            continue;
        }
        current->push_back(parse_step(t, lineno));
    }
    script.validate();
    return script;
}

MockScript MockScript::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_validation("mock script not found: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void MockScript::validate() const {
    auto check_steps = [](const std::vector<MockStep>& steps, const std::string& where) {
        for (const auto& step : steps) {
            if (step.logits.empty()) {
                throw_validation("mock script: step \"" + step.token + "\" in " + where +
                                 " has an empty logit map");
            }
            for (const auto& [piece, value] : step.logits) {
                if (!std::isfinite(value)) {
                    throw_validation("mock script: non-finite logit for \"" + piece + "\"");
                }
            }
        }
    };
    check_steps(main, "main");
    for (const auto& [label, steps] : sections) check_steps(steps, label);
    for (const auto& br : branches) {
        if (!sections.contains(br.label)) {
            throw_validation("mock script: branch targets unknown label \"" + br.label + "\"");
        }
    }
    // Triggers must not shadow each other.
    for (std::size_t i = 0; i < branches.size(); ++i) {
        for (std::size_t j = 0; j < branches.size(); ++j) {
            if (i != j && branches[i].needle.find(branches[j].needle) != std::string::npos) {
                throw_validation("mock script: branch trigger \"" + branches[j].needle +
                                 "\" overlaps \"" + branches[i].needle + "\"");
            }
        }
    }
}

class MockStream : public TokenStream {
public:
    explicit MockStream(MockBackend& backend)
        : backend_(backend), steps_(&backend.script_.main) {}

    StreamStep next(const std::string& context, const TokenBias& bias) override {
        take_branch(context);
        if (cursor_ >= steps_->size()) {
            StreamStep end;
            end.end_of_stream = true;
            return end;
        }
        const MockStep& step = (*steps_)[cursor_++];
        StepLogits logits;
        for (const auto& [piece, value] : step.logits) {
            logits.values[backend_.vocab_.intern(piece)] = value;
        }
        for (const auto& [token, delta] : bias.add) {
            auto it = logits.values.find(token);
            if (it != logits.values.end()) it->second += delta;
        }
        StreamStep out;
        out.token = greedy_step(logits);
        out.piece = backend_.vocab_.piece(out.token);
        if (backend_.tier_ == TokenBackend::Tier::kLogits) out.logits = std::move(logits);
        return out;
    }

private:
    void take_branch(const std::string& context) {
        // Rule order is the priority; each rule fires once. The whole context
        // is visible, so scripts may branch on the claim in the prompt or on
        // injected evidence.
        for (std::size_t i = 0; i < backend_.script_.branches.size(); ++i) {
            if (fired_.contains(i)) continue;
            const auto& br = backend_.script_.branches[i];
            if (context.find(br.needle) != std::string::npos) {
                fired_.insert(i);
                steps_ = &backend_.script_.sections.at(br.label);
                cursor_ = 0;
                return;
            }
        }
    }

    MockBackend& backend_;
    const std::vector<MockStep>* steps_;
    std::size_t cursor_ = 0;
    std::set<std::size_t> fired_;
};

MockBackend::MockBackend(MockScript script, Tier tier)
    : script_(std::move(script)), tier_(tier) {
    script_.validate();
}

std::unique_ptr<TokenStream> MockBackend::start(const std::string&) {
    return std::make_unique<MockStream>(*this);
}

}  // namespace claimcheck

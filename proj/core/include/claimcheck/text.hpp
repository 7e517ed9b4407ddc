#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace claimcheck::text {

// Decodes UTF-8 into codepoints. Invalid byte sequences decode to U+FFFD and
// consume one byte, so tokenization never throws on dirty input.
std::vector<char32_t> decode_utf8(std::string_view s);

std::string encode_utf8(const std::vector<char32_t>& cps);
void append_utf8(std::string& out, char32_t cp);

std::size_t count_codepoints(std::string_view s);

// Han, kana, bopomofo and the CJK extension planes. Used to pick the n-gram
// tokenization path; CJK punctuation and fullwidth forms are delimiters, not
// token material.
bool is_cjk(char32_t cp);

bool is_space(char32_t cp);

// Index tokenization: CJK runs emit each character plus each adjacent
// character bigram ("ABC" -> A, AB, B, BC, C); everything else is lowercased
// and split on non-alphanumerics.
std::vector<std::string> tokenize(std::string_view s);

// Unicode NFC via ICU.
std::string nfc(std::string_view s);

// NFC + trim + collapse of internal whitespace runs to a single space.
// This is the text-equality key used by evidence dedup.
std::string normalize_for_dedup(std::string_view s);

// Keeps at most `max_codepoints`, preferring to cut just after the last
// sentence-ending mark inside the budget. Never splits a UTF-8 sequence.
std::string truncate_codepoints(std::string_view s, std::size_t max_codepoints);

}  // namespace claimcheck::text

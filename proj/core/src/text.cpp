#include "claimcheck/text.hpp"

#include <unicode/uchar.h>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utf8.h>

#include <array>
#include <cctype>

#include "claimcheck/error.hpp"

namespace claimcheck::text {

std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(s.size());
    while (i < len) {
        UChar32 cp = 0;
        U8_NEXT(bytes, i, len, cp);
        if (cp < 0) cp = 0xFFFD;
        out.push_back(static_cast<char32_t>(cp));
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    char buf[4];
    uint8_t* b = reinterpret_cast<uint8_t*>(buf);
    int32_t i = 0;
    UBool err = false;
    U8_APPEND(b, i, 4, static_cast<UChar32>(cp), err);
    if (err) {
        out += "\xEF\xBF\xBD";  // U+FFFD
        return;
    }
    out.append(buf, static_cast<std::size_t>(i));
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size() * 3);
    for (char32_t cp : cps) append_utf8(out, cp);
    return out;
}

std::size_t count_codepoints(std::string_view s) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(s.size());
    std::size_t n = 0;
    while (i < len) {
        U8_FWD_1(bytes, i, len);
        ++n;
    }
    return n;
}

bool is_cjk(char32_t cp) {
    static constexpr std::array<std::pair<char32_t, char32_t>, 10> kRanges{{
        {0x3040, 0x30FF},    // hiragana + katakana
        {0x3100, 0x312F},    // bopomofo
        {0x31A0, 0x31EF},    // bopomofo ext, strokes
        {0x3400, 0x4DBF},    // CJK ext A
        {0x4E00, 0x9FFF},    // CJK unified
        {0xF900, 0xFAFF},    // compatibility ideographs
        {0xFF66, 0xFF9D},    // halfwidth katakana
        {0x20000, 0x2A6DF},  // ext B
        {0x2A700, 0x2EBEF},  // ext C..F
        {0x30000, 0x3134A},  // ext G
    }};
    for (auto [lo, hi] : kRanges) {
        if (cp >= lo && cp <= hi) return true;
    }
    return false;
}

bool is_space(char32_t cp) {
    return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0;
}

namespace {

bool is_ascii_alnum(char32_t cp) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

// Non-CJK token material: ASCII alphanumerics plus any non-CJK letter/digit
// beyond ASCII (accented Latin and the like). Punctuation, symbols and
// whitespace split tokens.
bool is_word_char(char32_t cp) {
    if (cp < 0x80) return is_ascii_alnum(cp);
    if (is_cjk(cp)) return false;
    return u_isalnum(static_cast<UChar32>(cp)) != 0;
}

char32_t ascii_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + ('a' - 'A');
    if (cp < 0x80) return cp;
    UChar32 lowered = u_tolower(static_cast<UChar32>(cp));
    return static_cast<char32_t>(lowered);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> terms;
    const std::vector<char32_t> cps = decode_utf8(s);
    std::string word;
    std::size_t i = 0;
    const std::size_t n = cps.size();
    auto flush_word = [&] {
        if (!word.empty()) {
            terms.push_back(word);
            word.clear();
        }
    };
    while (i < n) {
        const char32_t cp = cps[i];
        if (is_cjk(cp)) {
            flush_word();
            std::size_t j = i;
            while (j < n && is_cjk(cps[j])) ++j;
            for (std::size_t p = i; p < j; ++p) {
                std::string uni;
                append_utf8(uni, cps[p]);
                terms.push_back(uni);
                if (p + 1 < j) {
                    std::string bi = uni;
                    append_utf8(bi, cps[p + 1]);
                    terms.push_back(bi);
                }
            }
            i = j;
        } else if (is_word_char(cp)) {
            append_utf8(word, ascii_lower(cp));
            ++i;
        } else {
            flush_word();
            ++i;
        }
    }
    flush_word();
    return terms;
}

std::string nfc(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const UNormalizer2* norm = unorm2_getNFCInstance(&status);
    if (U_FAILURE(status)) throw_internal("ICU NFC instance unavailable");

    // UTF-8 -> UTF-16
    std::u16string u16(s.size() + 1, u'\0');
    int32_t u16len = 0;
    status = U_ZERO_ERROR;
    u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16len, s.data(),
                  static_cast<int32_t>(s.size()), &status);
    if (U_FAILURE(status)) {
        // Fall back to lossy conversion: re-decode with replacement chars.
        std::string repaired = encode_utf8(decode_utf8(s));
        if (repaired == s) throw_internal("UTF-8 to UTF-16 conversion failed");
        return nfc(repaired);
    }
    u16.resize(static_cast<std::size_t>(u16len));

    std::u16string out(u16.size() * 2 + 16, u'\0');
    status = U_ZERO_ERROR;
    int32_t outlen = unorm2_normalize(norm, u16.data(), static_cast<int32_t>(u16.size()),
                                      out.data(), static_cast<int32_t>(out.size()), &status);
    if (U_FAILURE(status)) throw_internal("NFC normalization failed");
    out.resize(static_cast<std::size_t>(outlen));

    std::string result(out.size() * 3 + 1, '\0');
    int32_t u8len = 0;
    status = U_ZERO_ERROR;
    u_strToUTF8(result.data(), static_cast<int32_t>(result.size()), &u8len, out.data(),
                static_cast<int32_t>(out.size()), &status);
    if (U_FAILURE(status)) throw_internal("UTF-16 to UTF-8 conversion failed");
    result.resize(static_cast<std::size_t>(u8len));
    return result;
}

std::string normalize_for_dedup(std::string_view s) {
    const std::string composed = nfc(s);
    const std::vector<char32_t> cps = decode_utf8(composed);
    std::string out;
    out.reserve(composed.size());
    bool pending_space = false;
    bool seen_char = false;
    for (char32_t cp : cps) {
        if (is_space(cp)) {
            pending_space = seen_char;
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        append_utf8(out, cp);
        seen_char = true;
    }
    return out;
}

namespace {

bool is_sentence_end(char32_t cp) {
    switch (cp) {
        case U'.':
        case U'!':
        case U'?':
        case U';':
        case U'\n':
        case U'。':
        case U'！':
        case U'？':
        case U'；':
            return true;
        default:
            return false;
    }
}

}  // namespace

std::string truncate_codepoints(std::string_view s, std::size_t max_codepoints) {
    const std::vector<char32_t> cps = decode_utf8(s);
    if (cps.size() <= max_codepoints) return std::string(s);
    std::size_t cut = max_codepoints;
    for (std::size_t p = max_codepoints; p > 0; --p) {
        if (is_sentence_end(cps[p - 1])) {
            cut = p;
            break;
        }
    }
    std::vector<char32_t> head(cps.begin(), cps.begin() + static_cast<std::ptrdiff_t>(cut));
    return encode_utf8(head);
}

}  // namespace claimcheck::text

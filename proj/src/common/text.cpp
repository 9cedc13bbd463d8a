#include "rulealign/text.hpp"

#include <cctype>

namespace rulealign::text {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_word_byte(unsigned char c) {
    return c >= 0x80 || std::isalnum(c) || c == '_' || c == '\'' || c == '-' || c == '+';
}

unsigned char fold(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c; }

}  // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

std::string normalize_name(std::string_view raw) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(fold(c));
    }
    return out;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (is_word_byte(c)) {
            cur += static_cast<char>(fold(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::optional<std::size_t> find_term(const std::vector<std::string>& text_words, std::string_view term) {
    const auto needle = words(term);
    if (needle.empty() || needle.size() > text_words.size()) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i + needle.size() <= text_words.size(); ++i) {
        bool match = true;
        for (std::size_t k = 0; k < needle.size(); ++k) {
            if (text_words[i + k] != needle[k]) {
                match = false;
                break;
            }
        }
        if (match) {
            return i;
        }
    }
    return std::nullopt;
}

bool contains_term(std::string_view text, std::string_view term) { return find_term(words(text), term).has_value(); }

bool has_word_prefix(const std::vector<std::string>& text_words, std::string_view prefix) {
    const std::string p = normalize_name(prefix);
    for (const auto& w : text_words) {
        if (w.size() >= p.size() && w.compare(0, p.size(), p) == 0) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> utf8_chars(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0) {
            len = 4;
        } else if (c >= 0xE0) {
            len = 3;
        } else if (c >= 0xC0) {
            len = 2;
        }
        if (i + len > s.size()) {
            len = 1;
        }
        out.emplace_back(s.substr(i, len));
        i += len;
    }
    return out;
}

bool is_cjk_text(std::string_view s) {
    std::size_t cjk = 0;
    std::size_t total = 0;
    for (const auto& ch : utf8_chars(s)) {
        if (ch.size() == 1 && is_space(static_cast<unsigned char>(ch[0]))) {
            continue;
        }
        ++total;
        // U+2E80 .. U+9FFF and full-width forms start with 0xE2..0xE9 / 0xEF
        if (ch.size() == 3) {
            const auto lead = static_cast<unsigned char>(ch[0]);
            if ((lead >= 0xE2 && lead <= 0xE9) || lead == 0xEF) {
                ++cjk;
            }
        }
    }
    return total > 0 && cjk * 2 >= total;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

}  // namespace rulealign::text

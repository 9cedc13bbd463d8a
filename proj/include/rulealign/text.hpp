#pragma once
// Text helpers shared across modules: name normalization, term matching over
// word sequences, and UTF-8 segmentation.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rulealign::text {

// Trim, collapse internal whitespace runs to one space, ASCII case-fold.
std::string normalize_name(std::string_view raw);

// Lower-cased word tokens; punctuation other than '_', '\'', '-' and '+'
// separates words and is dropped. Non-ASCII bytes stay inside words.
std::vector<std::string> words(std::string_view s);

// Position (word index) of the first occurrence of `term` as a contiguous word
// sequence inside `text`, or nullopt.
std::optional<std::size_t> find_term(const std::vector<std::string>& text_words, std::string_view term);
bool contains_term(std::string_view text, std::string_view term);

// True when any word of `text` starts with `prefix` (case-folded).
bool has_word_prefix(const std::vector<std::string>& text_words, std::string_view prefix);

// UTF-8 code points as separate strings; invalid bytes pass through singly.
std::vector<std::string> utf8_chars(std::string_view s);

bool is_cjk_text(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view s);

}  // namespace rulealign::text

#pragma once

// UTF-8 helpers, simple case mapping and the word splitter shared by the
// tokenizer, the recognizer and the leakage matcher.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hipsgen {

struct TextError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);
std::string to_utf8(char32_t cp);

// Number of code points in a UTF-8 string.
std::size_t code_point_length(std::string_view utf8);

// Code-point slice [start, end) of a UTF-8 string.
std::string slice_code_points(std::string_view utf8, std::size_t start, std::size_t end);

// Case mapping covers ASCII, Latin-1 and Latin Extended-A; other code points
// are returned unchanged.
char32_t to_lower(char32_t cp);
char32_t to_upper(char32_t cp);
bool is_upper(char32_t cp);
bool is_lower(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);

std::string lowercase(std::string_view utf8);
std::string uppercase(std::string_view utf8);
// First letter of every space-separated word upper, the rest lower.
std::string titlecase(std::string_view utf8);

// Characters emitted as single-character tokens. '.' and ',' between two
// digits stay inside the surrounding number ("87,500", "3.5").
bool is_split_punct(char32_t cp);
// Punctuation glued to the previous token on detokenization.
bool is_closing_punct(char32_t cp);
// Punctuation glued to the next token on detokenization.
bool is_opening_punct(char32_t cp);

struct WordPiece {
  std::string text;
  std::size_t start = 0;  // code point offset, inclusive
  std::size_t end = 0;    // code point offset, exclusive
  bool newline = false;
};

// Splits on whitespace, emits one piece per '\n' and splits punctuation into
// single-character pieces. Other whitespace only separates pieces.
std::vector<WordPiece> split_words(std::string_view utf8);

// Token strings only, newline pieces dropped.
std::vector<std::string> word_tokens(std::string_view utf8);

// Joins word pieces the way detokenize() does.
std::string join_words(const std::vector<std::string>& words);

// Removes horizontal whitespace; newlines are kept.
std::string strip_horizontal_space(std::string_view utf8);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, std::string_view delim);

}  // namespace hipsgen

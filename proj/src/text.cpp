#include "hipsgen/text.hpp"

#include <algorithm>

namespace hipsgen {

std::u32string to_u32(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  std::size_t i = 0;
  while (i < utf8.size()) {
    const auto c = static_cast<unsigned char>(utf8[i]);
    char32_t cp = 0;
    std::size_t extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw TextError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      if (i + k >= utf8.size()) throw TextError("truncated UTF-8 sequence at offset " + std::to_string(i));
      const auto cc = static_cast<unsigned char>(utf8[i + k]);
      if ((cc & 0xC0) != 0x80) throw TextError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string to_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) out += to_utf8(cp);
  return out;
}

std::size_t code_point_length(std::string_view utf8) {
  std::size_t n = 0;
  for (char c : utf8) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string slice_code_points(std::string_view utf8, std::size_t start, std::size_t end) {
  const auto cps = to_u32(utf8);
  if (start > end || end > cps.size()) throw TextError("code point slice out of range");
  return to_utf8(std::u32string_view(cps).substr(start, end - start));
}

namespace {

// Latin Extended-A alternates upper/lower pairs, with the parity flipping in
// U+0139..U+0148 and U+0179..U+017E.
bool ext_a_upper_is_even(char32_t cp) {
  return !((cp >= 0x0139 && cp <= 0x0148) || (cp >= 0x0179 && cp <= 0x017E));
}

bool in_ext_a_pairs(char32_t cp) {
  return cp >= 0x0100 && cp <= 0x017E && cp != 0x0130 && cp != 0x0131 && cp != 0x0138 && cp != 0x0149 &&
         cp != 0x0178;
}

}  // namespace

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0x80) return cp;
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;
  if (cp == 0x0178) return 0x00FF;
  if (in_ext_a_pairs(cp)) {
    const bool even = (cp % 2) == 0;
    if (even == ext_a_upper_is_even(cp)) return cp + 1;
    return cp;
  }
  if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return cp + 0x20;
  if (cp >= 0x0410 && cp <= 0x042F) return cp + 0x20;
  if (cp >= 0x0400 && cp <= 0x040F) return cp + 0x50;
  return cp;
}

char32_t to_upper(char32_t cp) {
  if (cp >= 'a' && cp <= 'z') return cp - 32;
  if (cp < 0x80) return cp;
  if (cp >= 0x00E0 && cp <= 0x00FE && cp != 0x00F7) return cp - 0x20;
  if (cp == 0x00FF) return 0x0178;
  if (in_ext_a_pairs(cp)) {
    const bool even = (cp % 2) == 0;
    if (even != ext_a_upper_is_even(cp)) return cp - 1;
    return cp;
  }
  if (cp >= 0x03B1 && cp <= 0x03C9 && cp != 0x03C2) return cp - 0x20;
  if (cp >= 0x0430 && cp <= 0x044F) return cp - 0x20;
  if (cp >= 0x0450 && cp <= 0x045F) return cp - 0x50;
  return cp;
}

bool is_upper(char32_t cp) { return to_lower(cp) != cp; }
bool is_lower(char32_t cp) { return to_upper(cp) != cp; }
bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' || cp == 0x00A0;
}

namespace {

template <typename F>
std::string map_code_points(std::string_view utf8, F f) {
  auto cps = to_u32(utf8);
  for (auto& cp : cps) cp = f(cp);
  return to_utf8(cps);
}

}  // namespace

std::string lowercase(std::string_view utf8) { return map_code_points(utf8, to_lower); }
std::string uppercase(std::string_view utf8) { return map_code_points(utf8, to_upper); }

std::string titlecase(std::string_view utf8) {
  auto cps = to_u32(utf8);
  bool word_start = true;
  for (auto& cp : cps) {
    if (is_space(cp)) {
      word_start = true;
      continue;
    }
    cp = word_start ? to_upper(cp) : to_lower(cp);
    word_start = false;
  }
  return to_utf8(cps);
}

bool is_split_punct(char32_t cp) {
  switch (cp) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '(': case ')': case '[': case ']': case '{': case '}':
    case '"': case '\'':
    case 0x201C: case 0x201D: case 0x2018: case 0x2019:  // curly quotes
    case 0x00AB: case 0x00BB:                            // guillemets
    case 0x2014: case 0x2026:                            // em dash, ellipsis
      return true;
    default:
      return false;
  }
}

bool is_closing_punct(char32_t cp) {
  switch (cp) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case ')': case ']': case '}':
    case 0x201D: case 0x2019: case 0x00BB: case 0x2026:
      return true;
    default:
      return false;
  }
}

bool is_opening_punct(char32_t cp) {
  switch (cp) {
    case '(': case '[': case '{': case 0x201C: case 0x2018: case 0x00AB:
      return true;
    default:
      return false;
  }
}

std::vector<WordPiece> split_words(std::string_view utf8) {
  const auto cps = to_u32(utf8);
  std::vector<WordPiece> pieces;
  std::u32string current;
  std::size_t current_start = 0;

  auto flush = [&](std::size_t end) {
    if (!current.empty()) {
      pieces.push_back({to_utf8(current), current_start, end, false});
      current.clear();
    }
  };

  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t cp = cps[i];
    if (cp == '\n') {
      flush(i);
      pieces.push_back({"\n", i, i + 1, true});
      continue;
    }
    if (is_space(cp)) {
      flush(i);
      continue;
    }
    if (is_split_punct(cp)) {
      const bool numeric_sep = (cp == '.' || cp == ',') && i > 0 && i + 1 < cps.size() && is_digit(cps[i - 1]) &&
                               is_digit(cps[i + 1]) && !current.empty();
      if (!numeric_sep) {
        flush(i);
        pieces.push_back({to_utf8(cp), i, i + 1, false});
        continue;
      }
    }
    if (current.empty()) current_start = i;
    current.push_back(cp);
  }
  flush(cps.size());
  return pieces;
}

std::vector<std::string> word_tokens(std::string_view utf8) {
  std::vector<std::string> out;
  for (auto& p : split_words(utf8)) {
    if (!p.newline) out.push_back(std::move(p.text));
  }
  return out;
}

namespace {

bool single_code_point(const std::string& tok, bool (*pred)(char32_t)) {
  if (tok.empty()) return false;
  const auto cps = to_u32(tok);
  return cps.size() == 1 && pred(cps[0]);
}

}  // namespace

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  bool prev_newline = true;
  bool prev_opening = false;
  for (const auto& w : words) {
    const bool newline = w == "\n";
    if (!prev_newline && !newline && !prev_opening && !single_code_point(w, is_closing_punct)) out += ' ';
    out += w;
    prev_newline = newline;
    prev_opening = single_code_point(w, is_opening_punct);
  }
  return out;
}

std::string strip_horizontal_space(std::string_view utf8) {
  std::string out;
  for (char32_t cp : to_u32(utf8)) {
    if (cp != '\n' && is_space(cp)) continue;
    out += to_utf8(cp);
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, std::string_view delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(delim, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(s.substr(pos));
      return out;
    }
    out.emplace_back(s.substr(pos, next - pos));
    pos = next + delim.size();
  }
}

}  // namespace hipsgen

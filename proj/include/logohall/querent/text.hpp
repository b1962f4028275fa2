#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logohall/corpus/record.hpp"

namespace logohall {

namespace detail {

// Folded ASCII replacement for U+00C0..U+017F; "" keeps the code point.
inline constexpr std::array<const char*, 192> kLatinFold{
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "", "o", "u", "u", "u", "u", "y", "th", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "", "o", "u", "u", "u", "u", "y", "th", "y",
    "a", "a", "a", "a", "a", "a", "c", "c", "c", "c", "c", "c", "c", "c", "d", "d",
    "d", "d", "e", "e", "e", "e", "e", "e", "e", "e", "e", "e", "g", "g", "g", "g",
    "g", "g", "g", "g", "h", "h", "h", "h", "i", "i", "i", "i", "i", "i", "i", "i",
    "i", "i", "ij", "ij", "j", "j", "k", "k", "k", "l", "l", "l", "l", "l", "l", "l",
    "l", "l", "l", "n", "n", "n", "n", "n", "n", "n", "n", "n", "o", "o", "o", "o",
    "o", "o", "oe", "oe", "r", "r", "r", "r", "r", "r", "s", "s", "s", "s", "s", "s",
    "s", "s", "t", "t", "t", "t", "t", "t", "u", "u", "u", "u", "u", "u", "u", "u",
    "u", "u", "u", "u", "w", "w", "y", "y", "y", "z", "z", "z", "z", "z", "z", "s",
};

inline std::vector<char32_t> utf8_decode(std::string_view s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = c;
    if (c >= 0xF0 && c < 0xF8) len = 4, cp = c & 0x07;
    else if (c >= 0xE0) len = 3, cp = c & 0x0F;
    else if (c >= 0xC0) len = 2, cp = c & 0x1F;
    if (c >= 0x80 && c < 0xC0) len = 1, cp = 0xFFFD;  // stray continuation byte
    if (i + len > s.size()) {
      out.push_back(0xFFFD);
      break;
    }
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline void utf8_append(std::string& out, char32_t cp) {
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
}

inline bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' || c == 0xA0;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

}  // namespace detail

/// Canonical form for exact-match comparison: case-folded, Latin diacritics
/// removed, the characters ' ’ . , ! - & dropped, whitespace collapsed to a
/// single space and trimmed.
inline std::string normalize_text(std::string_view s) {
  std::string folded;
  for (char32_t cp : detail::utf8_decode(s)) {
    if (cp == '\'' || cp == 0x2019 || cp == '.' || cp == ',' || cp == '!' || cp == '-' || cp == '&') continue;
    if (detail::is_space(cp)) {
      folded.push_back(' ');
    } else if (cp < 0x80) {
      folded.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
    } else if (cp >= 0xC0 && cp < 0x180 && detail::kLatinFold[cp - 0xC0][0] != '\0') {
      folded += detail::kLatinFold[cp - 0xC0];
    } else if (cp >= 0x300 && cp < 0x370) {
      continue;  // combining diacritical marks
    } else {
      detail::utf8_append(folded, cp);
    }
  }
  std::string out;
  bool pending_space = false;
  for (char c : folded) {
    if (c == ' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

struct ParsedResponse {
  std::optional<std::string> emitted_text;
  std::optional<double> confidence;  // from a `CONFIDENCE: p` line, when present
  std::vector<std::string> flags;     // "unstructured_response" on the heuristic path
};

namespace detail {

inline bool is_open_context(const std::vector<char32_t>& cps, std::size_t i) {
  if (i == 0) return true;
  const char32_t p = cps[i - 1];
  return is_space(p) || p == '(' || p == '[' || p == ':';
}

inline bool is_close_context(const std::vector<char32_t>& cps, std::size_t i) {
  if (i + 1 >= cps.size()) return true;
  const char32_t n = cps[i + 1];
  return is_space(n) || n == '.' || n == ',' || n == '!' || n == '?' || n == ';' || n == ':' || n == ')' ||
         n == ']';
}

// First quoted span: '...', "...", ‘...’ or “...”. Apostrophes inside words
// (McDonald's) are not quote boundaries.
inline std::optional<std::string> first_quoted(std::string_view text) {
  const auto cps = utf8_decode(text);
  auto closer_for = [](char32_t c) -> char32_t {
    switch (c) {
      case '\'': return '\'';
      case '"': return '"';
      case 0x2018: return 0x2019;
      case 0x201C: return 0x201D;
      default: return 0;
    }
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t close = closer_for(cps[i]);
    if (close == 0 || !is_open_context(cps, i)) continue;
    for (std::size_t j = i + 1; j < cps.size(); ++j) {
      if (cps[j] != close || !is_close_context(cps, j)) continue;
      if (j == i + 1) break;
      std::string out;
      for (std::size_t k = i + 1; k < j; ++k) utf8_append(out, cps[k]);
      auto t = trim(out);
      if (t.empty()) break;
      return std::string(t);
    }
  }
  return std::nullopt;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || (c & 0x80); }

// Earliest whole-word, case-insensitive lexicon hit; longest entry on ties.
inline std::optional<std::string> lexicon_match(std::string_view text, const std::vector<std::string>& lexicon) {
  const std::string hay = ascii_lower(text);
  std::size_t best_pos = std::string::npos, best_len = 0;
  std::optional<std::string> best;
  for (const auto& entry : lexicon) {
    if (trim(entry).empty()) continue;
    const std::string needle = ascii_lower(entry);
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
      const bool left = pos == 0 || !is_word_char(hay[pos - 1]);
      const std::size_t end = pos + needle.size();
      const bool right = end >= hay.size() || !is_word_char(hay[end]);
      if (!left || !right) continue;
      if (pos < best_pos || (pos == best_pos && needle.size() > best_len)) {
        best_pos = pos;
        best_len = needle.size();
        best = entry;
      }
      break;
    }
  }
  return best;
}

}  // namespace detail

/// Extracts the emitted text from a model reply.
///
/// Protocol replies start with `TEXT: <string>` or `TEXT: NONE` and may carry
/// a `CONFIDENCE: <p>` line. Anything else goes through the heuristic path:
/// the first quoted span, else the earliest brand from `lexicon`, else no
/// text; those replies are flagged `unstructured_response`.
inline ParsedResponse parse_structured(std::string_view raw, const std::vector<std::string>& lexicon = {}) {
  ParsedResponse out;
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start <= raw.size();) {
    auto nl = raw.find('\n', start);
    if (nl == std::string_view::npos) nl = raw.size();
    lines.push_back(detail::trim(raw.substr(start, nl - start)));
    start = nl + 1;
  }
  for (auto line : lines) {
    if (!detail::starts_with_ci(line, "CONFIDENCE:")) continue;
    try {
      const double p = std::stod(std::string(detail::trim(line.substr(11))));
      if (p >= 0.0 && p <= 1.0) out.confidence = p;
    } catch (const std::exception&) {
    }
  }
  std::string_view first;
  for (auto line : lines)
    if (!line.empty()) {
      first = line;
      break;
    }
  if (detail::starts_with_ci(first, "TEXT:")) {
    auto value = detail::trim(first.substr(5));
    if (!value.empty() && detail::ascii_lower(value) != "none") out.emitted_text = std::string(value);
    return out;
  }
  out.flags.emplace_back("unstructured_response");
  if (auto q = detail::first_quoted(raw)) {
    out.emitted_text = *q;
  } else if (auto m = detail::lexicon_match(raw, lexicon)) {
    out.emitted_text = *m;
  }
  return out;
}

struct Judgment {
  int y_hat = 0;                     // 1 = model emitted textual content
  std::optional<bool> exact_match;   // present iff the logo has ground-truth text
};

inline Judgment judge(const LogoRecord& rec, const std::optional<std::string>& emitted) {
  Judgment j;
  j.y_hat = emitted.has_value() ? 1 : 0;
  if (rec.gt_text) j.exact_match = emitted && normalize_text(*emitted) == normalize_text(*rec.gt_text);
  return j;
}

}  // namespace logohall

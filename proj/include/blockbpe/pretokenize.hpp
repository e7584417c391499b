#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "blockbpe/merge_table.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe {

// ---- special-token splitting ----

struct Segment {
  enum class Kind { literal, special };

  Kind kind;
  std::string bytes;
  std::optional<TokenId> special_id;  // present iff kind == special

  static Segment literal(std::string b) { return {Kind::literal, std::move(b), std::nullopt}; }
  static Segment special(std::string b, TokenId id) { return {Kind::special, std::move(b), id}; }
};

// Greedy left-to-right scan: at each position the longest matching special
// token is consumed; maximal runs of non-matching bytes become literal
// segments. Concatenating all segment bytes reproduces the input exactly.
inline std::vector<Segment> split_specials(std::string_view input,
                                           const SpecialTokenSet& specials) {
  std::vector<Segment> out;
  std::string pending;
  std::size_t pos = 0;
  auto flush = [&] {
    if (!pending.empty()) {
      out.push_back(Segment::literal(std::move(pending)));
      pending.clear();
    }
  };
  while (pos < input.size()) {
    if (!specials.empty()) {
      if (auto m = specials.match(input, pos)) {
        flush();
        out.push_back(Segment::special(std::string(input.substr(pos, m->first)), m->second));
        pos += m->first;
        continue;
      }
    }
    pending.push_back(input[pos]);
    ++pos;
  }
  flush();
  return out;
}

// One token per byte. Depends only on byte values, never on character class.
inline TokenSeq bytes_to_initial_tokens(std::string_view bytes, const MergeTable& table) {
  TokenSeq out;
  out.reserve(bytes.size());
  for (unsigned char b : bytes) {
    TokenId id = table.byte_token(b);
    if (id == kInvalidToken)
      throw IntegrityError("vocabulary has no single-byte token for byte value " +
                           std::to_string(b));
    out.push_back(id);
  }
  return out;
}

inline TokenSeq bytes_to_initial_tokens(const Segment& segment, const MergeTable& table) {
  if (segment.kind != Segment::Kind::literal)
    throw UsageError("bytes_to_initial_tokens requires a literal segment");
  return bytes_to_initial_tokens(segment.bytes, table);
}

// ---- pattern splitter (reference path only) ----
//
// The published gpt2 pattern needs unicode letter/number classes and a
// trailing-whitespace lookahead, which std::regex cannot express, so that
// pattern gets a dedicated matcher. Any other specification is compiled as
// an ECMAScript regex over bytes; unmatched bytes between matches are
// emitted as single-byte chunks so the output always covers the input.

inline constexpr std::string_view kGpt2Pattern =
    R"('s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+)";

namespace unicode {

// Pragmatic category tables covering the major alphabetic scripts; rarer
// categories fall through to the punctuation class. The byte-level engine
// never consults these.
inline constexpr std::uint32_t kLetterRanges[][2] = {
    {0x00aa, 0x00aa}, {0x00b5, 0x00b5}, {0x00ba, 0x00ba}, {0x00c0, 0x00d6},
    {0x00d8, 0x00f6}, {0x00f8, 0x02c1}, {0x0370, 0x0374}, {0x0376, 0x0377},
    {0x037a, 0x037d}, {0x037f, 0x037f}, {0x0386, 0x0386}, {0x0388, 0x03f5},
    {0x03f7, 0x0481}, {0x048a, 0x052f}, {0x0531, 0x0556}, {0x0561, 0x0587},
    {0x05d0, 0x05ea}, {0x0620, 0x064a}, {0x0671, 0x06d3}, {0x0904, 0x0939},
    {0x0958, 0x0961}, {0x0e01, 0x0e30}, {0x10a0, 0x10c5}, {0x10d0, 0x10fa},
    {0x1e00, 0x1f15}, {0x1f18, 0x1f1d}, {0x1f20, 0x1f45}, {0x1f48, 0x1f4d},
    {0x1f50, 0x1f7d}, {0x1f80, 0x1fb4}, {0x2c60, 0x2c7f}, {0x3041, 0x3096},
    {0x30a1, 0x30fa}, {0x4e00, 0x9fff}, {0xa720, 0xa7ff}, {0xac00, 0xd7a3},
};

inline constexpr std::uint32_t kNumberRanges[][2] = {
    {0x00b2, 0x00b3}, {0x00b9, 0x00b9}, {0x00bc, 0x00be}, {0x0660, 0x0669},
    {0x06f0, 0x06f9}, {0x0966, 0x096f}, {0x0e50, 0x0e59}, {0x2070, 0x2079},
    {0x2080, 0x2089}, {0xff10, 0xff19},
};

inline constexpr std::uint32_t kSpaceCodepoints[] = {
    0x0085, 0x00a0, 0x1680, 0x2000, 0x2001, 0x2002, 0x2003, 0x2004, 0x2005,
    0x2006, 0x2007, 0x2008, 0x2009, 0x200a, 0x2028, 0x2029, 0x202f, 0x205f,
    0x3000,
};

template <std::size_t N>
inline bool in_ranges(std::uint32_t cp, const std::uint32_t (&ranges)[N][2]) {
  std::size_t lo = 0, hi = N;
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (cp > ranges[mid][1])
      lo = mid + 1;
    else if (cp < ranges[mid][0])
      hi = mid;
    else
      return true;
  }
  return false;
}

inline bool is_letter(std::uint32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z');
  return in_ranges(cp, kLetterRanges);
}

inline bool is_number(std::uint32_t cp) {
  if (cp < 0x80) return cp >= '0' && cp <= '9';
  return in_ranges(cp, kNumberRanges);
}

inline bool is_space(std::uint32_t cp) {
  if (cp < 0x80) return cp == ' ' || (cp >= 0x09 && cp <= 0x0d);
  for (std::uint32_t s : kSpaceCodepoints)
    if (cp == s) return true;
  return false;
}

}  // namespace unicode

namespace detail {

enum class CharClass { letter, number, space, other };

inline CharClass classify(std::string_view text, std::size_t pos, std::size_t& advance) {
  std::size_t next = pos;
  std::uint32_t cp = next_utf8(text, next);
  advance = next - pos;
  if (unicode::is_letter(cp)) return CharClass::letter;
  if (unicode::is_number(cp)) return CharClass::number;
  if (unicode::is_space(cp)) return CharClass::space;
  return CharClass::other;
}

// End of the gpt2-pattern match starting at `pos` (always > pos).
inline std::size_t gpt2_chunk_end(std::string_view text, std::size_t pos) {
  std::size_t adv0;
  CharClass c0 = classify(text, pos, adv0);

  // 's|'t|'re|'ve|'m|'ll|'d  (case-sensitive)
  if (text[pos] == '\'' && pos + 1 < text.size()) {
    char c1 = text[pos + 1];
    if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') return pos + 2;
    if (pos + 2 < text.size()) {
      char c2 = text[pos + 2];
      if ((c1 == 'l' && c2 == 'l') || (c1 == 'r' && c2 == 'e') || (c1 == 'v' && c2 == 'e'))
        return pos + 3;
    }
  }

  auto run_of = [&](CharClass want, std::size_t start) {
    std::size_t p = start;
    while (p < text.size()) {
      std::size_t adv;
      if (classify(text, p, adv) != want) break;
      p += adv;
    }
    return p;
  };

  //  ?\p{L}+  and  ?\p{N}+  and  ?[^\s\p{L}\p{N}]+
  for (CharClass want : {CharClass::letter, CharClass::number, CharClass::other}) {
    std::size_t p = pos;
    if (text[p] == ' ' && p + 1 < text.size()) ++p;
    std::size_t end = run_of(want, p);
    if (end > p) return end;
  }

  // \s+(?!\S)  then  \s+
  if (c0 == CharClass::space) {
    std::size_t p = pos;
    std::size_t last_start = pos;  // start of the final whitespace scalar
    while (p < text.size()) {
      std::size_t adv;
      if (classify(text, p, adv) != CharClass::space) break;
      last_start = p;
      p += adv;
    }
    if (p >= text.size()) return p;           // trailing whitespace, lookahead holds
    if (last_start > pos) return last_start;  // back off one character, not one byte
    return p;
  }

  return pos + adv0;  // lone unclassifiable byte
}

inline std::vector<std::string> gpt2_pretokenize(std::string_view input) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < input.size()) {
    std::size_t end = gpt2_chunk_end(input, pos);
    out.emplace_back(input.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

inline std::vector<std::string> regex_pretokenize(std::string_view input,
                                                  const std::string& pattern) {
  std::regex re;
  try {
    re = std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw UsageError("invalid pattern \"" + pattern + "\": " + e.what());
  }
  std::vector<std::string> out;
  std::string subject(input);
  auto begin = std::sregex_iterator(subject.begin(), subject.end(), re);
  auto end = std::sregex_iterator();
  std::size_t covered = 0;
  for (auto it = begin; it != end; ++it) {
    std::size_t match_pos = static_cast<std::size_t>(it->position());
    for (std::size_t g = covered; g < match_pos; ++g) out.emplace_back(1, subject[g]);
    covered = std::max(covered, match_pos + static_cast<std::size_t>(it->length()));
    if (it->length() > 0) out.push_back(it->str());
  }
  for (std::size_t g = covered; g < subject.size(); ++g) out.emplace_back(1, subject[g]);
  return out;
}

}  // namespace detail

// Splits input into contiguous non-overlapping chunks covering it. The
// specification string is either the published pattern of the tokenizer
// being compared against ("gpt2" is accepted as an alias for the gpt2 one)
// or any ECMAScript-compatible regex.
inline std::vector<std::string> pattern_pretokenize(std::string_view input,
                                                    const std::string& pattern) {
  if (pattern.empty()) throw UsageError("empty splitter specification");
  if (pattern == "gpt2" || pattern == kGpt2Pattern) return detail::gpt2_pretokenize(input);
  return detail::regex_pretokenize(input, pattern);
}

}  // namespace blockbpe

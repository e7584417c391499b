#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// here must stay independent of the implementation paths they check.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "blockbpe/merge_table.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe::testing {

// Toy table from the module examples: {a:0, b:1, c:2, ab:3, abc:4},
// merges ["a b", "ab c"].
inline MergeTable toy_table() {
  MergeTable t;
  t.add_token(0, "a");
  t.add_token(1, "b");
  t.add_token(2, "c");
  t.add_token(3, "ab");
  t.add_token(4, "abc");
  t.add_merge(0, 0, 1, 3);
  t.add_merge(1, 3, 2, 4);
  t.finalize();
  return t;
}

// Eight-merge table over the base alphabet {a, b, c, d}. Merge components
// always predate their rank (training-consistent), covering nested merges,
// self-pairs and overlapping occurrences.
inline MergeTable toy8_table() {
  MergeTable t;
  t.add_token(0, "a");
  t.add_token(1, "b");
  t.add_token(2, "c");
  t.add_token(3, "d");
  t.add_token(4, "ab");
  t.add_token(5, "abc");
  t.add_token(6, "cd");
  t.add_token(7, "dd");
  t.add_token(8, "abab");
  t.add_token(9, "ba");
  t.add_token(10, "ddd");
  t.add_token(11, "aa");
  t.add_merge(0, 0, 1, 4);   // a  b  -> ab
  t.add_merge(1, 4, 2, 5);   // ab c  -> abc
  t.add_merge(2, 2, 3, 6);   // c  d  -> cd
  t.add_merge(3, 3, 3, 7);   // d  d  -> dd
  t.add_merge(4, 4, 4, 8);   // ab ab -> abab
  t.add_merge(5, 1, 0, 9);   // b  a  -> ba
  t.add_merge(6, 7, 3, 10);  // dd d  -> ddd
  t.add_merge(7, 0, 0, 11);  // a  a  -> aa
  t.finalize();
  return t;
}

// Doubling chain: ab -> 3, then pairs of equal tokens keep merging. Used by
// the repeated-"ab" pass-count family ([0,1] x 64 collapses in 7 passes).
inline MergeTable doubling_table() {
  MergeTable t;
  t.add_token(0, "a");
  t.add_token(1, "b");
  std::string word = "ab";
  t.add_token(3, word);
  t.add_merge(0, 0, 1, 3);
  TokenId prev = 3;
  for (Rank r = 1; r <= 6; ++r) {
    TokenId merged = prev + 2;
    word += word;
    t.add_token(merged, word);
    t.add_merge(r, prev, prev, merged);
    prev = merged;
  }
  t.finalize();
  return t;
}

// Random training-consistent table over `base_alphabet` single-byte tokens:
// each merge combines tokens that already exist, so every pair formed around
// a merged token has a strictly greater rank than the merge that created it.
inline MergeTable random_table(std::mt19937& rng, unsigned base_alphabet, unsigned merge_count) {
  MergeTable t;
  std::vector<TokenId> pool;
  for (unsigned i = 0; i < base_alphabet; ++i) {
    t.add_token(i, std::string(1, static_cast<char>('a' + i)));
    pool.push_back(i);
  }
  std::map<std::pair<TokenId, TokenId>, bool> used;
  std::map<std::string, bool> words;
  TokenId next_id = base_alphabet;
  Rank rank = 0;
  unsigned attempts = 0;
  while (rank < merge_count && attempts < merge_count * 50) {
    ++attempts;
    TokenId left = pool[rng() % pool.size()];
    TokenId right = pool[rng() % pool.size()];
    if (used.count({left, right})) continue;
    std::string word = *t.bytes_of(left) + *t.bytes_of(right);
    if (words.count(word)) continue;  // token_bytes must stay a bijection
    used[{left, right}] = true;
    words[word] = true;
    t.add_token(next_id, word);
    t.add_merge(rank, left, right, next_id);
    pool.push_back(next_id);
    ++next_id;
    ++rank;
  }
  t.finalize();
  return t;
}

inline std::string random_bytes(std::mt19937& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
  std::uniform_int_distribution<int> byte_dist(0, 255);
  std::string s(len_dist(rng), '\0');
  for (char& c : s) c = static_cast<char>(byte_dist(rng));
  return s;
}

// Random well-formed UTF-8 (mixed 1-4 byte scalars) of at most ~max_len bytes.
inline std::string random_utf8(std::mt19937& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
  std::size_t budget = len_dist(rng);
  std::string out;
  while (out.size() + 4 <= budget + 4 && out.size() < budget) {
    std::uint32_t cp = 0;
    switch (rng() % 4) {
      case 0: cp = rng() % 0x80; break;
      case 1: cp = 0x80 + rng() % (0x800 - 0x80); break;
      case 2:
        cp = 0x800 + rng() % (0x10000 - 0x800);
        if (cp >= 0xd800 && cp <= 0xdfff) cp = 0x4e00;  // skip surrogates
        break;
      default: cp = 0x10000 + rng() % (0x110000 - 0x10000); break;
    }
    detail::append_utf8(out, cp);
  }
  if (out.size() > budget) out.resize(budget);  // may clip a scalar; raw bytes are fine
  return out;
}

// Random token sequence over a small id universe (for levenshtein tests).
inline TokenSeq random_seq(std::mt19937& rng, std::size_t max_len, TokenId universe) {
  std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
  TokenSeq s(len_dist(rng));
  for (TokenId& id : s) id = rng() % universe;
  return s;
}

// Memoized recursive transcription of the edit-distance definition. This is
// the oracle for the rolling-rows implementation; keep it definitional.
inline std::uint32_t levenshtein_oracle(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::vector<std::int64_t>> memo(a.size() + 1,
                                              std::vector<std::int64_t>(b.size() + 1, -1));
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::uint32_t {
    if (i == 0) return static_cast<std::uint32_t>(j);
    if (j == 0) return static_cast<std::uint32_t>(i);
    if (memo[i][j] >= 0) return static_cast<std::uint32_t>(memo[i][j]);
    std::uint32_t del = self(self, i - 1, j) + 1;
    std::uint32_t ins = self(self, i, j - 1) + 1;
    std::uint32_t sub = self(self, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
    std::uint32_t best = std::min({del, ins, sub});
    memo[i][j] = best;
    return best;
  };
  return rec(rec, a.size(), b.size());
}

// Path of the repo test fixtures, injected by CMake.
inline std::string testdata(const std::string& rel) {
  return std::string(BLOCKBPE_TESTDATA_DIR) + "/" + rel;
}

inline const MergeTable& gpt2_table() {
  static const MergeTable table = load_merge_table_files(
      testdata("gpt2/vocab.json"), testdata("gpt2/merges.txt"), VocabFormat::gpt2);
  return table;
}

}  // namespace blockbpe::testing

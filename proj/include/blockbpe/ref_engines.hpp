#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "blockbpe/merge_table.hpp"
#include "blockbpe/pretokenize.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe {

// Ground-truth BPE: one merge per loop iteration. Each iteration finds the
// adjacent pair with the globally minimum rank and replaces its left-most
// occurrence. This function is the permanent oracle for every other engine;
// keep it a direct transcription, not an optimization target.
//
// When `merge_trace` is given it receives the selected rank per iteration.
inline TokenSeq naive_bpe(TokenSeq tokens, const MergeTable& table,
                          std::vector<Rank>* merge_trace = nullptr) {
  while (tokens.size() > 1) {
    std::optional<Rank> best;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      auto r = table.rank_of(tokens[i], tokens[i + 1]);
      if (r && (!best || *r < *best)) {
        best = *r;
        best_pos = i;
      }
    }
    if (!best) break;
    if (merge_trace) merge_trace->push_back(*best);
    tokens[best_pos] = *table.merged_of(tokens[best_pos], tokens[best_pos + 1]);
    tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  return tokens;
}

// Priority-queue baseline, output-identical to naive_bpe. Live adjacent
// pairs sit in a min-heap keyed by (rank, position of the left token);
// positions never move, so heap order reproduces the left-most rule. Stale
// entries are invalidated lazily via per-position generation stamps.
inline TokenSeq heap_bpe(const TokenSeq& input, const MergeTable& table) {
  const std::size_t n = input.size();
  if (n < 2) return input;

  std::vector<TokenId> ids(input);
  std::vector<std::int32_t> next(n), prev(n);
  std::vector<std::uint32_t> stamp(n, 0);
  std::vector<char> alive(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    next[i] = (i + 1 < n) ? static_cast<std::int32_t>(i + 1) : -1;
    prev[i] = (i > 0) ? static_cast<std::int32_t>(i - 1) : -1;
  }

  struct HeapEntry {
    Rank rank;
    std::uint32_t pos;
    std::uint32_t stamp;
    bool operator>(const HeapEntry& o) const {
      return rank != o.rank ? rank > o.rank : pos > o.pos;
    }
  };
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;

  auto push_pair = [&](std::int32_t pos) {
    if (pos < 0 || next[pos] < 0) return;
    const PairMap::Entry* e = table.find_pair(pack_pair(ids[pos], ids[next[pos]]));
    if (e) heap.push({e->rank, static_cast<std::uint32_t>(pos), stamp[pos]});
  };
  for (std::size_t i = 0; i + 1 < n; ++i) push_pair(static_cast<std::int32_t>(i));

  std::size_t live = n;
  while (!heap.empty()) {
    HeapEntry top = heap.top();
    heap.pop();
    std::int32_t pos = static_cast<std::int32_t>(top.pos);
    if (!alive[pos] || stamp[pos] != top.stamp) continue;  // stale

    std::int32_t right = next[pos];
    ids[pos] = table.find_pair(pack_pair(ids[pos], ids[right]))->merged;
    alive[right] = 0;
    next[pos] = next[right];
    if (next[right] >= 0) prev[next[right]] = pos;
    --live;

    ++stamp[pos];
    push_pair(pos);
    if (prev[pos] >= 0) {
      ++stamp[prev[pos]];
      push_pair(prev[pos]);
    }
  }

  TokenSeq out;
  out.reserve(live);
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) out.push_back(ids[i]);
  return out;
}

// ---- reference encode ----

struct PreSpec {
  enum class Mode { byte_level, pattern };

  Mode mode = Mode::byte_level;
  std::string pattern;  // splitter specification when mode == pattern

  static PreSpec byte_level() { return {Mode::byte_level, {}}; }
  static PreSpec with_pattern(std::string spec) { return {Mode::pattern, std::move(spec)}; }
};

enum class RefEngine { naive, heap };

// Sequential reference encode. Special segments pass through as their ids;
// in pattern mode merges run independently within each chunk, in byte_level
// mode they run across the whole literal segment.
inline TokenSeq encode_reference(std::string_view input, const MergeTable& table,
                                 const SpecialTokenSet& specials, const PreSpec& pre,
                                 RefEngine engine = RefEngine::heap) {
  auto run = [&](const TokenSeq& initial) {
    return engine == RefEngine::naive ? naive_bpe(initial, table) : heap_bpe(initial, table);
  };

  TokenSeq out;
  for (const Segment& seg : split_specials(input, specials)) {
    if (seg.kind == Segment::Kind::special) {
      out.push_back(*seg.special_id);
      continue;
    }
    if (pre.mode == PreSpec::Mode::byte_level) {
      TokenSeq merged = run(bytes_to_initial_tokens(seg.bytes, table));
      out.insert(out.end(), merged.begin(), merged.end());
    } else {
      for (const std::string& chunk : pattern_pretokenize(seg.bytes, pre.pattern)) {
        TokenSeq merged = run(bytes_to_initial_tokens(chunk, table));
        out.insert(out.end(), merged.begin(), merged.end());
      }
    }
  }
  return out;
}

}  // namespace blockbpe

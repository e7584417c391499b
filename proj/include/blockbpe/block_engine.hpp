#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "blockbpe/merge_table.hpp"
#include "blockbpe/thread_pool.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe {

inline constexpr Rank kNoRank = std::numeric_limits<Rank>::max();

struct BlockConfig {
  // Logical threads per block. Power of two, 32-1024 (the hardware block
  // limits this models).
  std::uint32_t block_size = 256;
  // Safety cap on merge passes; defaults to the input length, which every
  // valid table satisfies since a pass merges at least one pair.
  std::optional<std::size_t> max_passes;

  void validate() const {
    if (block_size < 32 || block_size > 1024 || (block_size & (block_size - 1)) != 0)
      throw UsageError("block_size must be a power of two in [32, 1024], got " +
                       std::to_string(block_size));
    if (max_passes && *max_passes < 1) throw UsageError("max_passes must be >= 1");
  }
};

// Strides a logical thread makes over a sequence of n items: d = ceil(n / block_size).
// d == 1 exactly when the block fully spans the sequence.
inline std::uint32_t coarsening_factor(std::size_t seq_len, const BlockConfig& config) {
  config.validate();
  return static_cast<std::uint32_t>((seq_len + config.block_size - 1) / config.block_size);
}

// Per-pass diagnostics, collected when a trace sink is supplied.
struct PassRecord {
  std::size_t pass_index;
  Rank min_rank;
  std::size_t merges_applied;
};
using PassTrace = std::vector<PassRecord>;

namespace engine_detail {

// Phase bodies shared by the public spec-level operations and the block_bpe
// pass loop. Each runs either inline (pool == nullptr) or fanned out over a
// PhasePool with a barrier at the end; results are bit-identical.

// Emulates the logical-thread layout: thread t handles items t + k*block_size,
// k < d. Threads are mapped contiguously onto pool workers.
template <typename Fn>
void for_each_strided(std::size_t n_items, std::uint32_t block_size, PhasePool* pool,
                      const Fn& body) {
  if (!pool || pool->worker_count() < 2) {
    for (std::size_t i = 0; i < n_items; ++i) body(i);
    return;
  }
  pool->run_phase(block_size, [&](unsigned, std::size_t t_begin, std::size_t t_end) {
    for (std::size_t t = t_begin; t < t_end; ++t)
      for (std::size_t i = t; i < n_items; i += block_size) body(i);
  });
}

// Step (2): rank lookup for every adjacent pair. ranks must have size n-1
// (n >= 1) and is fully overwritten.
inline void fill_pair_ranks(const TokenId* tokens, std::size_t n, const MergeTable& table,
                            Rank* ranks, const BlockConfig& config, PhasePool* pool) {
  if (n < 2) return;
  for_each_strided(n - 1, config.block_size, pool, [&](std::size_t i) {
    const PairMap::Entry* e = table.find_pair(pack_pair(tokens[i], tokens[i + 1]));
    ranks[i] = e ? e->rank : kNoRank;
  });
}

// Step (3): block-wide min reduction. kNoRank when no pair is mergeable.
inline Rank reduce_min_rank(const Rank* ranks, std::size_t count, PhasePool* pool) {
  if (!pool || pool->worker_count() < 2) {
    Rank best = kNoRank;
    for (std::size_t i = 0; i < count; ++i) best = std::min(best, ranks[i]);
    return best;
  }
  std::vector<Rank> partial(pool->worker_count(), kNoRank);
  pool->run_phase(count, [&](unsigned chunk, std::size_t begin, std::size_t end) {
    Rank best = kNoRank;
    for (std::size_t i = begin; i < end; ++i) best = std::min(best, ranks[i]);
    partial[chunk] = best;
  });
  Rank best = kNoRank;
  for (Rank r : partial) best = std::min(best, r);
  return best;
}

// Step (4): left-greedy marking. flags[i+1] = 1 iff ranks[i] == min_rank and
// flags[i] == 0; flags[0] = 0. The parallel path assigns each maximal run of
// matching pair positions to the worker owning the run start and marks
// alternate positions, which is bit-identical to the sequential rule.
inline void fill_merge_flags(const Rank* ranks, std::size_t n, Rank min_rank,
                             std::uint8_t* flags, PhasePool* pool) {
  if (!pool || pool->worker_count() < 2) {
    if (n == 0) return;
    flags[0] = 0;
    for (std::size_t i = 0; i + 1 < n; ++i)
      flags[i + 1] = (ranks[i] == min_rank && !flags[i]) ? 1 : 0;
    return;
  }
  pool->run_phase(n, [&](unsigned, std::size_t begin, std::size_t end) {
    std::fill(flags + begin, flags + end, 0);
  });
  const std::size_t pairs = n - 1;
  pool->run_phase(pairs, [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      bool run_start = ranks[p] == min_rank && (p == 0 || ranks[p - 1] != min_rank);
      if (!run_start) continue;
      // March the whole run even past this chunk's end; stop at the first
      // position that opens a new run (owned by another worker).
      for (std::size_t q = p; q < pairs && ranks[q] == min_rank; q += 2) {
        if (q > p && ranks[q - 1] != min_rank) break;
        flags[q + 1] = 1;
      }
    }
  });
}

// Exclusive prefix sum over flags. The parallel path is a blocked scan:
// per-chunk sums, a short sequential pass over chunk totals, then local
// exclusive scans. Integer addition makes any tree shape give the same bits.
inline void fill_scan(const std::uint8_t* flags, std::size_t n, std::uint32_t* offsets,
                      PhasePool* pool) {
  if (!pool || pool->worker_count() < 2) {
    std::uint32_t acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      offsets[i] = acc;
      acc += flags[i];
    }
    return;
  }
  std::vector<std::uint32_t> chunk_sums(pool->worker_count(), 0);
  pool->run_phase(n, [&](unsigned chunk, std::size_t begin, std::size_t end) {
    std::uint32_t acc = 0;
    for (std::size_t i = begin; i < end; ++i) acc += flags[i];
    chunk_sums[chunk] = acc;
  });
  std::uint32_t base = 0;
  for (std::uint32_t& s : chunk_sums) {
    std::uint32_t next = base + s;
    s = base;
    base = next;
  }
  pool->run_phase(n, [&](unsigned chunk, std::size_t begin, std::size_t end) {
    std::uint32_t acc = chunk_sums[chunk];
    for (std::size_t i = begin; i < end; ++i) {
      offsets[i] = acc;
      acc += flags[i];
    }
  });
}

// Step (5): write token i or the merged (i, i+1) to index i - offsets[i];
// tokens marked as merged-away write nothing.
inline void compact_into(const TokenId* tokens, std::size_t n, const MergeTable& table,
                         const std::uint8_t* flags, const std::uint32_t* offsets, TokenId* out,
                         const BlockConfig& config, PhasePool* pool) {
  for_each_strided(n, config.block_size, pool, [&](std::size_t i) {
    if (flags[i]) return;
    std::size_t dst = i - offsets[i];
    if (i + 1 < n && flags[i + 1]) {
      const PairMap::Entry* e = table.find_pair(pack_pair(tokens[i], tokens[i + 1]));
      if (!e)
        throw ContractViolation("flags mark a pair that is not in the merge table at index " +
                                std::to_string(i));
      out[dst] = e->merged;
    } else {
      out[dst] = tokens[i];
    }
  });
}

}  // namespace engine_detail

// ---- spec-level operations (sequential definitions) ----

// Rank of each adjacent pair; entry i covers (tokens[i], tokens[i+1]).
inline std::vector<std::optional<Rank>> pair_ranks(const TokenSeq& tokens,
                                                   const MergeTable& table) {
  if (tokens.size() < 2) return {};
  std::vector<Rank> raw(tokens.size() - 1, kNoRank);
  engine_detail::fill_pair_ranks(tokens.data(), tokens.size(), table, raw.data(), BlockConfig{},
                                 nullptr);
  std::vector<std::optional<Rank>> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i] != kNoRank) out[i] = raw[i];
  return out;
}

inline std::optional<Rank> min_rank_reduce(const std::vector<std::optional<Rank>>& ranks) {
  std::optional<Rank> best;
  for (const auto& r : ranks)
    if (r && (!best || *r < *best)) best = *r;
  return best;
}

// Merge flags (length n): flags[i+1] = 1 iff pair (i, i+1) has the minimum
// rank and token i is not itself being merged away. No two adjacent flags
// are ever both 1.
inline std::vector<std::uint8_t> mark_merges(const TokenSeq& tokens, const MergeTable& table,
                                             Rank min_rank) {
  std::vector<std::uint8_t> flags(tokens.size(), 0);
  if (tokens.size() < 2) return flags;
  std::vector<Rank> raw(tokens.size() - 1, kNoRank);
  engine_detail::fill_pair_ranks(tokens.data(), tokens.size(), table, raw.data(), BlockConfig{},
                                 nullptr);
  engine_detail::fill_merge_flags(raw.data(), tokens.size(), min_rank, flags.data(), nullptr);
  return flags;
}

// Exclusive prefix sum of merge flags, giving each surviving token its shift.
inline std::vector<std::uint32_t> exclusive_scan(const std::vector<std::uint8_t>& flags) {
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i] > 1)
      throw ContractViolation("merge flags must be 0/1, got " + std::to_string(flags[i]) +
                              " at index " + std::to_string(i));
    if (i > 0 && flags[i] && flags[i - 1])
      throw ContractViolation("adjacent merge flags at indices " + std::to_string(i - 1) +
                              " and " + std::to_string(i) +
                              " are both set; left-greedy marking forbids this");
  }
  std::vector<std::uint32_t> offsets(flags.size(), 0);
  engine_detail::fill_scan(flags.data(), flags.size(), offsets.data(), nullptr);
  return offsets;
}

// Applies one pass of marked merges. offsets must equal exclusive_scan(flags).
inline TokenSeq compact(const TokenSeq& tokens, const MergeTable& table,
                        const std::vector<std::uint8_t>& flags,
                        const std::vector<std::uint32_t>& offsets) {
  const std::size_t n = tokens.size();
  if (flags.size() != n || offsets.size() != n)
    throw ContractViolation("flags/offsets length does not match token count");
  std::uint32_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (offsets[i] != acc)
      throw ContractViolation("offsets are not the exclusive scan of flags at index " +
                              std::to_string(i));
    acc += flags[i];
  }
  TokenSeq out(n - acc);
  engine_detail::compact_into(tokens.data(), n, table, flags.data(), offsets.data(), out.data(),
                              BlockConfig{}, nullptr);
  return out;
}

// ---- the block engine ----

// Deterministic block-parallel BPE. Each pass runs the barrier-separated
// phases rank-lookup -> min-reduce -> mark -> scan -> compact, merging every
// occurrence of the minimum-rank pair at once with left-greedy overlap
// resolution. Output equals naive_bpe on every input; block_size and pool
// affect scheduling only, never results.
//
// Token storage is double-buffered: each pass reads one buffer and writes
// the compacted sequence to the other.
inline TokenSeq block_bpe(const TokenSeq& tokens, const MergeTable& table,
                          const BlockConfig& config, PhasePool* pool = nullptr,
                          PassTrace* trace = nullptr) {
  config.validate();
  const std::size_t max_passes = config.max_passes.value_or(tokens.size());

  std::size_t n = tokens.size();
  if (n < 2) return tokens;

  std::vector<TokenId> buf_a(tokens.begin(), tokens.end());
  std::vector<TokenId> buf_b(n);
  std::vector<Rank> ranks(n - 1);
  std::vector<std::uint8_t> flags(n);
  std::vector<std::uint32_t> offsets(n);
  TokenId* read = buf_a.data();
  TokenId* write = buf_b.data();

  std::size_t pass = 0;
  while (n >= 2) {
    engine_detail::fill_pair_ranks(read, n, table, ranks.data(), config, pool);
    Rank min_rank = engine_detail::reduce_min_rank(ranks.data(), n - 1, pool);
    if (min_rank == kNoRank) break;

    if (pass >= max_passes)
      throw MaxPassesError(
          "block_bpe exceeded " + std::to_string(max_passes) +
              " merge passes; the merge table is pathological for this input",
          TokenSeq(read, read + n), pass);

    engine_detail::fill_merge_flags(ranks.data(), n, min_rank, flags.data(), pool);
    engine_detail::fill_scan(flags.data(), n, offsets.data(), pool);
    std::size_t merged = offsets[n - 1] + flags[n - 1];
    engine_detail::compact_into(read, n, table, flags.data(), offsets.data(), write, config,
                                pool);

    ++pass;
    if (trace) trace->push_back({pass, min_rank, merged});
    n -= merged;
    std::swap(read, write);
  }

  return TokenSeq(read, read + n);
}

}  // namespace blockbpe

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockbpe {

using TokenId = std::uint32_t;
using Rank = std::uint32_t;

// Ordered list of token ids for one sequence. Order is significant; may be empty.
using TokenSeq = std::vector<TokenId>;

// Packed (left, right) pair used as hash key in merge lookups.
using PairKey = std::uint64_t;

inline PairKey pack_pair(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(left) << 32) | right;
}

inline std::pair<TokenId, TokenId> unpack_pair(PairKey key) {
  return {static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xffffffffu)};
}

// ---- Errors ----
//
// Exit-code mapping for the CLI: UsageError -> 1, everything else -> 2.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments, bad configuration, invalid splitter specification.
struct UsageError : Error {
  using Error::Error;
};

// Malformed input file (carries line/position context in the message).
struct ParseError : Error {
  using Error::Error;
};

// A loaded table or token stream violates a structural invariant.
struct IntegrityError : Error {
  using Error::Error;
};

// Token id not decodable under the given table/specials.
struct DecodeError : Error {
  using Error::Error;
};

// A caller broke an operation's precondition contract (e.g. inconsistent
// merge flags passed to compaction).
struct ContractViolation : Error {
  using Error::Error;
};

// The block engine exceeded its pass cap; carries the partial state so the
// pathological input can be inspected.
struct MaxPassesError : Error {
  MaxPassesError(const std::string& what, TokenSeq partial, std::size_t passes)
      : Error(what), partial_tokens(std::move(partial)), passes_run(passes) {}

  TokenSeq partial_tokens;
  std::size_t passes_run;
};

}  // namespace blockbpe

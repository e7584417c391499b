#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockbpe/block_engine.hpp"
#include "blockbpe/merge_table.hpp"
#include "blockbpe/pretokenize.hpp"
#include "blockbpe/thread_pool.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe {

struct BatchEncoding {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  TokenId pad_id = 0;
  std::vector<TokenId> ids;           // row-major batch_size x max_len
  std::vector<std::uint32_t> lengths; // true token count per row
  std::vector<std::uint8_t> mask;     // 1 = real token, 0 = padding
  std::size_t truncated_rows = 0;

  TokenId at(std::size_t row, std::size_t col) const { return ids[row * max_len + col]; }

  TokenSeq row(std::size_t r) const {
    const TokenId* base = ids.data() + r * max_len;
    return TokenSeq(base, base + lengths[r]);
  }
};

struct BatchLimits {
  // When set, rows are padded to exactly this length and longer rows are
  // truncated from the right (each truncation counted on the encoding).
  std::optional<std::uint32_t> max_len;
};

// Encodes one input the way encode_batch treats a row: specials split out
// and passed through, literal segments merged by the block engine.
inline TokenSeq encode_single(std::string_view input, const MergeTable& table,
                              const SpecialTokenSet& specials, const BlockConfig& config,
                              PhasePool* pool = nullptr) {
  TokenSeq out;
  for (const Segment& seg : split_specials(input, specials)) {
    if (seg.kind == Segment::Kind::special) {
      out.push_back(*seg.special_id);
      continue;
    }
    TokenSeq merged = block_bpe(bytes_to_initial_tokens(seg.bytes, table), table, config, pool);
    out.insert(out.end(), merged.begin(), merged.end());
  }
  return out;
}

// Encodes a batch, one logical block per sequence: rows fan out across the
// pool and each row runs the block engine independently. Row results are
// bit-identical to encoding each input alone; row order follows input order.
inline BatchEncoding encode_batch(const std::vector<std::string>& inputs,
                                  const MergeTable& table, const SpecialTokenSet& specials,
                                  const BlockConfig& config, TokenId pad_id, bool add_bos,
                                  bool add_eos, PhasePool* pool = nullptr,
                                  const BatchLimits& limits = {}) {
  config.validate();
  if (add_bos && !specials.bos_id())
    throw UsageError("add_bos requires a bos entry in the special token set");
  if (add_eos && !specials.eos_id())
    throw UsageError("add_eos requires an eos entry in the special token set");

  std::vector<TokenSeq> rows(inputs.size());
  auto encode_row = [&](std::size_t r) {
    try {
      TokenSeq row;
      if (add_bos) row.push_back(*specials.bos_id());
      TokenSeq body = encode_single(inputs[r], table, specials, config, nullptr);
      row.insert(row.end(), body.begin(), body.end());
      if (add_eos) row.push_back(*specials.eos_id());
      rows[r] = std::move(row);
    } catch (const IntegrityError& e) {
      throw IntegrityError("row " + std::to_string(r) + ": " + e.what());
    } catch (const UsageError& e) {
      throw UsageError("row " + std::to_string(r) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("row " + std::to_string(r) + ": " + e.what());
    }
  };
  if (pool && pool->worker_count() >= 2) {
    pool->run_items(inputs.size(), encode_row);
  } else {
    for (std::size_t r = 0; r < inputs.size(); ++r) encode_row(r);
  }

  BatchEncoding out;
  out.batch_size = inputs.size();
  out.pad_id = pad_id;
  std::size_t widest = 0;
  for (auto& row : rows) widest = std::max(widest, row.size());
  if (limits.max_len) {
    for (auto& row : rows) {
      if (row.size() > *limits.max_len) {
        row.resize(*limits.max_len);
        ++out.truncated_rows;
      }
    }
    out.max_len = *limits.max_len;
  } else {
    out.max_len = widest;
  }

  out.ids.assign(out.batch_size * out.max_len, pad_id);
  out.mask.assign(out.batch_size * out.max_len, 0);
  out.lengths.resize(out.batch_size);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.lengths[r] = static_cast<std::uint32_t>(rows[r].size());
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      out.ids[r * out.max_len + c] = rows[r][c];
      out.mask[r * out.max_len + c] = 1;
    }
  }
  return out;
}

inline std::vector<std::string> decode_batch(const BatchEncoding& encoding,
                                             const MergeTable& table,
                                             const SpecialTokenSet& specials, bool skip_specials,
                                             PhasePool* pool = nullptr) {
  std::vector<std::string> out(encoding.batch_size);
  auto decode_row = [&](std::size_t r) {
    TokenSeq ids = encoding.row(r);
    if (skip_specials) {
      TokenSeq kept;
      kept.reserve(ids.size());
      for (TokenId id : ids)
        if (!specials.contains_id(id)) kept.push_back(id);
      ids = std::move(kept);
    }
    try {
      out[r] = decode(table, specials, ids);
    } catch (const DecodeError& e) {
      throw DecodeError("row " + std::to_string(r) + ": " + e.what());
    }
  };
  if (pool && pool->worker_count() >= 2) {
    pool->run_items(encoding.batch_size, decode_row);
  } else {
    for (std::size_t r = 0; r < encoding.batch_size; ++r) decode_row(r);
  }
  return out;
}

// ---- serialization ----

// JSON-lines: one {"ids": [...], "len": n} object per row, unpadded.
inline void write_batch_jsonl(std::ostream& os, const BatchEncoding& encoding) {
  for (std::size_t r = 0; r < encoding.batch_size; ++r) {
    nlohmann::json row;
    row["ids"] = encoding.row(r);
    row["len"] = encoding.lengths[r];
    os << row.dump() << '\n';
  }
}

// Reads token sequences from JSON-lines; accepts any objects carrying an
// "ids" array (the eval reference-ingestion format uses the same shape).
inline std::vector<TokenSeq> read_jsonl_token_seqs(std::istream& is, std::string_view name) {
  std::vector<TokenSeq> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(name) + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!row.is_object() || !row.contains("ids") || !row["ids"].is_array())
      throw ParseError(std::string(name) + ":" + std::to_string(line_no) +
                       ": expected an object with an \"ids\" array");
    out.push_back(row["ids"].get<TokenSeq>());
  }
  return out;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, std::string_view name) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(std::string(name) + ": truncated batch file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

// Flat binary layout for downstream loaders, little-endian:
//   magic "BBPE", u32 batch, u32 max_len, u32 pad_id, row-major u32 ids.
inline void write_batch_binary(std::ostream& os, const BatchEncoding& encoding) {
  os.write("BBPE", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(encoding.batch_size));
  detail::put_u32(os, static_cast<std::uint32_t>(encoding.max_len));
  detail::put_u32(os, encoding.pad_id);
  for (TokenId id : encoding.ids) detail::put_u32(os, id);
}

// Row lengths are not stored in the binary format; they are reconstructed by
// stripping trailing pad_id cells, so a row that genuinely ends in pad_id
// (e.g. eos used as pad) reads back shorter. Use the JSON-lines format when
// exact lengths matter.
inline BatchEncoding read_batch_binary(std::istream& is, std::string_view name) {
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "BBPE")
    throw ParseError(std::string(name) + ": bad magic, not a BBPE batch file");
  BatchEncoding out;
  out.batch_size = detail::get_u32(is, name);
  out.max_len = detail::get_u32(is, name);
  out.pad_id = detail::get_u32(is, name);
  out.ids.resize(out.batch_size * out.max_len);
  for (TokenId& id : out.ids) id = detail::get_u32(is, name);
  out.lengths.resize(out.batch_size);
  out.mask.assign(out.ids.size(), 0);
  for (std::size_t r = 0; r < out.batch_size; ++r) {
    std::size_t len = out.max_len;
    while (len > 0 && out.ids[r * out.max_len + len - 1] == out.pad_id) --len;
    out.lengths[r] = static_cast<std::uint32_t>(len);
    for (std::size_t c = 0; c < len; ++c) out.mask[r * out.max_len + c] = 1;
  }
  return out;
}

}  // namespace blockbpe

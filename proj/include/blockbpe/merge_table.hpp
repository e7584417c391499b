#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockbpe/types.hpp"

namespace blockbpe {

inline constexpr TokenId kInvalidToken = std::numeric_limits<TokenId>::max();

// ---- gpt2 byte <-> codepoint bijection ----
//
// gpt2-format vocab/merges files store token bytes as printable unicode
// codepoints: bytes 33-126, 161-172 and 174-255 map to their own codepoint,
// the remaining 68 bytes map to codepoints 256+k in ascending byte order.

inline const std::array<std::uint32_t, 256>& gpt2_byte_to_codepoint() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    auto direct = [](int b) {
      return (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
    };
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = direct(b) ? b : next++;
    return t;
  }();
  return table;
}

// Inverse table; codepoints used by the bijection are all < 324.
inline const std::array<int, 324>& gpt2_codepoint_to_byte() {
  static const std::array<int, 324> table = [] {
    std::array<int, 324> t{};
    t.fill(-1);
    const auto& fwd = gpt2_byte_to_codepoint();
    for (int b = 0; b < 256; ++b) t[fwd[b]] = b;
    return t;
  }();
  return table;
}

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp <= 0x7f) {
    out.push_back(static_cast<char>(cp));
  } else if (cp <= 0x7ff) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp <= 0xffff) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

// Decodes one UTF-8 scalar; advances `pos`. Malformed input decodes the lone
// byte (callers treat out-of-bijection codepoints as literals anyway).
inline std::uint32_t next_utf8(std::string_view s, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  unsigned char c0 = byte(pos);
  if (c0 < 0x80) {
    pos += 1;
    return c0;
  }
  if ((c0 >> 5) == 0x6 && pos + 1 < s.size()) {
    std::uint32_t cp = ((c0 & 0x1fu) << 6) | (byte(pos + 1) & 0x3fu);
    pos += 2;
    return cp;
  }
  if ((c0 >> 4) == 0xe && pos + 2 < s.size()) {
    std::uint32_t cp =
        ((c0 & 0x0fu) << 12) | ((byte(pos + 1) & 0x3fu) << 6) | (byte(pos + 2) & 0x3fu);
    pos += 3;
    return cp;
  }
  if ((c0 >> 3) == 0x1e && pos + 3 < s.size()) {
    std::uint32_t cp = ((c0 & 0x07u) << 18) | ((byte(pos + 1) & 0x3fu) << 12) |
                       ((byte(pos + 2) & 0x3fu) << 6) | (byte(pos + 3) & 0x3fu);
    pos += 4;
    return cp;
  }
  pos += 1;
  return c0;
}

}  // namespace detail

// Converts a gpt2-format token string (unicode codepoints) to raw bytes.
// Strings containing codepoints outside the bijection (e.g. "<|endoftext|>"
// stays ASCII, but hypothetical added tokens may not) keep their UTF-8 bytes.
inline std::string gpt2_token_to_bytes(std::string_view token) {
  const auto& inv = gpt2_codepoint_to_byte();
  std::string out;
  out.reserve(token.size());
  std::size_t pos = 0;
  while (pos < token.size()) {
    std::size_t before = pos;
    std::uint32_t cp = detail::next_utf8(token, pos);
    if (cp < inv.size() && inv[cp] >= 0) {
      out.push_back(static_cast<char>(inv[cp]));
    } else {
      out.append(token.substr(before, pos - before));
    }
  }
  return out;
}

inline std::string gpt2_bytes_to_token(std::string_view bytes) {
  const auto& fwd = gpt2_byte_to_codepoint();
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) detail::append_utf8(out, fwd[b]);
  return out;
}

// ---- flat pair -> {rank, merged} map ----
//
// Open-addressing table keyed by packed pairs; the merge lookup sits on the
// hot path of every engine.

class PairMap {
 public:
  struct Entry {
    Rank rank;
    TokenId merged;
  };

  void reserve(std::size_t count) {
    std::size_t cap = 16;
    while (cap < count * 2) cap <<= 1;
    slots_.assign(cap, Slot{kEmpty, {0, 0}});
    mask_ = cap - 1;
  }

  // Returns false if the key was already present (entry left untouched).
  bool insert(PairKey key, Entry value) {
    if (slots_.empty()) reserve(16);
    if (size_ * 2 >= slots_.size()) grow();
    std::size_t idx = probe_start(key);
    while (slots_[idx].key != kEmpty) {
      if (slots_[idx].key == key) return false;
      idx = (idx + 1) & mask_;
    }
    slots_[idx] = Slot{key, value};
    ++size_;
    return true;
  }

  const Entry* find(PairKey key) const {
    if (slots_.empty()) return nullptr;
    std::size_t idx = probe_start(key);
    while (true) {
      if (slots_[idx].key == key) return &slots_[idx].value;
      if (slots_[idx].key == kEmpty) return nullptr;
      idx = (idx + 1) & mask_;
    }
  }

  std::size_t size() const { return size_; }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const Slot& s : slots_)
      if (s.key != kEmpty) fn(s.key, s.value);
  }

 private:
  static constexpr PairKey kEmpty = std::numeric_limits<PairKey>::max();

  struct Slot {
    PairKey key;
    Entry value;
  };

  static std::uint64_t mix(std::uint64_t h) {
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
  }

  std::size_t probe_start(PairKey key) const {
    return static_cast<std::size_t>(mix(key)) & mask_;
  }

  void grow() {
    std::vector<Slot> old = std::move(slots_);
    slots_.assign(old.size() * 2, Slot{kEmpty, {0, 0}});
    mask_ = slots_.size() - 1;
    size_ = 0;
    for (const Slot& s : old)
      if (s.key != kEmpty) insert(s.key, s.value);
  }

  std::vector<Slot> slots_;
  std::size_t mask_ = 0;
  std::size_t size_ = 0;
};

// ---- MergeTable ----
//
// Immutable after load; safe for unrestricted concurrent reads.

class MergeTable {
 public:
  std::optional<Rank> rank_of(TokenId left, TokenId right) const {
    const PairMap::Entry* e = merges_.find(pack_pair(left, right));
    if (!e) return std::nullopt;
    return e->rank;
  }

  std::optional<TokenId> merged_of(TokenId left, TokenId right) const {
    const PairMap::Entry* e = merges_.find(pack_pair(left, right));
    if (!e) return std::nullopt;
    return e->merged;
  }

  const PairMap::Entry* find_pair(PairKey key) const { return merges_.find(key); }

  const std::string* bytes_of(TokenId id) const {
    auto it = token_bytes_.find(id);
    return it == token_bytes_.end() ? nullptr : &it->second;
  }

  // Initial token for a raw byte value; kInvalidToken when the vocabulary
  // has no single-byte token for it.
  TokenId byte_token(unsigned char b) const { return byte_tokens_[b]; }

  std::size_t token_count() const { return token_bytes_.size(); }
  std::size_t merge_count() const { return merges_.size(); }
  std::size_t base_size() const { return base_size_; }

  const std::unordered_map<TokenId, std::string>& token_bytes() const { return token_bytes_; }
  const PairMap& merges() const { return merges_; }

  // ---- construction (used by the loaders and test fixtures) ----

  void add_token(TokenId id, std::string bytes) {
    auto [it, inserted] = token_bytes_.emplace(id, std::move(bytes));
    if (!inserted)
      throw IntegrityError("duplicate token id " + std::to_string(id));
  }

  void add_merge(Rank rank, TokenId left, TokenId right, TokenId merged) {
    if (!seen_ranks_.emplace(rank, pack_pair(left, right)).second)
      throw IntegrityError("duplicate merge rank " + std::to_string(rank));
    if (!merges_.insert(pack_pair(left, right), {rank, merged}))
      throw IntegrityError("duplicate merge pair (" + std::to_string(left) + ", " +
                           std::to_string(right) + ")");
  }

  // Checks every structural invariant; loaders call this before returning.
  void finalize() {
    byte_tokens_.fill(kInvalidToken);
    base_size_ = 0;
    for (const auto& [id, bytes] : token_bytes_) {
      if (bytes.size() == 1) {
        unsigned char b = static_cast<unsigned char>(bytes[0]);
        if (byte_tokens_[b] != kInvalidToken)
          throw IntegrityError("two tokens share byte value " + std::to_string(b));
        byte_tokens_[b] = id;
        ++base_size_;
      }
    }
    merges_.for_each([&](PairKey key, const PairMap::Entry& e) {
      auto [left, right] = unpack_pair(key);
      const std::string* lb = bytes_of(left);
      const std::string* rb = bytes_of(right);
      const std::string* mb = bytes_of(e.merged);
      auto pair_name = [&] {
        return "(" + std::to_string(left) + ", " + std::to_string(right) + ")";
      };
      if (!lb || !rb || !mb)
        throw IntegrityError("merge pair " + pair_name() + " references unknown token id");
      if (*mb != *lb + *rb)
        throw IntegrityError("merged token bytes mismatch for pair " + pair_name());
    });
  }

 private:
  PairMap merges_;
  std::unordered_map<TokenId, std::string> token_bytes_;
  std::unordered_map<Rank, PairKey> seen_ranks_;
  std::array<TokenId, 256> byte_tokens_{};
  std::size_t base_size_ = 0;
};

// ---- SpecialTokenSet ----

class SpecialTokenSet {
 public:
  void add(std::string bytes, TokenId id) {
    if (bytes.empty()) throw UsageError("special token byte string may not be empty");
    for (const auto& e : entries_)
      if (e.first == bytes) throw UsageError("duplicate special token \"" + bytes + "\"");
    // Keep longest-first so the greedy matcher can take the first hit.
    auto it = entries_.begin();
    while (it != entries_.end() && it->first.size() >= bytes.size()) ++it;
    entries_.insert(it, {std::move(bytes), id});
    rebuild_index();
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  // Entries ordered longest byte string first.
  const std::vector<std::pair<std::string, TokenId>>& entries() const { return entries_; }

  const std::string* bytes_of(TokenId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : it->second;
  }

  bool contains_id(TokenId id) const { return by_id_.count(id) != 0; }

  // Longest special token matching at `pos`, if any.
  std::optional<std::pair<std::size_t, TokenId>> match(std::string_view text,
                                                       std::size_t pos) const {
    for (const auto& [bytes, id] : entries_) {
      if (bytes.size() <= text.size() - pos &&
          text.compare(pos, bytes.size(), bytes) == 0)
        return std::make_pair(bytes.size(), id);
    }
    return std::nullopt;
  }

  std::optional<TokenId> bos_id() const { return bos_id_; }
  std::optional<TokenId> eos_id() const { return eos_id_; }

  void set_bos(std::string_view bytes) { bos_id_ = require(bytes, "bos"); }
  void set_eos(std::string_view bytes) { eos_id_ = require(bytes, "eos"); }

 private:
  TokenId require(std::string_view bytes, const char* what) const {
    for (const auto& [b, id] : entries_)
      if (b == bytes) return id;
    throw UsageError(std::string(what) + " token \"" + std::string(bytes) +
                     "\" is not in the special token set");
  }

  void rebuild_index() {
    by_id_.clear();
    for (const auto& e : entries_) by_id_[e.second] = &e.first;
  }

  std::vector<std::pair<std::string, TokenId>> entries_;
  std::unordered_map<TokenId, const std::string*> by_id_;
  std::optional<TokenId> bos_id_;
  std::optional<TokenId> eos_id_;
};

// Special ids must not be producible by merges: not a single-byte token and
// not the merged result of any pair. They may still own surface bytes in the
// table (gpt2's end-of-text does).
inline void validate_specials(const MergeTable& table, const SpecialTokenSet& specials) {
  for (const auto& [bytes, id] : specials.entries()) {
    const std::string* tb = table.bytes_of(id);
    if (tb && tb->size() == 1 && table.byte_token(static_cast<unsigned char>((*tb)[0])) == id)
      throw IntegrityError("special id " + std::to_string(id) + " is a base byte token");
  }
  table.merges().for_each([&](PairKey, const PairMap::Entry& e) {
    if (specials.contains_id(e.merged))
      throw IntegrityError("special id " + std::to_string(e.merged) +
                           " collides with a merge-derived token");
  });
}

// ---- loaders ----

enum class VocabFormat { gpt2, canonical_json };

inline VocabFormat parse_vocab_format(std::string_view name) {
  if (name == "gpt2") return VocabFormat::gpt2;
  if (name == "json" || name == "canonical_json") return VocabFormat::canonical_json;
  throw UsageError("unknown vocab format \"" + std::string(name) + "\"");
}

namespace detail {

inline MergeTable load_gpt2(std::istream& vocab_src, std::string_view vocab_name,
                            std::istream& merges_src, std::string_view merges_name) {
  nlohmann::json vocab_json;
  try {
    vocab_src >> vocab_json;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(vocab_name) + ": " + e.what());
  }
  if (!vocab_json.is_object())
    throw ParseError(std::string(vocab_name) + ": expected a token -> id object");

  MergeTable table;
  std::unordered_map<std::string, TokenId> by_string;
  by_string.reserve(vocab_json.size());
  for (auto it = vocab_json.begin(); it != vocab_json.end(); ++it) {
    if (!it.value().is_number_unsigned())
      throw ParseError(std::string(vocab_name) + ": id for \"" + it.key() +
                       "\" is not a non-negative integer");
    TokenId id = it.value().get<TokenId>();
    table.add_token(id, gpt2_token_to_bytes(it.key()));
    by_string.emplace(it.key(), id);
  }

  std::string line;
  std::size_t line_no = 0;
  Rank rank = 0;
  bool first = true;
  while (std::getline(merges_src, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.rfind("#version", 0) == 0) continue;  // header
    }
    if (line.empty()) continue;

    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError(std::string(merges_name) + ":" + std::to_string(line_no) + ": " + why);
    };
    std::size_t space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size() ||
        line.find(' ', space + 1) != std::string::npos)
      throw fail("expected exactly \"left right\"");

    std::string left = line.substr(0, space);
    std::string right = line.substr(space + 1);
    auto lit = by_string.find(left);
    auto rit = by_string.find(right);
    if (lit == by_string.end()) throw fail("left token \"" + left + "\" not in vocab");
    if (rit == by_string.end()) throw fail("right token \"" + right + "\" not in vocab");
    auto mit = by_string.find(left + right);
    if (mit == by_string.end())
      throw IntegrityError(std::string(merges_name) + ":" + std::to_string(line_no) +
                           ": merged token for pair (" + std::to_string(lit->second) + ", " +
                           std::to_string(rit->second) + ") not in vocab");
    table.add_merge(rank++, lit->second, rit->second, mit->second);
  }

  table.finalize();
  return table;
}

inline std::string bytes_from_json_array(const nlohmann::json& arr, std::string_view where) {
  if (!arr.is_array()) throw ParseError(std::string(where) + ": token bytes must be an array");
  std::string out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_unsigned() || v.get<unsigned>() > 255)
      throw ParseError(std::string(where) + ": byte values must be integers in [0, 255]");
    out.push_back(static_cast<char>(v.get<unsigned>()));
  }
  return out;
}

inline MergeTable load_canonical(std::istream& src, std::string_view name) {
  nlohmann::json doc;
  try {
    src >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(name) + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("tokens") || !doc.contains("merges"))
    throw ParseError(std::string(name) + ": expected object with \"tokens\" and \"merges\"");

  MergeTable table;
  for (const auto& entry : doc["tokens"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_unsigned())
      throw ParseError(std::string(name) + ": token entries are [id, [byte, ...]]");
    table.add_token(entry[0].get<TokenId>(), bytes_from_json_array(entry[1], name));
  }
  for (const auto& entry : doc["merges"]) {
    if (!entry.is_array() || entry.size() != 4)
      throw ParseError(std::string(name) + ": merge entries are [rank, left, right, merged]");
    table.add_merge(entry[0].get<Rank>(), entry[1].get<TokenId>(), entry[2].get<TokenId>(),
                    entry[3].get<TokenId>());
  }
  table.finalize();
  return table;
}

}  // namespace detail

// Loads a merge table from named byte streams. gpt2 format reads both
// streams; canonical_json reads only `vocab_src` (pass null for merges).
inline MergeTable load_merge_table(std::istream& vocab_src, std::string_view vocab_name,
                                   std::istream* merges_src, std::string_view merges_name,
                                   VocabFormat format) {
  if (format == VocabFormat::gpt2) {
    if (!merges_src) throw UsageError("gpt2 format requires a merges file");
    return detail::load_gpt2(vocab_src, vocab_name, *merges_src, merges_name);
  }
  return detail::load_canonical(vocab_src, vocab_name);
}

inline MergeTable load_merge_table_files(const std::string& vocab_path,
                                         const std::string& merges_path, VocabFormat format) {
  std::ifstream vocab(vocab_path, std::ios::binary);
  if (!vocab) throw UsageError("cannot open vocab file " + vocab_path);
  if (format == VocabFormat::canonical_json)
    return load_merge_table(vocab, vocab_path, nullptr, "", format);
  std::ifstream merges(merges_path, std::ios::binary);
  if (!merges) throw UsageError("cannot open merges file " + merges_path);
  return load_merge_table(vocab, vocab_path, &merges, merges_path, format);
}

// Reads special tokens from JSON: either a bare [["<eos>", id], ...] array,
// or an object whose "specials" holds that array, with optional "bos"/"eos"
// strings naming entries. The canonical vocab file itself is accepted.
inline SpecialTokenSet load_specials(std::istream& src, std::string_view name) {
  nlohmann::json doc;
  try {
    src >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(name) + ": " + e.what());
  }
  const nlohmann::json* arr = nullptr;
  if (doc.is_array()) {
    arr = &doc;
  } else if (doc.is_object() && doc.contains("specials")) {
    arr = &doc["specials"];
  } else {
    throw ParseError(std::string(name) + ": expected a specials array");
  }

  SpecialTokenSet set;
  for (const auto& entry : *arr) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() ||
        !entry[1].is_number_unsigned())
      throw ParseError(std::string(name) + ": special entries are [string, id]");
    set.add(entry[0].get<std::string>(), entry[1].get<TokenId>());
  }
  if (doc.is_object()) {
    if (doc.contains("bos")) set.set_bos(doc["bos"].get<std::string>());
    if (doc.contains("eos")) set.set_eos(doc["eos"].get<std::string>());
  }
  return set;
}

inline SpecialTokenSet load_specials_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open specials file " + path);
  return load_specials(in, path);
}

// ---- decode ----

inline std::string decode(const MergeTable& table, const SpecialTokenSet& specials,
                          const TokenSeq& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (const std::string* b = table.bytes_of(ids[i])) {
      out += *b;
    } else if (const std::string* s = specials.bytes_of(ids[i])) {
      out += *s;
    } else {
      throw DecodeError("unknown token id " + std::to_string(ids[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return out;
}

}  // namespace blockbpe

#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockbpe/batch.hpp"
#include "blockbpe/block_engine.hpp"
#include "blockbpe/merge_table.hpp"
#include "blockbpe/ref_engines.hpp"
#include "blockbpe/thread_pool.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe {

// Minimum insert/delete/substitute edits between two token-id sequences.
// Two rolling rows over the shorter dimension.
inline std::uint32_t levenshtein(const TokenSeq& a, const TokenSeq& b) {
  const TokenSeq& longer = a.size() >= b.size() ? a : b;
  const TokenSeq& shorter = a.size() >= b.size() ? b : a;
  if (shorter.empty()) return static_cast<std::uint32_t>(longer.size());

  std::vector<std::uint32_t> prev(shorter.size() + 1);
  std::vector<std::uint32_t> cur(shorter.size() + 1);
  std::iota(prev.begin(), prev.end(), 0u);
  for (std::size_t i = 1; i <= longer.size(); ++i) {
    cur[0] = static_cast<std::uint32_t>(i);
    for (std::size_t j = 1; j <= shorter.size(); ++j) {
      std::uint32_t subst = prev[j - 1] + (longer[i - 1] == shorter[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[shorter.size()];
}

struct SimilarityItem {
  std::size_t source_len;   // |s_i| in bytes
  std::uint32_t distance;   // d_L over token ids
  double item_sim;          // 1 - d_L / |s_i|
};

struct SimilarityReport {
  std::vector<SimilarityItem> per_item;
  double aggregate_sim = 1.0;  // arithmetic mean of item_sim
  std::size_t count = 0;
};

// sim = (1/n) * sum(1 - d_L(ref_i, cand_i) / |s_i|)
inline SimilarityReport similarity(const std::vector<TokenSeq>& references,
                                   const std::vector<TokenSeq>& candidates,
                                   const std::vector<std::size_t>& source_lens) {
  if (references.size() != candidates.size() || references.size() != source_lens.size())
    throw UsageError("similarity inputs must have equal lengths (refs " +
                     std::to_string(references.size()) + ", cands " +
                     std::to_string(candidates.size()) + ", lens " +
                     std::to_string(source_lens.size()) + ")");
  SimilarityReport report;
  report.count = references.size();
  report.per_item.reserve(report.count);
  double total = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (source_lens[i] == 0)
      throw UsageError("source length 0 at index " + std::to_string(i) +
                       "; the similarity formula is undefined");
    std::uint32_t d = levenshtein(references[i], candidates[i]);
    double sim = 1.0 - static_cast<double>(d) / static_cast<double>(source_lens[i]);
    report.per_item.push_back({source_lens[i], d, sim});
    total += sim;
  }
  report.aggregate_sim = report.count ? total / static_cast<double>(report.count) : 1.0;
  return report;
}

// ---- divergence report ----

enum class DivergenceCategory { punct_run, digit_run, other };

inline std::string_view category_name(DivergenceCategory c) {
  switch (c) {
    case DivergenceCategory::punct_run: return "punct_run";
    case DivergenceCategory::digit_run: return "digit_run";
    default: return "other";
  }
}

// Byte-class heuristic: >=2 consecutive identical punctuation bytes wins,
// then >=4 consecutive ASCII digits, else "other".
inline DivergenceCategory categorize_input(std::string_view input) {
  auto is_punct = [](unsigned char b) {
    return (b >= 33 && b <= 47) || (b >= 58 && b <= 64) || (b >= 91 && b <= 96) ||
           (b >= 123 && b <= 126);
  };
  std::size_t punct_run = 0, digit_run = 0;
  unsigned char prev = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    unsigned char b = static_cast<unsigned char>(input[i]);
    punct_run = (is_punct(b) && i > 0 && b == prev) ? punct_run + 1 : (is_punct(b) ? 1 : 0);
    if (punct_run >= 2) return DivergenceCategory::punct_run;
    digit_run = (b >= '0' && b <= '9') ? digit_run + 1 : 0;
    if (digit_run >= 4) return DivergenceCategory::digit_run;
    prev = b;
  }
  return DivergenceCategory::other;
}

struct DivergenceItem {
  std::string input;
  TokenSeq block_tokens;      // block engine, byte-level pre-tokenization
  TokenSeq reference_tokens;  // sequential reference, pattern pre-tokenization
  bool divergent;
  double item_sim;
  DivergenceCategory category;
};

struct DivergenceReport {
  struct CategoryStats {
    std::size_t total = 0;
    std::size_t divergent = 0;
  };

  std::vector<DivergenceItem> items;
  std::size_t divergent_count = 0;
  double aggregate_sim = 1.0;
  CategoryStats punct_run, digit_run, other;

  CategoryStats& stats_for(DivergenceCategory c) {
    switch (c) {
      case DivergenceCategory::punct_run: return punct_run;
      case DivergenceCategory::digit_run: return digit_run;
      default: return other;
    }
  }
};

// Tokenizes every input twice (block engine with byte-level pre-tokenization
// vs the sequential reference with the supplied pattern) and reports where
// the streams differ.
inline DivergenceReport divergence_report(const std::vector<std::string>& inputs,
                                          const MergeTable& table,
                                          const SpecialTokenSet& specials,
                                          const std::string& pattern, const BlockConfig& config,
                                          PhasePool* pool = nullptr) {
  DivergenceReport report;
  report.items.resize(inputs.size());
  auto eval_one = [&](std::size_t i) {
    DivergenceItem item;
    item.input = inputs[i];
    item.block_tokens = encode_single(inputs[i], table, specials, config, nullptr);
    item.reference_tokens =
        encode_reference(inputs[i], table, specials, PreSpec::with_pattern(pattern));
    item.divergent = item.block_tokens != item.reference_tokens;
    std::size_t len = std::max<std::size_t>(inputs[i].size(), 1);
    item.item_sim =
        1.0 - static_cast<double>(levenshtein(item.reference_tokens, item.block_tokens)) /
                  static_cast<double>(len);
    item.category = categorize_input(inputs[i]);
    report.items[i] = std::move(item);
  };
  if (pool && pool->worker_count() >= 2) {
    pool->run_items(inputs.size(), eval_one);
  } else {
    for (std::size_t i = 0; i < inputs.size(); ++i) eval_one(i);
  }

  double total = 0.0;
  for (const DivergenceItem& item : report.items) {
    auto& stats = report.stats_for(item.category);
    ++stats.total;
    if (item.divergent) {
      ++stats.divergent;
      ++report.divergent_count;
    }
    total += item.item_sim;
  }
  report.aggregate_sim =
      report.items.empty() ? 1.0 : total / static_cast<double>(report.items.size());
  return report;
}

// ---- report output ----

// Non-printable bytes escaped as \xHH so reports stay valid text/JSON.
inline std::string escape_bytes(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  static const char* hex = "0123456789abcdef";
  for (unsigned char b : bytes) {
    if (b >= 32 && b < 127 && b != '\\') {
      out.push_back(static_cast<char>(b));
    } else {
      out += "\\x";
      out.push_back(hex[b >> 4]);
      out.push_back(hex[b & 0xf]);
    }
  }
  return out;
}

inline nlohmann::json to_json(const SimilarityReport& report) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : report.per_item)
    items.push_back({{"source_len", item.source_len},
                     {"distance", item.distance},
                     {"item_sim", item.item_sim}});
  return {{"count", report.count}, {"aggregate_sim", report.aggregate_sim}, {"items", items}};
}

inline nlohmann::json to_json(const DivergenceReport& report) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : report.items)
    items.push_back({{"input", escape_bytes(item.input)},
                     {"block_tokens", item.block_tokens},
                     {"reference_tokens", item.reference_tokens},
                     {"divergent", item.divergent},
                     {"item_sim", item.item_sim},
                     {"category", category_name(item.category)}});
  auto stats = [](const DivergenceReport::CategoryStats& s) {
    return nlohmann::json{{"total", s.total}, {"divergent", s.divergent}};
  };
  return {{"count", report.items.size()},
          {"divergent_count", report.divergent_count},
          {"aggregate_sim", report.aggregate_sim},
          {"by_category",
           {{"punct_run", stats(report.punct_run)},
            {"digit_run", stats(report.digit_run)},
            {"other", stats(report.other)}}},
          {"items", items}};
}

inline void write_text(std::ostream& os, const SimilarityReport& report) {
  os << "items: " << report.count << "  aggregate_sim: " << std::setprecision(6) << std::fixed
     << report.aggregate_sim << "\n";
  os << std::setw(6) << "item" << std::setw(12) << "source_len" << std::setw(10) << "distance"
     << std::setw(12) << "item_sim" << "\n";
  for (std::size_t i = 0; i < report.per_item.size(); ++i) {
    const auto& item = report.per_item[i];
    os << std::setw(6) << i << std::setw(12) << item.source_len << std::setw(10) << item.distance
       << std::setw(12) << item.item_sim << "\n";
  }
}

inline void write_text(std::ostream& os, const DivergenceReport& report) {
  os << "items: " << report.items.size() << "  divergent: " << report.divergent_count
     << "  aggregate_sim: " << std::setprecision(6) << std::fixed << report.aggregate_sim
     << "\n";
  auto line = [&](std::string_view name, const DivergenceReport::CategoryStats& s) {
    os << "  " << std::setw(10) << std::left << name << std::right << " total " << std::setw(6)
       << s.total << "  divergent " << std::setw(6) << s.divergent << "\n";
  };
  line("punct_run", report.punct_run);
  line("digit_run", report.digit_run);
  line("other", report.other);
  for (const auto& item : report.items) {
    if (!item.divergent) continue;
    os << "  DIVERGE [" << category_name(item.category) << "] \"" << escape_bytes(item.input)
       << "\" sim=" << item.item_sim << "\n    block: [";
    for (std::size_t i = 0; i < item.block_tokens.size(); ++i)
      os << (i ? ", " : "") << item.block_tokens[i];
    os << "]\n    ref:   [";
    for (std::size_t i = 0; i < item.reference_tokens.size(); ++i)
      os << (i ? ", " : "") << item.reference_tokens[i];
    os << "]\n";
  }
}

}  // namespace blockbpe

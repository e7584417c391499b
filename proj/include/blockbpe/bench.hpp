#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockbpe/batch.hpp"
#include "blockbpe/block_engine.hpp"
#include "blockbpe/eval.hpp"
#include "blockbpe/merge_table.hpp"
#include "blockbpe/pretokenize.hpp"
#include "blockbpe/ref_engines.hpp"
#include "blockbpe/thread_pool.hpp"
#include "blockbpe/types.hpp"

namespace blockbpe {

enum class Engine { naive, heap, block };

inline std::string_view engine_name(Engine e) {
  switch (e) {
    case Engine::naive: return "naive";
    case Engine::heap: return "heap";
    default: return "block";
  }
}

inline Engine parse_engine(std::string_view name) {
  if (name == "naive") return Engine::naive;
  if (name == "heap") return Engine::heap;
  if (name == "block") return Engine::block;
  throw UsageError("unknown engine \"" + std::string(name) + "\"");
}

struct BenchConfig {
  std::string corpus_path;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> seq_lens;
  std::vector<std::uint32_t> block_sizes;
  std::vector<Engine> engines;
  std::size_t repetitions = 5;
  std::size_t warmup = 1;
  unsigned workers = 0;      // 0 -> BLOCKBPE_WORKERS env or hardware count
  bool merges_only = false;  // time merge passes without pre-tokenization

  void validate() const {
    if (corpus_path.empty()) throw UsageError("bench config: corpus_path is required");
    auto non_empty_positive = [](const auto& v, const char* what) {
      if (v.empty()) throw UsageError(std::string("bench config: ") + what + " must be non-empty");
      for (auto x : v)
        if (x == 0) throw UsageError(std::string("bench config: ") + what + " must be positive");
    };
    non_empty_positive(batch_sizes, "batch_sizes");
    non_empty_positive(seq_lens, "seq_lens");
    non_empty_positive(block_sizes, "block_sizes");
    if (engines.empty()) throw UsageError("bench config: engines must be non-empty");
    if (repetitions < 3) throw UsageError("bench config: repetitions must be >= 3");
    if (warmup < 1) throw UsageError("bench config: warmup must be >= 1");
    for (std::uint32_t bs : block_sizes) BlockConfig{bs, std::nullopt}.validate();
  }

  static BenchConfig from_json(std::istream& src, std::string_view name) {
    nlohmann::json doc;
    try {
      src >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(name) + ": " + e.what());
    }
    BenchConfig config;
    try {
      config.corpus_path = doc.at("corpus_path").get<std::string>();
      config.batch_sizes = doc.at("batch_sizes").get<std::vector<std::size_t>>();
      config.seq_lens = doc.at("seq_lens").get<std::vector<std::size_t>>();
      config.block_sizes = doc.at("block_sizes").get<std::vector<std::uint32_t>>();
      for (const auto& e : doc.at("engines")) config.engines.push_back(parse_engine(e.get<std::string>()));
      if (doc.contains("repetitions")) config.repetitions = doc["repetitions"].get<std::size_t>();
      if (doc.contains("warmup")) config.warmup = doc["warmup"].get<std::size_t>();
      if (doc.contains("workers")) config.workers = doc["workers"].get<unsigned>();
      if (doc.contains("merges_only")) config.merges_only = doc["merges_only"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(name) + ": " + e.what());
    }
    config.validate();
    return config;
  }

  static BenchConfig from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open bench config " + path);
    return from_json(in, path);
  }
};

struct BenchRow {
  std::string engine;
  std::uint32_t block_size;
  std::size_t batch_size;
  std::size_t seq_len;
  double wall_time_s;    // median over repetitions
  double bytes_per_s;
  double tokens_per_s;
  double passes_mean;    // merge passes (block) or merges (naive/heap) per sequence
  std::uint32_t d;       // ceil(seq_len / block_size)
};

// Cuts batch_size chunks of seq_len bytes at sequential offsets, wrapping
// modulo the file size, and backs chunk ends off by up to 3 bytes so no
// chunk ends inside a multi-byte UTF-8 sequence.
inline std::vector<std::string> ingest_corpus(const std::string& path, std::size_t seq_len,
                                              std::size_t batch_size) {
  if (seq_len == 0) throw UsageError("seq_len must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read corpus file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string data = buf.str();
  if (data.empty()) throw UsageError("corpus file " + path + " is empty");
  if (data.size() < seq_len)
    throw UsageError("corpus file " + path + " (" + std::to_string(data.size()) +
                     " bytes) is smaller than seq_len " + std::to_string(seq_len));

  auto lead_length = [](unsigned char b) -> std::size_t {
    if ((b & 0x80) == 0x00) return 1;
    if ((b & 0xe0) == 0xc0) return 2;
    if ((b & 0xf0) == 0xe0) return 3;
    if ((b & 0xf8) == 0xf0) return 4;
    return 1;  // continuation or invalid byte; nothing to back off for
  };

  std::vector<std::string> chunks;
  chunks.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::size_t offset = (i * seq_len) % data.size();
    std::string chunk;
    chunk.reserve(seq_len);
    for (std::size_t k = 0; k < seq_len; ++k) chunk.push_back(data[(offset + k) % data.size()]);

    // Find the start of the last UTF-8 sequence within the final 3 bytes and
    // drop it if incomplete.
    std::size_t p = chunk.size() - 1;
    std::size_t back = 0;
    while (p > 0 && back < 3 && (static_cast<unsigned char>(chunk[p]) & 0xc0) == 0x80) {
      --p;
      ++back;
    }
    std::size_t need = lead_length(static_cast<unsigned char>(chunk[p]));
    if (need > chunk.size() - p) chunk.resize(p);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

// sm_count * floor(max_threads_per_sm / block_size): how many blocks can be
// resident at once. A planning estimate only, never used for scheduling.
inline std::uint64_t occupancy_estimate(std::uint32_t block_size, std::uint32_t sm_count,
                                        std::uint32_t max_threads_per_sm) {
  if (block_size == 0) throw UsageError("block_size must be positive");
  if (block_size > max_threads_per_sm)
    throw UsageError("block_size " + std::to_string(block_size) +
                     " exceeds max threads per SM " + std::to_string(max_threads_per_sm));
  return static_cast<std::uint64_t>(sm_count) * (max_threads_per_sm / block_size);
}

// Shrinks a failing input while the predicate keeps failing; used to report
// minimal reproducers for cross-engine mismatches.
inline std::string minimize_failing_input(std::string input,
                                          const std::function<bool(std::string_view)>& fails) {
  bool shrunk = true;
  while (shrunk && input.size() > 1) {
    shrunk = false;
    std::size_t half = input.size() / 2;
    for (std::string candidate : {input.substr(half), input.substr(0, input.size() - half),
                                  input.substr(1), input.substr(0, input.size() - 1)}) {
      if (candidate.size() < input.size() && !candidate.empty() && fails(candidate)) {
        input = std::move(candidate);
        shrunk = true;
        break;
      }
    }
  }
  return input;
}

// Median as an order statistic: element (r-1)/2 of the sorted times (the 3rd
// of 5). Even counts take the lower middle, keeping the value an actually
// observed time.
inline double median_wall_time(std::vector<double> times) {
  if (times.empty()) throw UsageError("median of zero repetitions");
  std::sort(times.begin(), times.end());
  return times[(times.size() - 1) / 2];
}

namespace bench_detail {

struct CellOutputs {
  std::vector<TokenSeq> tokens;
  double passes_mean = 0.0;
  std::size_t total_tokens = 0;
};

// Untimed encode of every input, collecting pass/merge counts.
inline CellOutputs run_engine_traced(Engine engine, const std::vector<std::string>& inputs,
                                     const MergeTable& table, const SpecialTokenSet& specials,
                                     const BlockConfig& config, bool merges_only,
                                     PhasePool* pool) {
  CellOutputs out;
  out.tokens.resize(inputs.size());
  std::vector<double> passes(inputs.size(), 0.0);
  auto one = [&](std::size_t i) {
    if (merges_only) {
      TokenSeq initial = bytes_to_initial_tokens(inputs[i], table);
      if (engine == Engine::block) {
        PassTrace trace;
        out.tokens[i] = block_bpe(initial, table, config, nullptr, &trace);
        passes[i] = static_cast<double>(trace.size());
      } else {
        std::size_t before = initial.size();
        out.tokens[i] = engine == Engine::naive ? naive_bpe(initial, table)
                                                : heap_bpe(initial, table);
        passes[i] = static_cast<double>(before - out.tokens[i].size());
      }
      return;
    }
    if (engine == Engine::block) {
      TokenSeq row;
      std::size_t row_passes = 0;
      for (const Segment& seg : split_specials(inputs[i], specials)) {
        if (seg.kind == Segment::Kind::special) {
          row.push_back(*seg.special_id);
          continue;
        }
        PassTrace trace;
        TokenSeq merged =
            block_bpe(bytes_to_initial_tokens(seg.bytes, table), table, config, nullptr, &trace);
        row_passes += trace.size();
        row.insert(row.end(), merged.begin(), merged.end());
      }
      out.tokens[i] = std::move(row);
      passes[i] = static_cast<double>(row_passes);
    } else {
      RefEngine ref = engine == Engine::naive ? RefEngine::naive : RefEngine::heap;
      std::size_t initial_len = 0;
      for (const Segment& seg : split_specials(inputs[i], specials))
        initial_len += seg.kind == Segment::Kind::literal ? seg.bytes.size() : 1;
      out.tokens[i] = encode_reference(inputs[i], table, specials, PreSpec::byte_level(), ref);
      passes[i] = static_cast<double>(initial_len - out.tokens[i].size());
    }
  };
  if (engine == Engine::block && pool && pool->worker_count() >= 2) {
    pool->run_items(inputs.size(), one);
  } else {
    for (std::size_t i = 0; i < inputs.size(); ++i) one(i);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) out.total_tokens += out.tokens[i].size();
  out.passes_mean = inputs.empty()
                        ? 0.0
                        : std::accumulate(passes.begin(), passes.end(), 0.0) /
                              static_cast<double>(inputs.size());
  return out;
}

// Timed encode; the result token count doubles as a sink so the work cannot
// be optimized away.
inline std::size_t run_engine_timed(Engine engine, const std::vector<std::string>& inputs,
                                    const std::vector<TokenSeq>& initial_rows,
                                    const MergeTable& table, const SpecialTokenSet& specials,
                                    const BlockConfig& config, bool merges_only,
                                    PhasePool* pool) {
  std::size_t sink = 0;
  if (merges_only) {
    if (engine == Engine::block) {
      std::vector<std::size_t> counts(initial_rows.size(), 0);
      auto one = [&](std::size_t i) {
        counts[i] = block_bpe(initial_rows[i], table, config, nullptr).size();
      };
      if (pool && pool->worker_count() >= 2)
        pool->run_items(initial_rows.size(), one);
      else
        for (std::size_t i = 0; i < initial_rows.size(); ++i) one(i);
      for (std::size_t c : counts) sink += c;
    } else {
      for (const TokenSeq& row : initial_rows)
        sink += (engine == Engine::naive ? naive_bpe(row, table) : heap_bpe(row, table)).size();
    }
    return sink;
  }
  if (engine == Engine::block) {
    BatchEncoding enc = encode_batch(inputs, table, specials, config, /*pad_id=*/0,
                                     /*add_bos=*/false, /*add_eos=*/false, pool);
    sink = std::accumulate(enc.lengths.begin(), enc.lengths.end(), std::size_t{0});
  } else {
    RefEngine ref = engine == Engine::naive ? RefEngine::naive : RefEngine::heap;
    for (const std::string& input : inputs)
      sink += encode_reference(input, table, specials, PreSpec::byte_level(), ref).size();
  }
  return sink;
}

}  // namespace bench_detail

// Full cartesian sweep over engines x block_sizes x batch_sizes x seq_lens.
// Before any timing, every engine in the sweep is run on the cell's inputs
// and the outputs must match; a mismatch aborts with a minimized reproducer.
// Rows are sorted by (engine, block_size, batch_size, seq_len).
inline std::vector<BenchRow> run_benchmark(const BenchConfig& config, const MergeTable& table,
                                           const SpecialTokenSet& specials) {
  config.validate();
  PhasePool pool(resolve_worker_count(config.workers));

  std::vector<BenchRow> rows;
  for (std::size_t batch_size : config.batch_sizes) {
    for (std::size_t seq_len : config.seq_lens) {
      std::vector<std::string> inputs = ingest_corpus(config.corpus_path, seq_len, batch_size);
      std::size_t total_bytes = 0;
      for (const std::string& s : inputs) total_bytes += s.size();

      // Correctness gate plus per-engine pass statistics, untimed. Outputs
      // are engine-independent, so one block config suffices for the gate.
      BlockConfig gate_config{config.block_sizes.front(), std::nullopt};
      std::vector<bench_detail::CellOutputs> outputs;
      for (Engine engine : config.engines)
        outputs.push_back(bench_detail::run_engine_traced(engine, inputs, table, specials,
                                                          gate_config, config.merges_only,
                                                          &pool));
      for (std::size_t e = 1; e < config.engines.size(); ++e) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (outputs[e].tokens[i] == outputs[0].tokens[i]) continue;
          Engine a = config.engines[0], b = config.engines[e];
          auto fails = [&](std::string_view s) {
            std::vector<std::string> one{std::string(s)};
            auto oa = bench_detail::run_engine_traced(a, one, table, specials, gate_config,
                                                      config.merges_only, nullptr);
            auto ob = bench_detail::run_engine_traced(b, one, table, specials, gate_config,
                                                      config.merges_only, nullptr);
            return oa.tokens[0] != ob.tokens[0];
          };
          std::string minimal = minimize_failing_input(inputs[i], fails);
          throw IntegrityError("engines " + std::string(engine_name(a)) + " and " +
                               std::string(engine_name(b)) + " disagree; minimized input: \"" +
                               escape_bytes(minimal) + "\"");
        }
      }

      for (std::size_t e = 0; e < config.engines.size(); ++e) {
        Engine engine = config.engines[e];
        std::vector<TokenSeq> initial_rows;
        if (config.merges_only) {
          initial_rows.reserve(inputs.size());
          for (const std::string& s : inputs)
            initial_rows.push_back(bytes_to_initial_tokens(s, table));
        }
        for (std::uint32_t block_size : config.block_sizes) {
          BlockConfig block_config{block_size, std::nullopt};
          auto run_once = [&] {
            return bench_detail::run_engine_timed(engine, inputs, initial_rows, table, specials,
                                                  block_config, config.merges_only, &pool);
          };
          for (std::size_t w = 0; w < config.warmup; ++w) run_once();
          std::vector<double> times;
          times.reserve(config.repetitions);
          for (std::size_t r = 0; r < config.repetitions; ++r) {
            auto start = std::chrono::steady_clock::now();
            std::size_t produced = run_once();
            auto stop = std::chrono::steady_clock::now();
            if (produced != outputs[e].total_tokens)
              throw IntegrityError("timed run produced a different token count");
            times.push_back(std::chrono::duration<double>(stop - start).count());
          }
          double median = median_wall_time(times);

          BenchRow row;
          row.engine = std::string(engine_name(engine));
          row.block_size = block_size;
          row.batch_size = batch_size;
          row.seq_len = seq_len;
          row.wall_time_s = median;
          row.bytes_per_s = median > 0 ? static_cast<double>(total_bytes) / median : 0.0;
          row.tokens_per_s =
              median > 0 ? static_cast<double>(outputs[e].total_tokens) / median : 0.0;
          row.passes_mean = outputs[e].passes_mean;
          row.d = coarsening_factor(seq_len, block_config);
          rows.push_back(std::move(row));
        }
      }
    }
  }

  std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::tie(a.engine, a.block_size, a.batch_size, a.seq_len) <
           std::tie(b.engine, b.block_size, b.batch_size, b.seq_len);
  });
  return rows;
}

enum class ReportFormat { csv, json };

inline constexpr std::string_view kBenchCsvHeader =
    "engine,block_size,batch_size,seq_len,wall_time_s,bytes_per_s,tokens_per_s,passes_mean,d";

inline std::string emit_report(const std::vector<BenchRow>& rows, ReportFormat format) {
  if (format == ReportFormat::csv) {
    std::ostringstream os;
    os << kBenchCsvHeader << '\n';
    os.precision(9);
    for (const BenchRow& row : rows) {
      os << row.engine << ',' << row.block_size << ',' << row.batch_size << ',' << row.seq_len
         << ',' << row.wall_time_s << ',' << row.bytes_per_s << ',' << row.tokens_per_s << ','
         << row.passes_mean << ',' << row.d << '\n';
    }
    return os.str();
  }
  nlohmann::json arr = nlohmann::json::array();
  for (const BenchRow& row : rows)
    arr.push_back({{"engine", row.engine},
                   {"block_size", row.block_size},
                   {"batch_size", row.batch_size},
                   {"seq_len", row.seq_len},
                   {"wall_time_s", row.wall_time_s},
                   {"bytes_per_s", row.bytes_per_s},
                   {"tokens_per_s", row.tokens_per_s},
                   {"passes_mean", row.passes_mean},
                   {"d", row.d}});
  return arr.dump(2) + "\n";
}

}  // namespace blockbpe

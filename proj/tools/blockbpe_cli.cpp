// blockbpe command line: tokenize files, compare pre-tokenization modes,
// run benchmark sweeps, and score tokenizations against references.
//
// Exit codes: 0 success, 1 usage error, 2 integrity/parse/mismatch error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blockbpe/blockbpe.hpp"

namespace {

using namespace blockbpe;

struct VocabArgs {
  std::string vocab_path;
  std::string merges_path;
  std::string format = "gpt2";
  std::string specials_path;
  std::string bos;
  std::string eos;
};

void add_vocab_options(CLI::App* cmd, VocabArgs& args) {
  cmd->add_option("--vocab", args.vocab_path, "vocab file (gpt2 vocab.json or canonical JSON)")
      ->required();
  cmd->add_option("--merges", args.merges_path, "merges file (gpt2 format only)");
  cmd->add_option("--format", args.format, "vocab format: gpt2|json")->default_val("gpt2");
  cmd->add_option("--specials", args.specials_path, "special tokens JSON file");
  cmd->add_option("--bos-token", args.bos, "special token to use as bos");
  cmd->add_option("--eos-token", args.eos, "special token to use as eos");
}

MergeTable load_table(const VocabArgs& args) {
  VocabFormat format = parse_vocab_format(args.format);
  if (format == VocabFormat::gpt2 && args.merges_path.empty())
    throw UsageError("--merges is required for gpt2 format");
  return load_merge_table_files(args.vocab_path, args.merges_path, format);
}

SpecialTokenSet load_specials_arg(const VocabArgs& args, const MergeTable& table) {
  SpecialTokenSet specials;
  if (!args.specials_path.empty()) specials = load_specials_file(args.specials_path);
  if (!args.bos.empty()) specials.set_bos(args.bos);
  if (!args.eos.empty()) specials.set_eos(args.eos);
  validate_specials(table, specials);
  return specials;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw UsageError("cannot open output file " + path);
  return file;
}

int run_tokenize(const VocabArgs& vocab_args, const std::string& input_path,
                 const std::string& engine_name, std::uint32_t block_size, bool add_bos,
                 bool add_eos, const std::string& out_format, const std::string& output_path,
                 std::optional<TokenId> pad_override, unsigned workers) {
  MergeTable table = load_table(vocab_args);
  SpecialTokenSet specials = load_specials_arg(vocab_args, table);
  Engine engine = parse_engine(engine_name);
  BlockConfig config{block_size, std::nullopt};

  TokenId pad_id = pad_override.value_or(specials.eos_id().value_or(0));
  std::vector<std::string> inputs = read_lines(input_path);

  BatchEncoding encoding;
  if (engine == Engine::block) {
    PhasePool pool(resolve_worker_count(workers));
    encoding = encode_batch(inputs, table, specials, config, pad_id, add_bos, add_eos, &pool);
  } else {
    // Sequential reference engines, assembled into the same batch shape.
    RefEngine ref = engine == Engine::naive ? RefEngine::naive : RefEngine::heap;
    std::vector<TokenSeq> rows(inputs.size());
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      TokenSeq row;
      if (add_bos) {
        if (!specials.bos_id()) throw UsageError("--bos requires a bos special token");
        row.push_back(*specials.bos_id());
      }
      TokenSeq body = encode_reference(inputs[r], table, specials, PreSpec::byte_level(), ref);
      row.insert(row.end(), body.begin(), body.end());
      if (add_eos) {
        if (!specials.eos_id()) throw UsageError("--eos requires an eos special token");
        row.push_back(*specials.eos_id());
      }
      rows[r] = std::move(row);
    }
    encoding.batch_size = rows.size();
    encoding.pad_id = pad_id;
    for (const TokenSeq& row : rows) encoding.max_len = std::max(encoding.max_len, row.size());
    encoding.ids.assign(encoding.batch_size * encoding.max_len, pad_id);
    encoding.mask.assign(encoding.ids.size(), 0);
    encoding.lengths.resize(encoding.batch_size);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      encoding.lengths[r] = static_cast<std::uint32_t>(rows[r].size());
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        encoding.ids[r * encoding.max_len + c] = rows[r][c];
        encoding.mask[r * encoding.max_len + c] = 1;
      }
    }
  }

  std::ofstream file;
  std::ostream& os = open_output(file, output_path);
  if (out_format == "jsonl") {
    write_batch_jsonl(os, encoding);
  } else if (out_format == "bin") {
    write_batch_binary(os, encoding);
  } else {
    throw UsageError("unknown output format \"" + out_format + "\" (expected jsonl|bin)");
  }
  return 0;
}

int run_compare(const VocabArgs& vocab_args, const std::string& input_path,
                const std::string& pattern, std::uint32_t block_size, bool as_json,
                const std::string& output_path) {
  MergeTable table = load_table(vocab_args);
  SpecialTokenSet specials = load_specials_arg(vocab_args, table);
  std::vector<std::string> inputs = read_lines(input_path);
  BlockConfig config{block_size, std::nullopt};

  DivergenceReport report = divergence_report(inputs, table, specials, pattern, config);
  std::ofstream file;
  std::ostream& os = open_output(file, output_path);
  if (as_json)
    os << to_json(report).dump(2) << '\n';
  else
    write_text(os, report);
  return 0;
}

int run_bench(const VocabArgs& vocab_args, const std::string& config_path,
              const std::string& format, const std::string& output_path) {
  MergeTable table = load_table(vocab_args);
  SpecialTokenSet specials = load_specials_arg(vocab_args, table);
  BenchConfig config = BenchConfig::from_json_file(config_path);

  std::vector<BenchRow> rows = run_benchmark(config, table, specials);
  ReportFormat fmt;
  if (format == "csv")
    fmt = ReportFormat::csv;
  else if (format == "json")
    fmt = ReportFormat::json;
  else
    throw UsageError("unknown report format \"" + format + "\" (expected csv|json)");

  std::ofstream file;
  std::ostream& os = open_output(file, output_path);
  os << emit_report(rows, fmt);
  return 0;
}

int run_eval(const std::string& refs_path, const std::string& cands_path,
             const std::string& lens_path, bool as_json) {
  std::ifstream refs_in(refs_path, std::ios::binary);
  if (!refs_in) throw UsageError("cannot open refs file " + refs_path);
  std::ifstream cands_in(cands_path, std::ios::binary);
  if (!cands_in) throw UsageError("cannot open cands file " + cands_path);
  std::ifstream lens_in(lens_path, std::ios::binary);
  if (!lens_in) throw UsageError("cannot open source-lens file " + lens_path);

  std::vector<TokenSeq> refs = read_jsonl_token_seqs(refs_in, refs_path);
  std::vector<TokenSeq> cands = read_jsonl_token_seqs(cands_in, cands_path);
  std::vector<std::size_t> lens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lens_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      lens.push_back(std::stoull(line));
    } catch (const std::exception&) {
      throw ParseError(lens_path + ":" + std::to_string(line_no) + ": expected an integer");
    }
  }

  SimilarityReport report = similarity(refs, cands, lens);
  if (as_json)
    std::cout << to_json(report).dump(2) << '\n';
  else
    write_text(std::cout, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blockbpe: block-parallel byte-pair-encoding toolkit"};
  app.require_subcommand(1);

  VocabArgs vocab_args;
  std::string input_path, output_path;
  std::string engine = "block";
  std::uint32_t block_size = 256;
  bool add_bos = false, add_eos = false;
  std::string out_format = "jsonl";
  std::optional<TokenId> pad_id;
  unsigned workers = 0;

  CLI::App* tokenize = app.add_subcommand("tokenize", "encode a file, one sequence per line");
  add_vocab_options(tokenize, vocab_args);
  tokenize->add_option("--engine", engine, "naive|heap|block")->default_val("block");
  tokenize->add_option("--block-size", block_size, "logical threads per block")
      ->default_val(256);
  tokenize->add_flag("--bos", add_bos, "prepend the bos special token");
  tokenize->add_flag("--eos", add_eos, "append the eos special token");
  tokenize->add_option("--out", out_format, "output format: jsonl|bin")->default_val("jsonl");
  tokenize->add_option("--output", output_path, "output file (default stdout)");
  tokenize->add_option("--pad-id", pad_id, "padding id (default: eos if set, else 0)");
  tokenize->add_option("--workers", workers, "worker threads (default: hardware)");
  tokenize->add_option("input", input_path, "input text file")->required();

  VocabArgs compare_vocab;
  std::string compare_input, compare_pattern, compare_output;
  std::uint32_t compare_block_size = 256;
  bool compare_json = false;
  CLI::App* compare =
      app.add_subcommand("compare", "divergence report: block byte-level vs pattern reference");
  add_vocab_options(compare, compare_vocab);
  compare->add_option("--pattern", compare_pattern,
                      "splitter specification (the pattern string published with the tokenizer "
                      "being compared against; \"gpt2\" selects the built-in gpt2 matcher)")
      ->required();
  compare->add_option("--block-size", compare_block_size, "logical threads per block")
      ->default_val(256);
  compare->add_flag("--json", compare_json, "emit JSON instead of text");
  compare->add_option("--output", compare_output, "output file (default stdout)");
  compare->add_option("input", compare_input, "input text file, one sequence per line")
      ->required();

  VocabArgs bench_vocab;
  std::string bench_config_path, bench_format = "csv", bench_output;
  CLI::App* bench = app.add_subcommand("bench", "run a benchmark sweep from a JSON config");
  add_vocab_options(bench, bench_vocab);
  bench->add_option("--config", bench_config_path, "BenchConfig JSON file")->required();
  bench->add_option("--report", bench_format, "report format: csv|json")->default_val("csv");
  bench->add_option("--output", bench_output, "output file (default stdout)");

  std::string eval_refs, eval_cands, eval_lens;
  bool eval_json = false;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "similarity of candidate tokenizations against references");
  eval_cmd->add_option("--refs", eval_refs, "reference token sequences (JSON-lines)")
      ->required();
  eval_cmd->add_option("--cands", eval_cands, "candidate token sequences (JSON-lines)")
      ->required();
  eval_cmd->add_option("--source-lens", eval_lens, "source byte lengths, one integer per line")
      ->required();
  eval_cmd->add_flag("--json", eval_json, "emit JSON instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (tokenize->parsed())
      return run_tokenize(vocab_args, input_path, engine, block_size, add_bos, add_eos,
                          out_format, output_path, pad_id, workers);
    if (compare->parsed())
      return run_compare(compare_vocab, compare_input, compare_pattern, compare_block_size,
                         compare_json, compare_output);
    if (bench->parsed())
      return run_bench(bench_vocab, bench_config_path, bench_format, bench_output);
    if (eval_cmd->parsed()) return run_eval(eval_refs, eval_cands, eval_lens, eval_json);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

// hnetpp: command-line front end.
// Exit codes: 0 ok, 1 usage or config, 2 data or checkpoint, 3 numeric failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "hnetpp/hnetpp.hpp"

using namespace hnetpp;

namespace {

json parse_scalar(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;  // bare strings such as f64 or soft
  }
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides, RunConfig base = {}) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("malformed config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  }
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    j[kv.substr(0, eq)] = parse_scalar(kv.substr(eq + 1));
  }
  return config_from_json(j, std::move(base));
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::vector<ByteSequence> read_all(const std::vector<std::string>& paths) {
  std::vector<ByteSequence> docs;
  for (const auto& p : paths) {
    auto part = read_documents(p);
    docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (docs.empty()) throw DataError("no documents in input");
  return docs;
}

std::size_t split_index(const std::string& name) {
  if (name == "train") return kTrain;
  if (name == "validation") return kValidation;
  if (name == "test") return kTest;
  throw ConfigError("--split must be all, train, validation or test");
}

std::array<double, 3> split_fractions(const RunConfig& c) { return {c.data.split[0], c.data.split[1], c.data.split[2]}; }

std::vector<ByteSequence> select_documents(const std::vector<std::string>& paths, const std::string& split,
                                           const RunConfig& cfg) {
  if (split == "all") return read_all(paths);
  auto parts = load_corpus(paths, split_fractions(cfg), cfg.data.split_seed);
  auto docs = std::move(parts.parts[split_index(split)]);
  if (docs.empty()) throw DataError("split '" + split + "' is empty");
  return docs;
}

// A model source is either a checkpoint or the all-gates-on debug model.
struct ModelSource {
  std::string checkpoint;
  std::string debug;
  std::string config;
  std::vector<std::string> overrides;
};

void add_model_options(CLI::App* cmd, ModelSource& src) {
  auto* ck = cmd->add_option("--checkpoint", src.checkpoint, "Checkpoint to evaluate");
  auto* dbg = cmd->add_option("--debug-model", src.debug, "Built-in debug model instead of a checkpoint")
                  ->check(CLI::IsMember({"all-gates-on"}));
  ck->excludes(dbg);
  cmd->add_option("--config", src.config, "Config for the debug model");
  cmd->add_option("--set", src.overrides, "Config override key=value (debug model)");
}

std::string checkpoint_dtype(const CheckpointFile& ck) {
  for (const auto& name : ck.order)
    if (name.rfind("param/", 0) == 0) return ck.tensors.at(name).dtype;
  throw CheckpointError("checkpoint holds no parameters");
}

/// Calls fn(model) with a model of the checkpoint's precision.
template <typename Fn>
void with_model(const ModelSource& src, Fn&& fn) {
  if (src.checkpoint.empty() == src.debug.empty()) throw ConfigError("give exactly one of --checkpoint or --debug-model");
  if (!src.debug.empty()) {
    auto cfg = resolve_config(src.config, src.overrides);
    HNetModel<double> model(cfg.model, cfg.train.seed);
    model.force_all_gates_on();
    fn(model, cfg);
    return;
  }
  auto ck = read_checkpoint(src.checkpoint);
  const auto dtype = checkpoint_dtype(ck);
  if (dtype == "f32") {
    HNetModel<float> model(ck.config.model, 0);
    restore_parameters(ck, model.params);
    fn(model, ck.config);
  } else {
    HNetModel<double> model(ck.config.model, 0);
    restore_parameters(ck, model.params);
    fn(model, ck.config);
  }
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::string> corpus;
  std::size_t synthetic_bytes = 0;
  std::string out = "run";
  std::string resume;
  bool quiet = false;
};

template <typename Real>
void train_with(const RunConfig& cfg, const TrainArgs& a, std::vector<ByteSequence> docs) {
  HNetModel<Real> model(cfg.model, cfg.train.seed);
  TrainerOptions o;
  o.out_dir = a.out;
  o.metrics_path = a.out + "/metrics.jsonl";
  if (!a.quiet) {
    o.on_step = [&](const StepMetrics& m) {
      if (m.step % cfg.train.log_every == 0) std::cerr << m.to_json().dump() << '\n';
    };
  }
  Trainer<Real> t(cfg, model, std::move(docs), o);
  if (!a.resume.empty()) t.resume(read_checkpoint(a.resume));
  t.run();
  std::cout << pretty({{"checkpoint", t.final_path()}, {"steps", t.step()}, {"metrics", o.metrics_path}});
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.resume.empty() && a.config.empty()) {
    cfg = resolve_config("", a.overrides, read_checkpoint(a.resume).config);
  } else {
    cfg = resolve_config(a.config, a.overrides);
  }
  std::vector<ByteSequence> docs;
  if (a.synthetic_bytes) {
    if (!a.corpus.empty()) throw ConfigError("--corpus and --synthetic-bytes are exclusive");
    SyntheticOptions so;
    so.target_bytes = a.synthetic_bytes;
    docs = generate_synthetic_corpus(cfg.train.seed, so);
  } else {
    if (a.corpus.empty()) throw ConfigError("train needs --corpus or --synthetic-bytes");
    auto parts = load_corpus(a.corpus, split_fractions(cfg), cfg.data.split_seed);
    docs = std::move(parts.parts[kTrain]);
    if (docs.empty()) throw DataError("training split is empty");
  }
  std::filesystem::create_directories(a.out);
  write_output(a.out + "/config.json", pretty(config_to_json(cfg)));
  if (cfg.train.precision == "f64") {
    train_with<double>(cfg, a, std::move(docs));
  } else {
    train_with<float>(cfg, a, std::move(docs));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  ModelSource model;
  std::vector<std::string> corpus;
  std::string split = "all";
  std::string output;
  std::string lexicon;
  std::size_t level = 1;
};

int cmd_eval_bpb(const EvalArgs& a) {
  with_model(a.model, [&](const auto& model, const RunConfig& cfg) {
    const auto docs = select_documents(a.corpus, a.split, cfg);
    BpbAccumulator acc;
    for (const auto& d : docs) acc.add(byte_log_probs(model, d));
    write_output(a.output, pretty({{"bpb", acc.value()}, {"bytes", acc.bytes}, {"documents", docs.size()}}));
  });
  return 0;
}

int cmd_segment(const EvalArgs& a) {
  with_model(a.model, [&](const auto& model, const RunConfig& cfg) {
    if (a.level == 0 || a.level > cfg.model.levels) throw ConfigError("--level must lie in [1, model.levels]");
    std::ostringstream out;
    for (const auto& d : select_documents(a.corpus, a.split, cfg)) {
      const auto routing = eval_routing(model, d);
      out << json{{"id", d.doc_id}, {"text", d.text()}, {"boundaries", compose_boundaries(routing, a.level)}}.dump()
          << '\n';
    }
    write_output(a.output, out.str());
  });
  return 0;
}

struct EvalSegArgs {
  ModelSource model;
  std::string gold;
  std::string predictions;
  std::string output;
  bool per_document = false;
};

std::vector<std::vector<std::size_t>> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path);
  std::vector<std::vector<std::size_t>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).at("boundaries").get<std::vector<std::size_t>>());
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

int cmd_eval_seg(const EvalSegArgs& a) {
  const auto gold = read_documents(a.gold);
  if (gold.empty()) throw DataError("gold file has no documents");
  std::vector<std::vector<std::size_t>> predicted;
  if (!a.predictions.empty()) {
    if (!a.model.checkpoint.empty() || !a.model.debug.empty()) throw ConfigError("--predictions excludes a model");
    predicted = read_predictions(a.predictions);
    if (predicted.size() != gold.size()) {
      throw DataError("predictions hold " + std::to_string(predicted.size()) + " documents, gold holds " +
                      std::to_string(gold.size()));
    }
  } else {
    with_model(a.model, [&](const auto& model, const RunConfig&) {
      for (const auto& d : gold) predicted.push_back(compose_boundaries(eval_routing(model, d), 1));
    });
  }
  SegmentationTotals totals;
  json docs = json::array();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto r = segmentation_prf(predicted[i], gold[i].gold);
    totals.add(r);
    if (a.per_document) docs.push_back({{"id", gold[i].doc_id}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}});
  }
  json out = totals.to_json();
  if (a.per_document) out["documents"] = docs;
  write_output(a.output, pretty(out));
  return 0;
}

int cmd_stats(const EvalArgs& a) {
  ChunkLexicon lex;
  if (!a.lexicon.empty()) lex = ChunkLexicon::load(a.lexicon);
  with_model(a.model, [&](const auto& model, const RunConfig& cfg) {
    const auto docs = select_documents(a.corpus, a.split, cfg);
    auto stats = chunk_statistics(model, docs, lex);
    json out = stats.to_json();
    out["compression_ratio"] = compression_ratio(model, docs);
    write_output(a.output, pretty(out));
  });
  return 0;
}

// ---------------------------------------------------------------------------

struct CorruptArgs {
  std::string kind;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::string input;
  std::string output;
  std::string tables;
};

// Lines are rewritten in place; a line the transform leaves unchanged is
// copied byte for byte, so rate 0 reproduces the input file exactly.
int cmd_corrupt(const CorruptArgs& a) {
  CorruptionSpec spec{parse_corruption_kind(a.kind), a.rate, a.seed};
  if (!(a.rate >= 0.0 && a.rate <= 1.0)) throw ConfigError("--rate must lie in [0, 1]");
  const auto tables = a.tables.empty() ? CorruptionTables::defaults() : load_corruption_tables(a.tables);
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw DataError("cannot open " + a.input);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const bool jsonl = is_jsonl_path(a.input);
  std::string out;
  out.reserve(data.size());
  CorruptionCounts counts;
  std::size_t invalid = 0, dropped_gold = 0, line_no = 0;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    const bool has_newline = end != std::string::npos;
    if (!has_newline) end = data.size();
    const std::string line = data.substr(pos, end - pos);
    std::string result = line;
    CorruptionSpec s = spec;
    s.seed = derive_seed(spec.seed, {line_no});
    if (!utf8::is_valid(line)) {
      ++invalid;
    } else if (jsonl && !line.empty()) {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(a.input + ":" + std::to_string(line_no + 1) + ": " + e.what());
      }
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
        throw DataError(a.input + ":" + std::to_string(line_no + 1) + ": expected an object with a \"text\" string");
      }
      const auto text = j["text"].get<std::string>();
      const auto changed = apply_corruption(text, s, tables, &counts);
      if (changed != text) {
        j["text"] = changed;
        if (j.contains("boundaries")) {
          j.erase("boundaries");
          ++dropped_gold;
        }
        result = j.dump();
      }
    } else {
      result = apply_corruption(line, s, tables, &counts);
    }
    out += result;
    if (has_newline) out += '\n';
    pos = end + 1;
    ++line_no;
  }
  write_output(a.output, out);
  if (invalid) std::cerr << a.input << ": copied " << invalid << " line(s) with invalid UTF-8 unchanged\n";
  if (dropped_gold) std::cerr << a.input << ": dropped gold boundaries on " << dropped_gold << " altered document(s)\n";
  std::cerr << json{{"kind", a.kind}, {"rate", a.rate}, {"candidates", counts.candidates}, {"changed", counts.changed}}.dump()
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  SelfcheckOptions opt;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const auto r = end_to_end_gradcheck(a.opt);
  std::cout << pretty({{"checked", r.checked},
                       {"max_rel_error", r.max_rel_error},
                       {"tolerance", a.opt.tolerance},
                       {"worst", {{"tensor", r.worst.input}, {"index", r.worst.index},
                                  {"analytic", r.worst.analytic}, {"numeric", r.worst.numeric}}},
                       {"flagged", r.flagged.size()},
                       {"passed", r.passed()}});
  return r.passed() ? 0 : 3;
}

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t bytes = 2048;
  std::string output;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticOptions o;
  o.target_bytes = a.bytes;
  const auto docs = generate_synthetic_corpus(a.seed, o);
  if (a.output.empty() || a.output == "-") {
    for (const auto& d : docs) std::cout << json{{"text", d.text()}, {"boundaries", d.gold}}.dump() << '\n';
  } else {
    write_jsonl(a.output, docs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hnetpp: hierarchical byte-level language model"};
  app.require_subcommand(1);
  std::function<int()> run;

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "Flat JSON config");
  t->add_option("--set", train.overrides, "Config override key=value");
  t->add_option("--corpus", train.corpus, "Corpus files (text lines or .jsonl); the train split is used");
  t->add_option("--synthetic-bytes", train.synthetic_bytes, "Train on a synthetic corpus of about this many bytes");
  t->add_option("--out", train.out, "Output directory")->capture_default_str();
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_flag("--quiet", train.quiet, "No per-step log on stderr");
  t->callback([&] { run = [&] { return cmd_train(train); }; });

  EvalArgs bpb;
  auto* b = app.add_subcommand("eval-bpb", "Bits per byte of a corpus");
  add_model_options(b, bpb.model);
  b->add_option("--corpus", bpb.corpus, "Corpus files")->required();
  b->add_option("--split", bpb.split, "all, train, validation or test")->capture_default_str();
  b->add_option("--output", bpb.output, "JSON output file (default stdout)");
  b->callback([&] { run = [&] { return cmd_eval_bpb(bpb); }; });

  EvalArgs seg;
  auto* s = app.add_subcommand("segment", "Predicted chunk starts per document (JSONL)");
  add_model_options(s, seg.model);
  s->add_option("--corpus", seg.corpus, "Corpus files")->required();
  s->add_option("--split", seg.split, "all, train, validation or test")->capture_default_str();
  s->add_option("--level", seg.level, "Router level, 1 = finest")->capture_default_str();
  s->add_option("--output", seg.output, "JSONL output file (default stdout)");
  s->callback([&] { run = [&] { return cmd_segment(seg); }; });

  EvalSegArgs es;
  auto* e = app.add_subcommand("eval-seg", "Boundary precision, recall and F1 against gold");
  add_model_options(e, es.model);
  e->add_option("--gold", es.gold, "Gold JSONL with text and boundaries")->required();
  e->add_option("--predictions", es.predictions, "Predicted boundaries JSONL, line-aligned with gold");
  e->add_flag("--per-document", es.per_document, "Include per-document scores");
  e->add_option("--output", es.output, "JSON output file (default stdout)");
  e->callback([&] { run = [&] { return cmd_eval_seg(es); }; });

  CorruptArgs cor;
  auto* c = app.add_subcommand("corrupt", "Apply a corruption to every line of a corpus");
  c->add_option("--kind", cor.kind, "zwnj, diacritic, substitution or reorder")->required();
  c->add_option("--rate", cor.rate, "Corruption rate in [0, 1]")->required();
  c->add_option("--seed", cor.seed, "Seed")->capture_default_str();
  c->add_option("--input", cor.input, "Input corpus")->required();
  c->add_option("--output", cor.output, "Output file (default stdout)");
  c->add_option("--tables", cor.tables, "JSON diacritic and substitution tables");
  c->callback([&] { run = [&] { return cmd_corrupt(cor); }; });

  EvalArgs st;
  auto* sc = app.add_subcommand("stats", "Chunk statistics and compression ratios");
  add_model_options(sc, st.model);
  sc->add_option("--corpus", st.corpus, "Corpus files")->required();
  sc->add_option("--split", st.split, "all, train, validation or test")->capture_default_str();
  sc->add_option("--lexicon", st.lexicon, "JSON object chunk text -> category");
  sc->add_option("--output", st.output, "JSON output file (default stdout)");
  sc->callback([&] { run = [&] { return cmd_stats(st); }; });

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "End-to-end finite-difference check of the training loss");
  g->add_option("--seed", gc.opt.seed, "Model seed")->capture_default_str();
  g->add_option("--tolerance", gc.opt.tolerance, "Maximum relative error")->capture_default_str();
  g->add_option("--step", gc.opt.step, "Central-difference step")->capture_default_str();
  g->add_option("--max-elements", gc.opt.max_elements_per_tensor, "Elements sampled per tensor, 0 = all")
      ->capture_default_str();
  g->callback([&] { run = [&] { return cmd_gradcheck(gc); }; });

  SynthArgs sy;
  auto* y = app.add_subcommand("synth", "Write the seeded synthetic corpus with gold boundaries (JSONL)");
  y->add_option("--seed", sy.seed, "Seed")->capture_default_str();
  y->add_option("--bytes", sy.bytes, "Approximate corpus size")->capture_default_str();
  y->add_option("--output", sy.output, "Output file (default stdout)");
  y->callback([&] { run = [&] { return cmd_synth(sy); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  }
  try {
    return run();
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << '\n';
    return 3;
  } catch (const CheckpointError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}

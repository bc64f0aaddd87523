// xote command-line interface.

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "experiment_config.hpp"
#include "json.hpp"
#include "xote/align.hpp"
#include "xote/data.hpp"
#include "xote/embeddings.hpp"
#include "xote/error.hpp"
#include "xote/eval.hpp"
#include "xote/log.hpp"
#include "xote/tagger.hpp"
#include "xote/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xote;
using namespace xote::cli;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out;
  std::vector<std::string> embeddings;
  std::optional<std::size_t> cap;
  std::string lang;
  bool verbose = false;
};

void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw ConfigError("failed writing " + path.string());
    }
  }
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  write_atomic(path, [&](std::ostream& o) { o << text; });
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

std::size_t env_workers() {
  const char* v = std::getenv("XOTE_WORKERS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("XOTE_WORKERS is not a number: ") + v);
  return n;
}

// Config file (if any) with command-line overrides applied.
ExperimentConfig effective_config(const CommonFlags& f, bool require_file) {
  ExperimentConfig cfg;
  if (!f.config.empty())
    cfg = load_config(f.config);
  else if (require_file)
    throw ConfigError("--config is required for this command");
  if (f.cap) {
    if (*f.cap == 0) throw ConfigError("--cap must be > 0");
    cfg.vocab_cap = *f.cap;
  }
  if (!f.out.empty()) cfg.output = f.out;
  if (f.seed) cfg.train.seeds = {*f.seed};
  if (f.workers)
    cfg.workers = *f.workers;
  else if (const std::size_t w = env_workers())
    cfg.workers = w;
  for (const auto& spec : f.embeddings) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw ConfigError("--embeddings expects <lang>=<path>, got '" + spec + "'");
    cfg.languages[spec.substr(0, eq)].embeddings = spec.substr(eq + 1);
  }
  check_paths(cfg);
  return cfg;
}

std::vector<std::string> languages_with(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& [name, p] : cfg.languages)
    if (!p.embeddings.empty()) out.push_back(name);
  return out;
}

// ingest <xml> --lang L [--out DIR]
int cmd_ingest(const CommonFlags& f, const std::string& xml_path) {
  if (f.lang.empty()) throw ConfigError("ingest needs --lang");
  ExperimentConfig cfg = effective_config(f, false);
  std::ifstream in(xml_path);
  if (!in) throw ConfigError("cannot open " + xml_path);
  IngestResult r = ingest_semeval(in, f.lang);
  auto it = cfg.languages.find(f.lang);
  if (it != cfg.languages.end() && !it->second.embeddings.empty()) {
    EmbeddingSet set = load_embedding_set(cfg, {f.lang});
    OovStats oov = oov_stats(r.corpus.sentences, set.at(f.lang), cfg.lowercase_fallback);
    r.report.oov_tokens = oov.oov;
    r.report.embedded_tokens = oov.tokens;
  }
  json report = r.report.to_json();
  if (!f.out.empty()) {
    const std::string stem = fs::path(xml_path).stem().string();
    std::ostringstream conll;
    export_conll(conll, r.corpus);
    write_text(fs::path(f.out) / (stem + ".conll"), conll.str());
    write_json(fs::path(f.out) / (stem + ".report.json"), report);
  }
  std::cout << report.dump() << "\n";
  return 0;
}

// convert-vectors <vec> --lang L --out file.xemb
int cmd_convert(const CommonFlags& f, const std::string& vec_path) {
  if (f.lang.empty()) throw ConfigError("convert-vectors needs --lang");
  if (f.out.empty()) throw ConfigError("convert-vectors needs --out");
  const std::size_t cap = f.cap.value_or(kDefaultVocabCap);
  EmbeddingTable t = load_embeddings_file(vec_path, f.lang, cap);
  write_atomic(f.out, [&](std::ostream& o) { save_table(o, t); });
  std::cout << json{{"language", t.language()}, {"words", t.size()}, {"dim", t.dim()}}.dump() << "\n";
  return 0;
}

struct AlignFlags {
  std::string src_lang = "src";
  std::string tgt_lang = "tgt";
  double test_fraction = 0.2;
  bool no_normalize = false;
};

// align <src_vec> <tgt_vec> <dict> --out proj.xprj
int cmd_align(const CommonFlags& f, const AlignFlags& a, const std::string& src, const std::string& tgt,
              const std::string& dict_path) {
  if (f.out.empty()) throw ConfigError("align needs --out");
  if (!(a.test_fraction >= 0.0 && a.test_fraction < 1.0))
    throw ConfigError("--test-fraction must be in [0, 1)");
  const std::size_t cap = f.cap.value_or(kDefaultVocabCap);
  EmbeddingTable s = load_embeddings_file(src, a.src_lang, cap);
  EmbeddingTable t = load_embeddings_file(tgt, a.tgt_lang, cap);
  std::ifstream din(dict_path);
  if (!din) throw ConfigError("cannot open dictionary " + dict_path);
  const std::vector<WordPair> pairs = load_dictionary(din);
  BilingualDictionary d = a.test_fraction > 0.0 ? split_dictionary(pairs, a.test_fraction, f.seed.value_or(1))
                                                : BilingualDictionary{pairs, {}};
  AlignmentResult al = align_tables(s, t, d.train, !a.no_normalize);
  write_atomic(f.out, [&](std::ostream& o) { save_projection(o, al.projection); });

  json report = {{"source", a.src_lang},
                 {"target", a.tgt_lang},
                 {"pairs_used", al.pairs_used},
                 {"pairs_dropped", al.pairs_dropped},
                 {"test_pairs", d.test.size()},
                 {"orthogonality_error", orthogonality_error(al.projection)}};
  if (!d.test.empty()) {
    EmbeddingTable projected = apply_projection(s, al.projection);
    for (std::size_t k : {1, 5}) {
      PrecisionReport p = translation_precision(projected, t, d.test, k);
      report["precision_at_" + std::to_string(k)] = p.precision;
      report["evaluated"] = p.evaluated;
      report["excluded_oov"] = p.excluded_oov;
    }
  }
  write_json(f.out + ".json", report);
  std::cout << report.dump() << "\n";
  return 0;
}

fs::path run_dir(const ExperimentConfig& cfg, const std::string& experiment, const std::string& src,
                 const std::string& tgt, std::uint64_t seed) {
  return fs::path(cfg.output) / experiment / (src + "-" + tgt) / ("seed-" + std::to_string(seed));
}

// train --config C
int cmd_train(const CommonFlags& f) {
  ExperimentConfig cfg = effective_config(f, true);
  if (cfg.sources.empty()) throw ConfigError("train needs \"sources\" in the config");
  std::vector<std::string> langs = cfg.sources;
  if (!cfg.target.empty() && std::find(langs.begin(), langs.end(), cfg.target) == langs.end())
    langs.push_back(cfg.target);
  EmbeddingSet set = load_embedding_set(cfg, langs);
  std::vector<LanguageData> data = load_language_data(cfg, langs);
  std::vector<TrainSet> sets;
  for (const auto& d : data)
    if (std::find(cfg.sources.begin(), cfg.sources.end(), d.language) != cfg.sources.end())
      sets.push_back({d.language, d.train});

  const std::uint64_t seed = cfg.train.seeds.front();
  TrainResult r = train(cfg.model, cfg.train, sets, set, seed);
  const std::string tgt = cfg.target.empty() ? cfg.sources.front() : cfg.target;
  r.record.target_lang = tgt;
  r.record.arm = "train";
  for (const auto& d : data)
    if (d.language == tgt && !d.test.empty() && !r.record.failed)
      r.record.test_f1 = evaluate(r.params, cfg.model, set, d.test).f1;

  const fs::path dir = run_dir(cfg, "train", join(r.record.source_langs, "+"), tgt, seed);
  write_atomic(dir / "model.xote", [&](std::ostream& o) {
    save_checkpoint(o, r.params, cfg.model,
                    {{"sources", join(r.record.source_langs, ",")},
                     {"seed", std::to_string(seed)},
                     {"embedding_dim", std::to_string(set.dim())},
                     {"best_epoch", std::to_string(r.record.best_epoch)}});
  });
  write_json(dir / "run.json", r.record.to_json());
  json summary = r.record.to_json();
  summary.erase("history");
  summary["checkpoint"] = (dir / "model.xote").string();
  std::cout << summary.dump() << "\n";
  return r.record.failed ? 1 : 0;
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

EmbeddingSet embeddings_for(const CommonFlags& f, const std::string& lang, const Checkpoint& ckpt) {
  ExperimentConfig cfg = effective_config(f, false);
  EmbeddingSet set = load_embedding_set(cfg, {lang});
  if (!set.has(lang)) throw ConfigError("no embeddings for '" + lang + "'; pass --embeddings " + lang + "=<path>");
  if (set.dim() != ckpt.params.embed_dim())
    throw ConfigError("embedding dimension " + std::to_string(set.dim()) + " does not match the checkpoint's " +
                      std::to_string(ckpt.params.embed_dim()));
  return set;
}

// eval <checkpoint> <corpus> --lang L
int cmd_eval(const CommonFlags& f, const std::string& ckpt_path, const std::string& corpus_path) {
  if (f.lang.empty()) throw ConfigError("eval needs --lang");
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  EmbeddingSet set = embeddings_for(f, f.lang, ckpt);
  Corpus corpus = load_corpus_file(corpus_path, f.lang);
  EvalReport rep = evaluate(ckpt.params, ckpt.config, set, corpus.sentences);
  json j = rep.to_json();
  j["sentences"] = corpus.sentences.size();
  if (!f.out.empty()) write_json(f.out, j);
  std::cout << j.dump() << "\n";
  return 0;
}

// predict <checkpoint> <text file> --lang L; one sentence per line.
int cmd_predict(const CommonFlags& f, const std::string& ckpt_path, const std::string& text_path) {
  if (f.lang.empty()) throw ConfigError("predict needs --lang");
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  EmbeddingSet set = embeddings_for(f, f.lang, ckpt);
  std::ifstream in(text_path);
  if (!in) throw ConfigError("cannot open " + text_path);
  std::ostringstream lines;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++n;
    Sentence s;
    s.id = std::to_string(n);
    s.language = f.lang;
    s.text = line;
    s.tokens = tokenize(line);
    json spans = json::array();
    if (!s.tokens.empty())
      for (const auto& sp : predict_spans(ckpt.params, ckpt.config, set, s))
        spans.push_back({{"start", sp.start}, {"end", sp.end}, {"text", sp.surface}});
    lines << json{{"line", n}, {"text", line}, {"spans", spans}}.dump() << "\n";
  }
  if (!f.out.empty())
    write_text(f.out, lines.str());
  else
    std::cout << lines.str();
  return 0;
}

void write_runs(const ExperimentConfig& cfg, const std::string& experiment, const std::vector<RunRecord>& runs,
                const std::function<std::pair<std::string, std::string>(const RunRecord&)>& key,
                const std::function<std::string(const RunRecord&)>& file) {
  for (const auto& r : runs) {
    auto [src, tgt] = key(r);
    write_json(run_dir(cfg, experiment, src, tgt, r.seed) / file(r), r.to_json());
  }
}

int cmd_zero_shot(const CommonFlags& f) {
  ExperimentConfig cfg = effective_config(f, true);
  const auto langs = languages_with(cfg);
  if (langs.size() < 2) throw ConfigError("zero-shot needs at least two languages with embeddings");
  EmbeddingSet set = load_embedding_set(cfg, langs);
  ZeroShotGrid g = zero_shot_grid(load_language_data(cfg, langs), cfg.model, cfg.train, set,
                                  resolve_workers(cfg.workers));
  write_runs(cfg, "zero-shot", g.runs,
             [](const RunRecord& r) { return std::make_pair(join(r.source_langs, "+"), r.target_lang); },
             [](const RunRecord&) { return std::string("run.json"); });
  const fs::path dir = fs::path(cfg.output) / "zero-shot";
  json j = g.to_json();
  j.erase("runs");
  write_json(dir / "grid.json", j);
  write_text(dir / "grid.csv", g.to_csv());
  std::cout << g.to_csv();
  return 0;
}

int cmd_leave_one_out(const CommonFlags& f, bool no_monolingual) {
  ExperimentConfig cfg = effective_config(f, true);
  const auto langs = languages_with(cfg);
  if (langs.size() < 2) throw ConfigError("leave-one-out needs at least two languages with embeddings");
  EmbeddingSet set = load_embedding_set(cfg, langs);
  LeaveOneOutResult res = leave_one_out(load_language_data(cfg, langs), cfg.model, cfg.train, set,
                                        resolve_workers(cfg.workers), !no_monolingual);
  write_runs(cfg, "leave-one-out", res.runs,
             [](const RunRecord& r) {
               return std::make_pair(r.arm == "monolingual" ? r.target_lang : std::string("all"), r.target_lang);
             },
             [](const RunRecord&) { return std::string("run.json"); });
  const fs::path dir = fs::path(cfg.output) / "leave-one-out";
  json j = res.to_json();
  j.erase("runs");
  write_json(dir / "table.json", j);
  write_text(dir / "table.csv", res.to_csv());
  std::cout << res.to_csv();
  return 0;
}

int cmd_curve(const CommonFlags& f) {
  ExperimentConfig cfg = effective_config(f, true);
  if (cfg.sources.empty() || cfg.target.empty())
    throw ConfigError("curve needs \"sources\" and \"target\" in the config");
  std::vector<std::string> langs = cfg.sources;
  langs.erase(std::remove(langs.begin(), langs.end(), cfg.target), langs.end());
  if (langs.empty()) throw ConfigError("curve needs a source language other than the target");
  const std::string src0 = langs.front();
  langs.push_back(cfg.target);
  EmbeddingSet set = load_embedding_set(cfg, langs);
  std::vector<LanguageData> data = load_language_data(cfg, langs);
  LanguageData target = data.back();
  data.pop_back();
  const auto sizes = cfg.curve_sizes.empty() ? default_curve_sizes(target.train.size()) : cfg.curve_sizes;
  LearningCurve c = learning_curve(data, target, sizes, cfg.model, cfg.train, set, resolve_workers(cfg.workers));
  write_runs(cfg, "curve", c.runs, [&](const RunRecord&) { return std::make_pair(src0, cfg.target); },
             [](const RunRecord& r) { return r.arm + "-" + std::to_string(r.target_samples) + ".json"; });
  const fs::path dir = fs::path(cfg.output) / "curve" / (src0 + "-" + cfg.target);
  json j = c.to_json();
  j.erase("runs");
  write_json(dir / "curve.json", j);
  write_text(dir / "curve.csv", c.to_csv());
  std::cout << c.to_csv();
  return 0;
}

void report_error(const std::string& kind, const std::string& message, int line = 0) {
  json e = {{"kind", kind}, {"message", message}};
  if (line > 0) e["line"] = line;
  std::cerr << json{{"error", e}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot cross-lingual opinion target extraction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "xote 1.0");

  CommonFlags f;
  auto common = [&](CLI::App* sub, bool config, bool lang) {
    if (config) {
      sub->add_option("--config", f.config, "experiment config (JSON)");
      sub->add_option("--seed", f.seed, "run a single seed");
      sub->add_option("--workers", f.workers, "parallel runs (0 = all cores; env XOTE_WORKERS)");
    }
    sub->add_option("--out", f.out, "output path");
    sub->add_option("--embeddings", f.embeddings, "<lang>=<path>, repeatable");
    sub->add_option("--cap", f.cap, "vocabulary cap (default 50000)");
    if (lang) sub->add_option("--lang", f.lang, "language tag")->required();
    sub->add_flag("-v,--verbose", f.verbose, "log progress to stderr");
  };

  std::string p1, p2, p3;
  AlignFlags af;
  bool no_mono = false;

  auto* ingest = app.add_subcommand("ingest", "parse SemEval XML, report statistics, export CoNLL");
  ingest->add_option("xml", p1)->required()->check(CLI::ExistingFile);
  common(ingest, false, true);

  auto* convert = app.add_subcommand("convert-vectors", "cache a .vec file as binary .xemb");
  convert->add_option("vectors", p1)->required()->check(CLI::ExistingFile);
  common(convert, false, true);

  auto* align = app.add_subcommand("align", "Procrustes-align source vectors to target vectors");
  align->add_option("source_vectors", p1)->required()->check(CLI::ExistingFile);
  align->add_option("target_vectors", p2)->required()->check(CLI::ExistingFile);
  align->add_option("dictionary", p3)->required()->check(CLI::ExistingFile);
  align->add_option("--src-lang", af.src_lang);
  align->add_option("--tgt-lang", af.tgt_lang);
  align->add_option("--test-fraction", af.test_fraction, "held-out dictionary share for precision@k");
  align->add_flag("--no-normalize", af.no_normalize, "skip unit-normalising dictionary vectors");
  align->add_option("--seed", f.seed, "dictionary split seed");
  common(align, false, false);

  auto* train_cmd = app.add_subcommand("train", "train one model from a config");
  common(train_cmd, true, false);

  auto* eval_cmd = app.add_subcommand("eval", "exact-span F1 of a checkpoint on a corpus");
  eval_cmd->add_option("checkpoint", p1)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("corpus", p2)->required()->check(CLI::ExistingFile);
  common(eval_cmd, true, true);

  auto* predict = app.add_subcommand("predict", "extract targets from raw text, one sentence per line");
  predict->add_option("checkpoint", p1)->required()->check(CLI::ExistingFile);
  predict->add_option("text", p2)->required()->check(CLI::ExistingFile);
  common(predict, true, true);

  auto* zero = app.add_subcommand("zero-shot", "source x target grid");
  common(zero, true, false);

  auto* loo = app.add_subcommand("leave-one-out", "train on all other languages");
  loo->alias("loo");
  loo->add_flag("--no-monolingual", no_mono, "skip the target->target baseline");
  common(loo, true, false);

  auto* curve = app.add_subcommand("curve", "learning curve over target-language samples");
  common(curve, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  set_log_sink([&](LogLevel level, const std::string& m) {
    if (level == LogLevel::kWarning)
      std::cerr << "warning: " << m << "\n";
    else if (f.verbose)
      std::cerr << m << "\n";
  });

  try {
    if (*ingest) return cmd_ingest(f, p1);
    if (*convert) return cmd_convert(f, p1);
    if (*align) return cmd_align(f, af, p1, p2, p3);
    if (*train_cmd) return cmd_train(f);
    if (*eval_cmd) return cmd_eval(f, p1, p2);
    if (*predict) return cmd_predict(f, p1, p2);
    if (*zero) return cmd_zero_shot(f);
    if (*loo) return cmd_leave_one_out(f, no_mono);
    if (*curve) return cmd_curve(f);
  } catch (const FormatError& e) {
    report_error(e.kind(), e.what(), static_cast<int>(e.line));
    return 1;
  } catch (const ConfigError& e) {
    report_error(e.kind(), e.what());
    return 2;
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    report_error("io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 2;
}

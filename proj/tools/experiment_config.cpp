#include "experiment_config.hpp"

#include <fstream>
#include <set>

#include "xote/align.hpp"
#include "xote/data.hpp"
#include "xote/error.hpp"
#include "xote/log.hpp"

namespace xote::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

ModelConfig parse_model(const json& j) {
  const std::string where = "\"model\"";
  reject_unknown(j, {"layers", "kernel_width", "conv_dim", "dense_dim", "dropout_embed",
                     "dropout_hidden", "l1_lambda", "activation"}, where);
  ModelConfig m;
  read(j, "layers", m.layers, where);
  read(j, "kernel_width", m.kernel_width, where);
  read(j, "conv_dim", m.conv_dim, where);
  read(j, "dense_dim", m.dense_dim, where);
  read(j, "dropout_embed", m.dropout_embed, where);
  read(j, "dropout_hidden", m.dropout_hidden, where);
  read(j, "l1_lambda", m.l1_lambda, where);
  read(j, "activation", m.activation, where);
  m.validate();
  return m;
}

TrainConfig parse_train(const json& j) {
  const std::string where = "\"train\"";
  reject_unknown(j, {"batch_size", "max_epochs", "patience", "val_fraction", "seeds", "adam"}, where);
  TrainConfig t;
  read(j, "batch_size", t.batch_size, where);
  read(j, "max_epochs", t.max_epochs, where);
  read(j, "patience", t.patience, where);
  read(j, "val_fraction", t.val_fraction, where);
  read(j, "seeds", t.seeds, where);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    reject_unknown(a, {"alpha", "beta1", "beta2", "epsilon"}, "\"train.adam\"");
    read(a, "alpha", t.adam.alpha, "\"train.adam\"");
    read(a, "beta1", t.adam.beta1, "\"train.adam\"");
    read(a, "beta2", t.adam.beta2, "\"train.adam\"");
    read(a, "epsilon", t.adam.epsilon, "\"train.adam\"");
  }
  t.validate();
  return t;
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
  json langs = json::object();
  for (const auto& [name, p] : languages) {
    json l = json::object();
    if (!p.train.empty()) l["train"] = p.train;
    if (!p.test.empty()) l["test"] = p.test;
    if (!p.embeddings.empty()) l["embeddings"] = p.embeddings;
    if (!p.projection.empty()) l["projection"] = p.projection;
    if (!p.dictionary.empty()) l["dictionary"] = p.dictionary;
    langs[name] = l;
  }
  json j = {{"schema_version", kSchemaVersion},
            {"output", output},
            {"vocab_cap", vocab_cap},
            {"lowercase_fallback", lowercase_fallback},
            {"workers", workers},
            {"languages", langs},
            {"sources", sources},
            {"model",
             {{"layers", model.layers},
              {"kernel_width", model.kernel_width},
              {"conv_dim", model.conv_dim},
              {"dense_dim", model.dense_dim},
              {"dropout_embed", model.dropout_embed},
              {"dropout_hidden", model.dropout_hidden},
              {"l1_lambda", model.l1_lambda},
              {"activation", model.activation}}},
            {"train",
             {{"batch_size", train.batch_size},
              {"max_epochs", train.max_epochs},
              {"patience", train.patience},
              {"val_fraction", train.val_fraction},
              {"seeds", train.seeds},
              {"adam",
               {{"alpha", train.adam.alpha},
                {"beta1", train.adam.beta1},
                {"beta2", train.adam.beta2},
                {"epsilon", train.adam.epsilon}}}}}};
  if (!target.empty()) j["target"] = target;
  if (!pivot.empty()) j["pivot"] = pivot;
  if (!curve_sizes.empty()) j["curve_sizes"] = curve_sizes;
  return j;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("schema_version")) throw ConfigError("config has no schema_version");
  if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + j.at("schema_version").dump() + ", expected " +
                      std::to_string(kSchemaVersion));
  reject_unknown(j, {"schema_version", "output", "vocab_cap", "lowercase_fallback", "workers", "pivot",
                     "languages", "sources", "target", "curve_sizes", "model", "train"},
                 "config");
  ExperimentConfig cfg;
  read(j, "output", cfg.output, "config");
  cfg.output = resolve(cfg.output, base_dir);
  read(j, "vocab_cap", cfg.vocab_cap, "config");
  read(j, "lowercase_fallback", cfg.lowercase_fallback, "config");
  read(j, "workers", cfg.workers, "config");
  read(j, "pivot", cfg.pivot, "config");
  read(j, "sources", cfg.sources, "config");
  read(j, "target", cfg.target, "config");
  read(j, "curve_sizes", cfg.curve_sizes, "config");
  if (j.contains("languages")) {
    if (!j.at("languages").is_object()) throw ConfigError("\"languages\" must be an object");
    for (const auto& [name, l] : j.at("languages").items()) {
      const std::string where = "language '" + name + "'";
      if (!l.is_object()) throw ConfigError(where + " must be an object");
      reject_unknown(l, {"train", "test", "embeddings", "projection", "dictionary"}, where);
      LanguagePaths p;
      read(l, "train", p.train, where);
      read(l, "test", p.test, where);
      read(l, "embeddings", p.embeddings, where);
      read(l, "projection", p.projection, where);
      read(l, "dictionary", p.dictionary, where);
      for (std::string* s : {&p.train, &p.test, &p.embeddings, &p.projection, &p.dictionary})
        *s = resolve(*s, base_dir);
      if (!p.projection.empty() && !p.dictionary.empty())
        throw ConfigError(where + " sets both a projection and a dictionary");
      cfg.languages[name] = p;
    }
  }
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (cfg.vocab_cap == 0) throw ConfigError("vocab_cap must be > 0");

  for (const auto& s : cfg.sources)
    if (!cfg.languages.count(s)) throw ConfigError("source language '" + s + "' is not configured");
  if (!cfg.target.empty() && !cfg.languages.count(cfg.target))
    throw ConfigError("target language '" + cfg.target + "' is not configured");
  bool needs_pivot = false;
  for (const auto& [name, p] : cfg.languages) needs_pivot = needs_pivot || !p.dictionary.empty();
  if (needs_pivot && !cfg.languages.count(cfg.pivot))
    throw ConfigError("dictionaries are given but pivot '" + cfg.pivot + "' is not a configured language");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

void check_paths(const ExperimentConfig& cfg) {
  for (const auto& [name, p] : cfg.languages)
    for (const std::string* s : {&p.train, &p.test, &p.embeddings, &p.projection, &p.dictionary})
      if (!s->empty() && !fs::exists(*s))
        throw ConfigError("language '" + name + "': file not found: " + *s);
}

EmbeddingSet load_embedding_set(const ExperimentConfig& cfg, const std::vector<std::string>& langs) {
  std::vector<std::string> wanted = langs;
  if (wanted.empty())
    for (const auto& [name, p] : cfg.languages) wanted.push_back(name);

  std::map<std::string, EmbeddingTable> raw;
  auto raw_table = [&](const std::string& lang) -> const EmbeddingTable& {
    auto it = raw.find(lang);
    if (it != raw.end()) return it->second;
    const auto cfg_it = cfg.languages.find(lang);
    if (cfg_it == cfg.languages.end() || cfg_it->second.embeddings.empty())
      throw ConfigError("no embeddings configured for language '" + lang + "'");
    log_info("loading embeddings for " + lang + " from " + cfg_it->second.embeddings);
    return raw.emplace(lang, load_embeddings_file(cfg_it->second.embeddings, lang, cfg.vocab_cap))
        .first->second;
  };

  EmbeddingSet set(cfg.lowercase_fallback);
  for (const auto& lang : wanted) {
    const auto cfg_it = cfg.languages.find(lang);
    if (cfg_it == cfg.languages.end()) throw ConfigError("language '" + lang + "' is not configured");
    const LanguagePaths& p = cfg_it->second;
    if (p.embeddings.empty()) continue;
    const EmbeddingTable& table = raw_table(lang);
    if (!p.projection.empty()) {
      std::ifstream in(p.projection, std::ios::binary);
      if (!in) throw ConfigError("cannot open projection " + p.projection);
      set.add(apply_projection(table, load_projection(in)));
    } else if (!p.dictionary.empty() && lang != cfg.pivot) {
      std::ifstream in(p.dictionary);
      if (!in) throw ConfigError("cannot open dictionary " + p.dictionary);
      AlignmentResult al = align_tables(table, raw_table(cfg.pivot), load_dictionary(in));
      log_info("aligned " + lang + " to " + cfg.pivot + " with " + std::to_string(al.pairs_used) + " pairs");
      set.add(apply_projection(table, al.projection));
    } else {
      set.add(table);
    }
  }
  return set;
}

std::vector<LanguageData> load_language_data(const ExperimentConfig& cfg,
                                             const std::vector<std::string>& langs) {
  std::vector<std::string> wanted = langs;
  if (wanted.empty())
    for (const auto& [name, p] : cfg.languages) wanted.push_back(name);
  std::vector<LanguageData> out;
  for (const auto& lang : wanted) {
    const auto it = cfg.languages.find(lang);
    if (it == cfg.languages.end()) throw ConfigError("language '" + lang + "' is not configured");
    LanguageData d;
    d.language = lang;
    if (!it->second.train.empty()) d.train = load_corpus_file(it->second.train, lang).sentences;
    if (!it->second.test.empty()) d.test = load_corpus_file(it->second.test, lang).sentences;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace xote::cli

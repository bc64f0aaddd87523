#pragma once

// JSON experiment configuration shared by the CLI subcommands.
//
//   {
//     "schema_version": 1,
//     "output": "results",
//     "vocab_cap": 50000,
//     "lowercase_fallback": true,
//     "workers": 0,
//     "pivot": "en",
//     "languages": {
//       "en": {"train": "en_train.xml", "test": "en_test.xml", "embeddings": "wiki.en.align.vec"},
//       "es": {"train": "...", "test": "...", "embeddings": "...",
//              "projection": "es-en.xprj" | "dictionary": "es-en.txt"}
//     },
//     "sources": ["en"], "target": "es", "curve_sizes": [0, 50, 100],
//     "model": {...ModelConfig fields...},
//     "train": {"batch_size": 32, ..., "seeds": [1, 2], "adam": {"alpha": 0.001, ...}}
//   }
//
// Relative paths resolve against the directory of the config file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xote/embeddings.hpp"
#include "xote/tagger.hpp"
#include "xote/trainer.hpp"

namespace xote::cli {

inline constexpr int kSchemaVersion = 1;

struct LanguagePaths {
  std::string train;
  std::string test;
  std::string embeddings;
  std::string projection;  // applied to the embeddings when set
  std::string dictionary;  // otherwise aligned to the pivot with this dictionary
};

struct ExperimentConfig {
  std::map<std::string, LanguagePaths> languages;
  std::vector<std::string> sources;
  std::string target;
  std::vector<std::size_t> curve_sizes;  // empty: default sizes
  std::string pivot;
  std::string output = "results";
  std::size_t vocab_cap = kDefaultVocabCap;
  bool lowercase_fallback = true;
  std::size_t workers = 0;
  ModelConfig model;
  TrainConfig train;

  nlohmann::json to_json() const;
};

// Throws ConfigError on a missing or unsupported schema_version, unknown keys
// or wrong types.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::string& path);

// Every referenced file must exist; throws ConfigError naming the first one
// that does not.
void check_paths(const ExperimentConfig& cfg);

// Loads (and aligns) the embedding tables of `langs`, or of every configured
// language when empty.
EmbeddingSet load_embedding_set(const ExperimentConfig& cfg,
                                const std::vector<std::string>& langs = {});

// Train/test corpora of every configured language; a missing split stays empty.
std::vector<LanguageData> load_language_data(const ExperimentConfig& cfg,
                                             const std::vector<std::string>& langs = {});

}  // namespace xote::cli

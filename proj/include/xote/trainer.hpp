#pragma once

// Adam training with early stopping on held-out exact-span F1, plus the
// cross-lingual experiment drivers: single-source zero-shot grid,
// leave-one-language-out, and target-data learning curves.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xote/data.hpp"
#include "xote/embeddings.hpp"
#include "xote/eval.hpp"
#include "xote/tagger.hpp"
#include "xote/tensor.hpp"

namespace xote {

std::vector<std::uint64_t> default_seeds();

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double val_fraction = 0.2;
  std::vector<std::uint64_t> seeds = default_seeds();
  AdamConfig adam;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct RunRecord {
  std::vector<std::string> source_langs;
  std::string target_lang;
  std::uint64_t seed = 0;
  std::string arm;                   // driver-specific label, e.g. "cross" / "mono"
  std::size_t target_samples = 0;   // target-language sentences mixed into training
  std::size_t train_sentences = 0;
  std::size_t val_sentences = 0;
  std::size_t epochs_trained = 0;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::optional<double> test_f1;
  std::vector<EpochStats> history;
  bool failed = false;
  std::string failure;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

// Uniform split without replacement; round(fraction·n) sentences go to
// validation.
std::pair<std::vector<Sentence>, std::vector<Sentence>> split_train_val(
    const std::vector<Sentence>& data, double fraction, std::uint64_t seed);

struct TrainSet {
  std::string language;
  std::vector<Sentence> sentences;
};

struct TrainResult {
  ModelParams params;  // best-validation checkpoint
  RunRecord record;
};

// Sources are concatenated in language order, then split into train and
// validation. Epochs continue until validation F1 has not improved for
// `patience` consecutive epochs (or max_epochs). A divergent run returns its
// best checkpoint so far with record.failed set.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::vector<TrainSet>& sources, const EmbeddingSet& embeddings,
                  std::uint64_t seed);

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const EmbeddingSet& embeddings, const std::vector<Sentence>& sentences);

struct LanguageData {
  std::string language;
  std::vector<Sentence> train;
  std::vector<Sentence> test;
};

// 0 means the available hardware parallelism.
std::size_t resolve_workers(std::size_t requested);

// The drivers below run independent trainings on up to `workers` threads.
// Results are collected by job index, so they do not depend on scheduling.

struct ZeroShotGrid {
  std::vector<std::string> languages;
  // mean_f1[s][t]: trained on languages[s], tested on languages[t]; NaN marks
  // a skipped cell.
  std::vector<std::vector<double>> mean_f1;
  std::vector<RunRecord> runs;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

ZeroShotGrid zero_shot_grid(const std::vector<LanguageData>& languages, const ModelConfig& model_cfg,
                            const TrainConfig& cfg, const EmbeddingSet& embeddings,
                            std::size_t workers = 1);

struct LeaveOneOutRow {
  std::string target;
  double all_others_f1 = 0.0;
  std::optional<double> monolingual_f1;
};

struct LeaveOneOutResult {
  std::vector<LeaveOneOutRow> rows;
  std::vector<RunRecord> runs;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

LeaveOneOutResult leave_one_out(const std::vector<LanguageData>& languages,
                                const ModelConfig& model_cfg, const TrainConfig& cfg,
                                const EmbeddingSet& embeddings, std::size_t workers = 1,
                                bool include_monolingual = true);

std::vector<std::size_t> default_curve_sizes(std::size_t target_train_size);

struct CurvePoint {
  std::size_t target_samples = 0;
  double cross_lingual_f1 = 0.0;             // full source + s target samples
  double monolingual_f1 = 0.0;               // s target samples only
  std::optional<double> all_languages_f1;    // every source + s target samples
};

struct LearningCurve {
  std::vector<std::string> sources;  // sources[0] drives the cross-lingual arm
  std::string target;
  std::vector<CurvePoint> points;
  std::vector<RunRecord> runs;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// `sources[0]` is the single source language; when more than one source is
// given the all-languages arm is also trained. Target subsamples are nested
// prefixes of a per-seed permutation of the target training data.
LearningCurve learning_curve(const std::vector<LanguageData>& sources, const LanguageData& target,
                             const std::vector<std::size_t>& sizes, const ModelConfig& model_cfg,
                             const TrainConfig& cfg, const EmbeddingSet& embeddings,
                             std::size_t workers = 1);

}  // namespace xote

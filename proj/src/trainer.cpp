#include "xote/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "xote/error.hpp"
#include "xote/log.hpp"

namespace xote {
namespace {

// Sub-stream identifiers for Rng::derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kDropoutStream = 4;
constexpr std::uint64_t kSubsampleStream = 5;

constexpr double kSkipped = std::numeric_limits<double>::quiet_NaN();

void run_parallel(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, jobs));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs; ++j) fn(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < jobs; j = next++) {
        try {
          fn(j);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double mean_of_completed(const std::vector<const RunRecord*>& runs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const RunRecord* r : runs)
    if (!r->failed && r->test_f1) {
      sum += *r->test_f1;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : kSkipped;
}

std::string csv_value(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

nlohmann::json json_value(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

std::vector<Example> to_examples(const EmbeddingSet& embeddings, const std::vector<Sentence>& data) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& s : data)
    if (!s.tokens.empty()) out.push_back(make_example(embeddings, s));
  return out;
}

}  // namespace

std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (max_epochs == 0) throw ConfigError("max_epochs must be > 0");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  adam.validate();
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : history)
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val_f1}});
  return {{"source_langs", source_langs},
          {"target_lang", target_lang},
          {"seed", seed},
          {"arm", arm},
          {"target_samples", target_samples},
          {"train_sentences", train_sentences},
          {"val_sentences", val_sentences},
          {"epochs_trained", epochs_trained},
          {"best_epoch", best_epoch},
          {"best_val_f1", best_val_f1},
          {"test_f1", test_f1 ? nlohmann::json(*test_f1) : nlohmann::json(nullptr)},
          {"history", hist},
          {"failed", failed},
          {"failure", failure}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.source_langs = j.at("source_langs").get<std::vector<std::string>>();
  r.target_lang = j.at("target_lang").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.arm = j.value("arm", "");
  r.target_samples = j.value("target_samples", std::size_t{0});
  r.train_sentences = j.at("train_sentences").get<std::size_t>();
  r.val_sentences = j.at("val_sentences").get<std::size_t>();
  r.epochs_trained = j.at("epochs_trained").get<std::size_t>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.best_val_f1 = j.at("best_val_f1").get<double>();
  if (!j.at("test_f1").is_null()) r.test_f1 = j.at("test_f1").get<double>();
  for (const auto& e : j.at("history"))
    r.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                         e.at("val_f1").get<double>()});
  r.failed = j.at("failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  return r;
}

std::pair<std::vector<Sentence>, std::vector<Sentence>> split_train_val(
    const std::vector<Sentence>& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must be in (0, 1)");
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (n_val == 0 || n_val >= data.size())
    throw ConfigError("validation fraction " + std::to_string(fraction) + " of " +
                      std::to_string(data.size()) + " sentences leaves an empty split");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> is_val(data.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  std::pair<std::vector<Sentence>, std::vector<Sentence>> out;
  for (std::size_t i = 0; i < data.size(); ++i) (is_val[i] ? out.second : out.first).push_back(data[i]);
  return out;
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const EmbeddingSet& embeddings, const std::vector<Sentence>& sentences) {
  std::vector<SentenceSpans> gold, pred;
  gold.reserve(sentences.size());
  pred.reserve(sentences.size());
  for (const auto& s : sentences) {
    gold.push_back({s.id, s.targets});
    pred.push_back({s.id, predict_spans(params, cfg, embeddings, s)});
  }
  return exact_span_f1(gold, pred);
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::vector<TrainSet>& sources, const EmbeddingSet& embeddings,
                  std::uint64_t seed) {
  model_cfg.validate();
  cfg.validate();
  std::vector<const TrainSet*> ordered;
  for (const auto& s : sources)
    if (!s.sentences.empty()) ordered.push_back(&s);
  if (ordered.empty()) throw ConfigError("train: no training data");
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const TrainSet* a, const TrainSet* b) { return a->language < b->language; });

  RunRecord rec;
  rec.seed = seed;
  std::vector<Sentence> pool;
  for (const TrainSet* s : ordered) {
    if (rec.source_langs.empty() || rec.source_langs.back() != s->language)
      rec.source_langs.push_back(s->language);
    pool.insert(pool.end(), s->sentences.begin(), s->sentences.end());
  }
  if (pool.size() < 5) throw ConfigError("train: need at least 5 sentences, got " + std::to_string(pool.size()));

  auto [train_part, val_part] = split_train_val(pool, cfg.val_fraction, Rng::derive_seed(seed, kSplitStream));
  rec.train_sentences = train_part.size();
  rec.val_sentences = val_part.size();
  const std::vector<Example> examples = to_examples(embeddings, train_part);
  if (examples.empty()) throw ConfigError("train: training split has no tokens");

  ModelParams params = init_model(model_cfg, embeddings.dim(), Rng::derive_seed(seed, kInitStream));
  ModelParams best = params;
  std::vector<AdamState> states;
  for (auto t : params.tensors()) states.emplace_back(t.size());

  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::uint64_t shuffle_base = Rng::derive_seed(seed, kShuffleStream);
  const std::uint64_t dropout_base = Rng::derive_seed(seed, kDropoutStream);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive_seed(shuffle_base, epoch));
    Rng dropout_rng(Rng::derive_seed(dropout_base, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    try {
      std::vector<Example> batch;
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        batch.clear();
        for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
          batch.push_back(examples[order[i]]);
        LossAndGradients lg = loss_and_gradients(params, model_cfg, batch, true, dropout_rng);
        auto p = params.tensors();
        const auto g = std::as_const(lg.grads).tensors();
        for (std::size_t t = 0; t < p.size(); ++t) adam_step(p[t], g[t], states[t], cfg.adam);
        loss_sum += lg.loss;
        ++batches;
      }
    } catch (const NumericError& e) {
      rec.failed = true;
      rec.failure = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      log_warning("training diverged: " + rec.failure);
      break;
    }

    const double val_f1 = evaluate(params, model_cfg, embeddings, val_part).f1;
    rec.history.push_back({epoch, loss_sum / static_cast<double>(batches), val_f1});
    rec.epochs_trained = epoch;
    if (val_f1 > best_f1) {
      best_f1 = val_f1;
      best = params;
      rec.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  rec.best_val_f1 = std::max(best_f1, 0.0);
  return {std::move(best), std::move(rec)};
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

nlohmann::json ZeroShotGrid::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t s = 0; s < languages.size(); ++s)
    for (std::size_t t = 0; t < languages.size(); ++t)
      cells.push_back({{"source", languages[s]}, {"target", languages[t]}, {"mean_f1", json_value(mean_f1[s][t])}});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : mean_f1) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : r) row.push_back(json_value(v));
    rows.push_back(row);
  }
  nlohmann::json run_list = nlohmann::json::array();
  for (const auto& r : runs) run_list.push_back(r.to_json());
  return {{"languages", languages}, {"mean_f1", rows}, {"cells", cells}, {"runs", run_list}};
}

std::string ZeroShotGrid::to_csv() const {
  std::ostringstream out;
  out << "source\\target";
  for (const auto& l : languages) out << ',' << l;
  out << '\n';
  for (std::size_t s = 0; s < languages.size(); ++s) {
    out << languages[s];
    for (std::size_t t = 0; t < languages.size(); ++t) out << ',' << csv_value(mean_f1[s][t]);
    out << '\n';
  }
  return out.str();
}

ZeroShotGrid zero_shot_grid(const std::vector<LanguageData>& languages, const ModelConfig& model_cfg,
                            const TrainConfig& cfg, const EmbeddingSet& embeddings,
                            std::size_t workers) {
  cfg.validate();
  const std::size_t n = languages.size();
  const std::size_t n_seeds = cfg.seeds.size();
  ZeroShotGrid grid;
  for (const auto& l : languages) grid.languages.push_back(l.language);

  auto usable = [&](const LanguageData& l) { return l.train.size() >= 5 && embeddings.has(l.language); };
  auto testable = [&](const LanguageData& l) { return !l.test.empty() && embeddings.has(l.language); };

  // One training per (source, seed), evaluated on every target.
  std::vector<std::vector<RunRecord>> per_job(n * n_seeds);
  run_parallel(n * n_seeds, workers, [&](std::size_t job) {
    const std::size_t s = job / n_seeds;
    const std::uint64_t seed = cfg.seeds[job % n_seeds];
    if (!usable(languages[s])) return;
    TrainResult res = train(model_cfg, cfg, {{languages[s].language, languages[s].train}}, embeddings, seed);
    for (std::size_t t = 0; t < n; ++t) {
      if (!testable(languages[t])) continue;
      RunRecord r = res.record;
      r.arm = s == t ? "monolingual" : "zero-shot";
      r.target_lang = languages[t].language;
      if (!r.failed) r.test_f1 = evaluate(res.params, model_cfg, embeddings, languages[t].test).f1;
      per_job[job].push_back(std::move(r));
    }
  });

  grid.mean_f1.assign(n, std::vector<double>(n, kSkipped));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<const RunRecord*> cell;
      for (std::size_t k = 0; k < n_seeds; ++k)
        for (const auto& r : per_job[s * n_seeds + k])
          if (r.target_lang == languages[t].language) cell.push_back(&r);
      grid.mean_f1[s][t] = mean_of_completed(cell);
      if (std::isnan(grid.mean_f1[s][t]))
        log_warning("zero-shot grid: cell " + languages[s].language + "->" + languages[t].language + " skipped");
    }
  }
  for (auto& job : per_job)
    for (auto& r : job) grid.runs.push_back(std::move(r));
  return grid;
}

nlohmann::json LeaveOneOutResult::to_json() const {
  nlohmann::json out_rows = nlohmann::json::array();
  for (const auto& r : rows)
    out_rows.push_back({{"target", r.target},
                        {"all_others_f1", json_value(r.all_others_f1)},
                        {"monolingual_f1", r.monolingual_f1 ? json_value(*r.monolingual_f1) : nlohmann::json(nullptr)}});
  nlohmann::json run_list = nlohmann::json::array();
  for (const auto& r : runs) run_list.push_back(r.to_json());
  return {{"rows", out_rows}, {"runs", run_list}};
}

std::string LeaveOneOutResult::to_csv() const {
  std::ostringstream out;
  out << "target,all_others,monolingual\n";
  for (const auto& r : rows)
    out << r.target << ',' << csv_value(r.all_others_f1) << ','
        << (r.monolingual_f1 ? csv_value(*r.monolingual_f1) : "NA") << '\n';
  return out.str();
}

LeaveOneOutResult leave_one_out(const std::vector<LanguageData>& languages,
                                const ModelConfig& model_cfg, const TrainConfig& cfg,
                                const EmbeddingSet& embeddings, std::size_t workers,
                                bool include_monolingual) {
  cfg.validate();
  if (languages.size() < 2) throw ConfigError("leave_one_out needs at least two languages");
  const std::size_t n = languages.size();
  const std::size_t n_seeds = cfg.seeds.size();
  const std::size_t arms = include_monolingual ? 2 : 1;
  std::vector<std::optional<RunRecord>> results(n * arms * n_seeds);

  run_parallel(results.size(), workers, [&](std::size_t job) {
    const std::size_t t = job / (arms * n_seeds);
    const std::size_t arm = (job / n_seeds) % arms;
    const std::uint64_t seed = cfg.seeds[job % n_seeds];
    const LanguageData& target = languages[t];
    if (target.test.empty() || !embeddings.has(target.language)) return;
    std::vector<TrainSet> sets;
    if (arm == 0) {
      for (std::size_t s = 0; s < n; ++s)
        if (s != t && embeddings.has(languages[s].language))
          sets.push_back({languages[s].language, languages[s].train});
    } else {
      sets.push_back({target.language, target.train});
    }
    std::size_t total = 0;
    for (const auto& s : sets) total += s.sentences.size();
    if (total < 5) return;
    TrainResult res = train(model_cfg, cfg, sets, embeddings, seed);
    res.record.arm = arm == 0 ? "all-others" : "monolingual";
    res.record.target_lang = target.language;
    if (!res.record.failed) res.record.test_f1 = evaluate(res.params, model_cfg, embeddings, target.test).f1;
    results[job] = std::move(res.record);
  });

  LeaveOneOutResult out;
  for (std::size_t t = 0; t < n; ++t) {
    LeaveOneOutRow row;
    row.target = languages[t].language;
    for (std::size_t arm = 0; arm < arms; ++arm) {
      std::vector<const RunRecord*> runs;
      for (std::size_t k = 0; k < n_seeds; ++k) {
        const auto& r = results[(t * arms + arm) * n_seeds + k];
        if (r) runs.push_back(&*r);
      }
      const double mean = mean_of_completed(runs);
      if (arm == 0)
        row.all_others_f1 = mean;
      else
        row.monolingual_f1 = mean;
    }
    out.rows.push_back(row);
  }
  for (auto& r : results)
    if (r) out.runs.push_back(std::move(*r));
  return out;
}

std::vector<std::size_t> default_curve_sizes(std::size_t target_train_size) {
  std::vector<std::size_t> sizes;
  for (std::size_t s : {0, 50, 100, 200, 500, 1000})
    if (s < target_train_size) sizes.push_back(s);
  sizes.push_back(target_train_size);
  return sizes;
}

nlohmann::json LearningCurve::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"target_samples", p.target_samples},
                   {"cross_lingual_f1", json_value(p.cross_lingual_f1)},
                   {"monolingual_f1", json_value(p.monolingual_f1)},
                   {"all_languages_f1", p.all_languages_f1 ? json_value(*p.all_languages_f1) : nlohmann::json(nullptr)}});
  nlohmann::json run_list = nlohmann::json::array();
  for (const auto& r : runs) run_list.push_back(r.to_json());
  return {{"sources", sources}, {"target", target}, {"points", pts}, {"runs", run_list}};
}

std::string LearningCurve::to_csv() const {
  std::ostringstream out;
  out << "target_samples,cross_lingual,monolingual,all_languages\n";
  for (const auto& p : points)
    out << p.target_samples << ',' << csv_value(p.cross_lingual_f1) << ',' << csv_value(p.monolingual_f1)
        << ',' << (p.all_languages_f1 ? csv_value(*p.all_languages_f1) : "NA") << '\n';
  return out.str();
}

LearningCurve learning_curve(const std::vector<LanguageData>& sources, const LanguageData& target,
                             const std::vector<std::size_t>& sizes, const ModelConfig& model_cfg,
                             const TrainConfig& cfg, const EmbeddingSet& embeddings,
                             std::size_t workers) {
  cfg.validate();
  if (sources.empty()) throw ConfigError("learning_curve needs a source language");
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw ConfigError("learning_curve sizes must be ascending");
  for (std::size_t s : sizes)
    if (s > target.train.size())
      throw ConfigError("learning_curve size " + std::to_string(s) + " exceeds the " +
                        std::to_string(target.train.size()) + " target training sentences");

  const std::size_t arms = sources.size() > 1 ? 3 : 2;  // cross, mono, all languages
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<std::optional<RunRecord>> results(sizes.size() * arms * n_seeds);

  run_parallel(results.size(), workers, [&](std::size_t job) {
    const std::size_t point = job / (arms * n_seeds);
    const std::size_t arm = (job / n_seeds) % arms;
    const std::uint64_t seed = cfg.seeds[job % n_seeds];
    const std::size_t n_target = sizes[point];

    std::vector<std::size_t> perm(target.train.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng sub_rng(Rng::derive_seed(seed, kSubsampleStream));
    sub_rng.shuffle(perm);
    TrainSet target_part{target.language, {}};
    for (std::size_t i = 0; i < n_target; ++i) target_part.sentences.push_back(target.train[perm[i]]);

    std::vector<TrainSet> sets;
    if (arm == 0) sets.push_back({sources[0].language, sources[0].train});
    if (arm == 2)
      for (const auto& s : sources) sets.push_back({s.language, s.train});
    sets.push_back(std::move(target_part));

    RunRecord rec;
    std::size_t total = 0;
    for (const auto& s : sets) total += s.sentences.size();
    if (total < 5) {
      // Too little data to split off validation: the model extracts nothing.
      rec.seed = seed;
      rec.test_f1 = 0.0;
      rec.failure = "fewer than 5 training sentences";
    } else {
      TrainResult res = train(model_cfg, cfg, sets, embeddings, seed);
      rec = std::move(res.record);
      if (!rec.failed) rec.test_f1 = evaluate(res.params, model_cfg, embeddings, target.test).f1;
    }
    rec.arm = arm == 0 ? "cross" : arm == 1 ? "mono" : "all";
    rec.target_lang = target.language;
    rec.target_samples = n_target;
    results[job] = std::move(rec);
  });

  LearningCurve curve;
  for (const auto& s : sources) curve.sources.push_back(s.language);
  curve.target = target.language;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    CurvePoint pt;
    pt.target_samples = sizes[p];
    for (std::size_t arm = 0; arm < arms; ++arm) {
      std::vector<const RunRecord*> runs;
      for (std::size_t k = 0; k < n_seeds; ++k) runs.push_back(&*results[(p * arms + arm) * n_seeds + k]);
      const double mean = mean_of_completed(runs);
      if (arm == 0) pt.cross_lingual_f1 = mean;
      if (arm == 1) pt.monolingual_f1 = mean;
      if (arm == 2) pt.all_languages_f1 = mean;
    }
    curve.points.push_back(pt);
  }
  for (auto& r : results) curve.runs.push_back(std::move(*r));
  return curve;
}

}  // namespace xote

#include "xote/eval.hpp"

#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "xote/error.hpp"
#include "xote/log.hpp"

namespace xote {
namespace {

using Offsets = std::set<std::pair<std::size_t, std::size_t>>;

std::map<std::string, Offsets> index_by_id(const std::vector<SentenceSpans>& side,
                                           const char* name, bool warn_duplicates) {
  std::map<std::string, Offsets> out;
  for (const auto& s : side) {
    auto [it, fresh] = out.emplace(s.id, Offsets{});
    if (!fresh) throw ContractError(std::string("duplicate sentence id '") + s.id + "' in " + name);
    for (const auto& span : s.spans) {
      if (!it->second.emplace(span.start, span.end).second && warn_duplicates)
        log_warning("sentence " + s.id + ": duplicate gold span [" + std::to_string(span.start) +
                    "," + std::to_string(span.end) + ") counted once");
    }
  }
  return out;
}

double ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

EvalReport EvalReport::from_counts(std::size_t tp, std::size_t predicted, std::size_t gold) {
  EvalReport r;
  r.true_positives = tp;
  r.predicted_count = predicted;
  r.gold_count = gold;
  r.precision = ratio(tp, predicted);
  r.recall = ratio(tp, gold);
  const double pr = r.precision + r.recall;
  r.f1 = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
  return r;
}

nlohmann::json EvalReport::to_json() const {
  return {{"true_positives", true_positives},
          {"predicted_count", predicted_count},
          {"gold_count", gold_count},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1}};
}

std::string EvalReport::to_tsv() const {
  std::ostringstream out;
  out << true_positives << '\t' << predicted_count << '\t' << gold_count << std::fixed
      << std::setprecision(6) << '\t' << precision << '\t' << recall << '\t' << f1;
  return out.str();
}

EvalReport merge(const EvalReport& a, const EvalReport& b) {
  return EvalReport::from_counts(a.true_positives + b.true_positives,
                                 a.predicted_count + b.predicted_count,
                                 a.gold_count + b.gold_count);
}

EvalReport exact_span_f1(const std::vector<SentenceSpans>& gold,
                         const std::vector<SentenceSpans>& pred) {
  const auto g = index_by_id(gold, "gold", true);
  const auto p = index_by_id(pred, "predictions", false);

  std::vector<std::string> unmatched;
  for (const auto& [id, _] : g)
    if (!p.count(id)) unmatched.push_back(id);
  for (const auto& [id, _] : p)
    if (!g.count(id)) unmatched.push_back(id);
  if (!unmatched.empty()) {
    std::string msg = "sentence ids differ between gold and predictions:";
    for (std::size_t i = 0; i < unmatched.size() && i < 20; ++i) msg += " " + unmatched[i];
    if (unmatched.size() > 20) msg += " ...";
    throw ContractError(msg);
  }

  std::size_t tp = 0, n_pred = 0, n_gold = 0;
  for (const auto& [id, gold_spans] : g) {
    const Offsets& pred_spans = p.at(id);
    n_gold += gold_spans.size();
    n_pred += pred_spans.size();
    for (const auto& s : pred_spans) tp += gold_spans.count(s);
  }
  return EvalReport::from_counts(tp, n_pred, n_gold);
}

}  // namespace xote

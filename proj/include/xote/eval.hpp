#pragma once

// Exact character-span precision / recall / F1, micro-averaged over a corpus.

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "xote/iob.hpp"

namespace xote {

struct EvalReport {
  std::size_t true_positives = 0;
  std::size_t predicted_count = 0;
  std::size_t gold_count = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Recomputes P/R/F1 from the counts; 0/0 is 0.
  static EvalReport from_counts(std::size_t tp, std::size_t predicted, std::size_t gold);

  nlohmann::json to_json() const;
  // tp, pred, gold, P, R, F1
  std::string to_tsv() const;
};

// Sums the counts of two disjoint corpora.
EvalReport merge(const EvalReport& a, const EvalReport& b);

struct SentenceSpans {
  std::string id;
  std::vector<TargetSpan> spans;
};

// A prediction counts iff a gold span of the same sentence has the same
// (start, end). Identical spans within a sentence count once. Both sides must
// cover the same sentence ids, otherwise ContractError.
EvalReport exact_span_f1(const std::vector<SentenceSpans>& gold,
                         const std::vector<SentenceSpans>& pred);

}  // namespace xote

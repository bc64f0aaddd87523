#pragma once

// SemEval-2016 ABSA XML ingestion, tokenization with character offsets, span
// repair, and a CoNLL-style column format.

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xote/embeddings.hpp"
#include "xote/iob.hpp"

namespace xote {

struct Sentence {
  std::string id;
  std::string language;
  std::string text;
  std::vector<Token> tokens;
  std::vector<TargetSpan> targets;  // sorted by start

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Corpus {
  std::string language;
  std::string split;  // "train", "test" or empty
  std::vector<Sentence> sentences;
};

// Whitespace split, then leading and trailing punctuation characters become
// one-character tokens. Offsets are code points into `text`.
std::vector<Token> tokenize(const std::string& text);

struct XmlParseStats {
  std::size_t null_targets = 0;
  std::size_t duplicate_targets = 0;
};

// One Sentence per <sentence> element, tokenized, with one target per
// distinct non-NULL (from, to) Opinion. Throws FormatError on malformed XML
// and DataError on offsets outside the sentence text.
Corpus parse_semeval_xml(std::istream& in, const std::string& language,
                         XmlParseStats* stats = nullptr);

// Snaps every target to the minimal run of tokens covering it. Throws
// DataError if targets overlap after snapping or cover no token.
// `snapped` receives the number of targets whose boundaries moved.
Sentence align_spans_to_tokens(const Sentence& sentence, std::size_t* snapped = nullptr);

struct IngestReport {
  std::string language;
  std::size_t sentences = 0;  // before exclusions
  std::size_t tokens = 0;
  std::size_t targets = 0;
  std::size_t null_targets = 0;
  std::size_t duplicate_targets = 0;
  std::size_t snapped_targets = 0;
  std::vector<std::string> excluded;  // ids of sentences that failed repair
  std::size_t oov_tokens = 0;
  std::size_t embedded_tokens = 0;  // tokens looked up for the OOV figure

  nlohmann::json to_json() const;
};

struct IngestResult {
  Corpus corpus;  // excluded sentences removed
  IngestReport report;
};

// parse_semeval_xml + align_spans_to_tokens over every sentence.
IngestResult ingest_semeval(std::istream& xml, const std::string& language);

// Loads a corpus from `.xml` (SemEval) or anything else (CoNLL).
Corpus load_corpus_file(const std::string& path, const std::string& language);

// "# id=<id>" (and "# lang=<tag>" once per file), then one
// "text<TAB>start<TAB>end<TAB>tag" line per token and a blank line per
// sentence.
void export_conll(std::ostream& out, const Corpus& corpus);
Corpus import_conll(std::istream& in, const std::string& language = "");

struct DatasetStats {
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t targets = 0;
  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats dataset_stats(const Corpus& corpus);

struct OovStats {
  std::size_t tokens = 0;
  std::size_t oov = 0;
  double rate() const { return tokens ? static_cast<double>(oov) / static_cast<double>(tokens) : 0.0; }
};

OovStats oov_stats(const std::vector<Sentence>& sentences, const EmbeddingTable& table,
                   bool lowercase_fallback = true);

}  // namespace xote

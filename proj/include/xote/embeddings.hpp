#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xote/tensor.hpp"

namespace xote {

inline constexpr std::size_t kDefaultVocabCap = 50000;
inline constexpr std::uint32_t kEmbeddingCacheVersion = 1;

// Frozen word vectors of one language. Vocabulary order is file order, which
// for fastText files is frequency order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::string language, std::vector<std::string> vocab, Matrix vectors);

  const std::string& language() const { return language_; }
  std::size_t dim() const { return vectors_.cols(); }
  std::size_t size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const Matrix& vectors() const { return vectors_; }

  std::optional<std::size_t> find(const std::string& word) const;
  std::span<const double> vector(std::size_t index) const { return vectors_.row(index); }

  struct Lookup {
    std::span<const double> vector;
    bool in_vocabulary = false;
  };
  // Exact match, then (if enabled) lowercase match, else the zero vector.
  Lookup lookup(const std::string& token, bool lowercase_fallback = true) const;

 private:
  std::string language_;
  std::vector<std::string> vocab_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> zeros_;
};

// fastText .vec text: optional "<count> <dim>" header, then "word v1 ... vd"
// lines. Keeps the first `cap` distinct words; duplicates keep the first
// occurrence.
EmbeddingTable load_vectors(std::istream& in, const std::string& language,
                            std::size_t cap = kDefaultVocabCap);
void write_vectors(std::ostream& out, const EmbeddingTable& table);

// Binary cache ("XEMB").
void save_table(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable load_table(std::istream& in);

// `.xemb` files load through load_table, anything else through load_vectors.
EmbeddingTable load_embeddings_file(const std::string& path, const std::string& language,
                                    std::size_t cap = kDefaultVocabCap);

// Every vector v becomes v·W.
EmbeddingTable apply_projection(const EmbeddingTable& table, const Matrix& w);

// Tables of several languages sharing one vector space.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(bool lowercase_fallback = true) : lowercase_fallback_(lowercase_fallback) {}

  // Throws ConfigError if the dimension differs from tables already present.
  void add(std::shared_ptr<const EmbeddingTable> table);
  void add(EmbeddingTable table) { add(std::make_shared<const EmbeddingTable>(std::move(table))); }

  bool has(const std::string& language) const { return tables_.count(language) != 0; }
  const EmbeddingTable& at(const std::string& language) const;
  std::size_t dim() const { return dim_; }
  bool lowercase_fallback() const { return lowercase_fallback_; }
  std::vector<std::string> languages() const;

 private:
  std::map<std::string, std::shared_ptr<const EmbeddingTable>> tables_;
  std::size_t dim_ = 0;
  bool lowercase_fallback_;
};

}  // namespace xote

#pragma once

// Orthogonal Procrustes alignment of two embedding spaces from a bilingual
// dictionary, built on a one-sided Jacobi SVD.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "xote/embeddings.hpp"
#include "xote/tensor.hpp"

namespace xote {

struct SvdResult {
  Matrix u;               // m × n, orthonormal columns (n × n when square)
  std::vector<double> s;  // non-increasing, >= 0
  Matrix v;               // n × n orthogonal
};

// M = U·diag(S)·Vᵀ. Throws NumericError with the residual off-diagonal mass if
// Jacobi sweeps do not converge within `max_sweeps`.
SvdResult svd(const Matrix& m, int max_sweeps = 80);

// Orthogonal W minimising ‖X·W − Y‖_F, i.e. U·Vᵀ for XᵀY = U·S·Vᵀ.
Matrix procrustes_align(const Matrix& x, const Matrix& y);

struct WordPair {
  std::string source;
  std::string target;
  friend bool operator==(const WordPair&, const WordPair&) = default;
};

struct BilingualDictionary {
  std::vector<WordPair> train;
  std::vector<WordPair> test;
};

// One pair per line: source, a tab or space, target.
std::vector<WordPair> load_dictionary(std::istream& in);

// Partitions by source word so that a word's translations stay on one side.
// The train side keeps every pair; the test side keeps the first pair per
// source word.
BilingualDictionary split_dictionary(const std::vector<WordPair>& pairs, double test_fraction,
                                     std::uint64_t seed);

struct DictionaryRows {
  Matrix source;  // n × d
  Matrix target;  // n × d
  std::size_t used = 0;
  std::size_t dropped = 0;  // pairs with a word missing from either table
};

// Stacks the vectors of dictionary pairs; optionally unit-normalises rows.
DictionaryRows dictionary_rows(const EmbeddingTable& source, const EmbeddingTable& target,
                               const std::vector<WordPair>& pairs, bool normalize);

struct AlignmentResult {
  Matrix projection;  // source space → target space
  std::size_t pairs_used = 0;
  std::size_t pairs_dropped = 0;
};

AlignmentResult align_tables(const EmbeddingTable& source, const EmbeddingTable& target,
                             const std::vector<WordPair>& pairs, bool normalize = true);

struct PrecisionReport {
  double precision = 0.0;
  std::size_t hits = 0;
  std::size_t evaluated = 0;
  std::size_t excluded_oov = 0;
};

// Fraction of pairs whose target word is among the k cosine-nearest target
// words of the (already projected) source vector. Equal similarities rank by
// vocabulary order.
PrecisionReport translation_precision(const EmbeddingTable& projected_source,
                                      const EmbeddingTable& target,
                                      const std::vector<WordPair>& pairs, std::size_t k);

inline constexpr std::uint32_t kProjectionVersion = 1;

// "XPRJ" container: magic, version, rows, cols, then float64 values row-major.
void save_projection(std::ostream& out, const Matrix& w);
Matrix load_projection(std::istream& in);

}  // namespace xote

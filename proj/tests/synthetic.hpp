#pragma once

// Test-only fixtures: templated opinion corpora, latent-space embedding
// tables for "twin" languages, and brute-force oracles.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xote/data.hpp"
#include "xote/embeddings.hpp"
#include "xote/eval.hpp"
#include "xote/rng.hpp"
#include "xote/tensor.hpp"

namespace xote::testing {

// Joins `words` with single spaces; `targets` are [first, last) word ranges.
Sentence make_sentence(const std::string& id, const std::string& language,
                       const std::vector<std::string>& words,
                       const std::vector<std::pair<std::size_t, std::size_t>>& targets);

// The shared concept vocabulary of the templated corpus.
std::vector<std::string> concept_words();

// Restaurant-review-like sentences built from five templates. Every word w is
// written as prefix + w, so twin languages differ only in surface form.
std::vector<Sentence> templated_corpus(const std::string& language, std::size_t n,
                                       std::uint64_t seed, const std::string& prefix = "");

// One latent vector per concept word; nouns and adjectives cluster.
Matrix concept_latents(std::size_t dim, std::uint64_t seed);

// Table whose row for prefix + concept_words()[i] is latents.row(i)·rotation
// plus Gaussian noise of the given scale.
EmbeddingTable latent_table(const std::string& language, const std::string& prefix,
                            const Matrix& latents, const Matrix& rotation, double noise,
                            std::uint64_t seed);

// Haar-ish random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
Matrix random_orthogonal(std::size_t d, Rng& rng);
Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng);

// Quadratic matcher: every (pred, gold) pair compared explicitly.
EvalReport brute_force_f1(const std::vector<SentenceSpans>& gold,
                          const std::vector<SentenceSpans>& pred);

}  // namespace xote::testing

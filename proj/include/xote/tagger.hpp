#pragma once

// Convolutional IOB tagger: frozen embeddings → L same-padded convolutions
// (ReLU) → dense ReLU layer → softmax over {I, O, B} per token.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xote/data.hpp"
#include "xote/embeddings.hpp"
#include "xote/iob.hpp"
#include "xote/rng.hpp"
#include "xote/tensor.hpp"

namespace xote {

struct ModelConfig {
  std::size_t layers = 5;
  std::size_t kernel_width = 3;
  std::size_t conv_dim = 300;
  std::size_t dense_dim = 300;
  double dropout_embed = 0.3;
  double dropout_hidden = 0.5;
  // Applied to the dense (penultimate) layer weights only; embeddings are frozen.
  double l1_lambda = 1e-6;
  std::string activation = "relu";

  void validate() const;

  // Canonical "key=value" lines in a fixed key order.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  ModelParams() = default;
  // Zero-filled tensors shaped for `cfg` and `embed_dim`.
  ModelParams(const ModelConfig& cfg, std::size_t embed_dim);

  std::vector<ConvKernel> conv;
  Matrix dense_w;  // conv_dim × dense_dim
  std::vector<double> dense_b;
  Matrix out_w;    // dense_dim × 3
  std::vector<double> out_b;

  std::size_t embed_dim() const { return conv.empty() ? 0 : conv.front().in_dim; }

  // Every trainable tensor, in declaration order: conv[0].weights,
  // conv[0].bias, ..., dense_w, dense_b, out_w, out_b.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Glorot-uniform weights, zero biases.
ModelParams init_model(const ModelConfig& cfg, std::size_t embed_dim, std::uint64_t seed);

// Stacks the embedding of every token (n × dim) using the table for the
// sentence's language. Counts out-of-vocabulary tokens into `oov` if given.
Matrix embed_sentence(const EmbeddingSet& embeddings, const Sentence& sentence,
                      std::size_t* oov = nullptr);

// Activations kept for the backward pass.
struct ForwardCache {
  Matrix input;                     // embeddings after dropout
  std::vector<Matrix> conv_out;     // post-ReLU, pre-dropout
  std::vector<Matrix> conv_masks;   // empty when not training
  std::vector<Matrix> conv_dropped; // inputs of the next layer
  Matrix dense_out;                 // post-ReLU, pre-dropout
  Matrix dense_mask;
  Matrix dense_dropped;
  Matrix probs;
  Matrix embed_mask;
};

// Returns n × 3 tag distributions, columns ordered (I, O, B). Dropout is
// applied only when `train` is set, drawing masks from `rng`.
Matrix forward(const ModelParams& params, const ModelConfig& cfg, const Matrix& inputs,
               bool train, Rng& rng, ForwardCache* cache = nullptr);
Matrix forward(const ModelParams& params, const ModelConfig& cfg,
               const EmbeddingSet& embeddings, const Sentence& sentence);

struct Example {
  std::string id;
  Matrix inputs;          // n × embed_dim
  std::vector<Tag> gold;  // n
};

Example make_example(const EmbeddingSet& embeddings, const Sentence& sentence);

struct LossAndGradients {
  double loss = 0.0;           // cross-entropy mean + L1
  double cross_entropy = 0.0;  // mean over tokens
  double l1 = 0.0;
  std::size_t tokens = 0;
  bool clamped = false;
  ModelParams grads;
};

// Mean token cross-entropy over the batch plus l1_lambda·‖dense_w‖₁, with
// gradients for every ModelParams tensor. Throws NumericError naming the
// sentence and token on a non-finite loss.
LossAndGradients loss_and_gradients(const ModelParams& params, const ModelConfig& cfg,
                                    std::span<const Example> batch, bool train, Rng& rng);

// Argmax per token, exact ties resolved O < I < B.
std::vector<Tag> argmax_tags(const Matrix& probs);

std::vector<Tag> predict_tags(const ModelParams& params, const ModelConfig& cfg,
                              const EmbeddingSet& embeddings, const Sentence& sentence);
std::vector<TargetSpan> predict_spans(const ModelParams& params, const ModelConfig& cfg,
                                      const EmbeddingSet& embeddings, const Sentence& sentence);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::map<std::string, std::string> metadata;
};

// "XOTE" container: magic, version, config text, metadata text, then every
// tensor as (rank, dims..., float64 values), all little-endian.
void save_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& cfg,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint load_checkpoint(std::istream& in);
// Also rejects a checkpoint whose config differs from `expected`.
Checkpoint load_checkpoint(std::istream& in, const ModelConfig& expected);

}  // namespace xote

#include "xote/tagger.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "xote/error.hpp"
#include "xote/log.hpp"

namespace xote {
namespace {

void glorot_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

void multiply_inplace(Matrix& a, const Matrix& mask) {
  for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] *= mask.values()[i];
}

std::vector<std::vector<std::size_t>> tensor_shapes(const ModelParams& p) {
  std::vector<std::vector<std::size_t>> shapes;
  for (const auto& k : p.conv) {
    shapes.push_back({k.weights.rows(), k.weights.cols()});
    shapes.push_back({k.bias.size()});
  }
  shapes.push_back({p.dense_w.rows(), p.dense_w.cols()});
  shapes.push_back({p.dense_b.size()});
  shapes.push_back({p.out_w.rows(), p.out_w.cols()});
  shapes.push_back({p.out_b.size()});
  return shapes;
}

std::string format_real(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw FormatError("bad key=value line in checkpoint", line_no);
    if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
      throw FormatError("repeated key '" + line.substr(0, eq) + "' in checkpoint", line_no);
  }
  return kv;
}

}  // namespace

void ModelConfig::validate() const {
  if (layers == 0) throw ConfigError("model needs at least one convolution layer");
  if (kernel_width == 0 || kernel_width % 2 == 0)
    throw ConfigError("kernel_width must be odd, got " + std::to_string(kernel_width));
  if (conv_dim == 0 || dense_dim == 0) throw ConfigError("layer dimensions must be > 0");
  if (!(dropout_embed >= 0.0 && dropout_embed < 1.0) || !(dropout_hidden >= 0.0 && dropout_hidden < 1.0))
    throw ConfigError("dropout rates must be in [0, 1)");
  if (!(l1_lambda >= 0.0)) throw ConfigError("l1_lambda must be >= 0");
  if (activation != "relu") throw ConfigError("unsupported activation '" + activation + "'");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "activation=" << activation << "\n"
      << "conv_dim=" << conv_dim << "\n"
      << "dense_dim=" << dense_dim << "\n"
      << "dropout_embed=" << format_real(dropout_embed) << "\n"
      << "dropout_hidden=" << format_real(dropout_hidden) << "\n"
      << "kernel_width=" << kernel_width << "\n"
      << "l1_lambda=" << format_real(l1_lambda) << "\n"
      << "layers=" << layers << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  auto kv = parse_key_values(text);
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model config is missing '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto count = [&](const char* key) {
    const std::string s = take(key);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw FormatError(std::string("bad value for '") + key + "'");
    return v;
  };
  auto real = [&](const char* key) {
    const std::string s = take(key);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw FormatError(std::string("bad value for '") + key + "'");
    return v;
  };
  ModelConfig cfg;
  cfg.activation = take("activation");
  cfg.conv_dim = count("conv_dim");
  cfg.dense_dim = count("dense_dim");
  cfg.dropout_embed = real("dropout_embed");
  cfg.dropout_hidden = real("dropout_hidden");
  cfg.kernel_width = count("kernel_width");
  cfg.l1_lambda = real("l1_lambda");
  cfg.layers = count("layers");
  if (!kv.empty()) throw FormatError("unknown model config key '" + kv.begin()->first + "'");
  cfg.validate();
  return cfg;
}

ModelParams::ModelParams(const ModelConfig& cfg, std::size_t embed_dim) {
  cfg.validate();
  if (embed_dim == 0) throw ConfigError("embedding dimension must be > 0");
  std::size_t in = embed_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    conv.emplace_back(cfg.kernel_width, in, cfg.conv_dim);
    in = cfg.conv_dim;
  }
  dense_w = Matrix(cfg.conv_dim, cfg.dense_dim);
  dense_b.assign(cfg.dense_dim, 0.0);
  out_w = Matrix(cfg.dense_dim, kNumTags);
  out_b.assign(kNumTags, 0.0);
}

std::vector<std::span<double>> ModelParams::tensors() {
  std::vector<std::span<double>> t;
  for (auto& k : conv) {
    t.push_back(k.weights.values());
    t.push_back(k.bias);
  }
  t.push_back(dense_w.values());
  t.push_back(dense_b);
  t.push_back(out_w.values());
  t.push_back(out_b);
  return t;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> t;
  for (const auto& k : conv) {
    t.push_back(k.weights.values());
    t.push_back(k.bias);
  }
  t.push_back(dense_w.values());
  t.push_back(dense_b);
  t.push_back(out_w.values());
  t.push_back(out_b);
  return t;
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < conv.size(); ++l) {
    names.push_back("conv" + std::to_string(l) + ".weights");
    names.push_back("conv" + std::to_string(l) + ".bias");
  }
  names.insert(names.end(), {"dense.weights", "dense.bias", "output.weights", "output.bias"});
  return names;
}

bool ModelParams::all_finite() const {
  for (auto t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

ModelParams init_model(const ModelConfig& cfg, std::size_t embed_dim, std::uint64_t seed) {
  ModelParams p(cfg, embed_dim);
  Rng rng(seed);
  for (auto& k : p.conv)
    glorot_fill(k.weights.values(), k.width * k.in_dim, k.width * k.out_dim, rng);
  glorot_fill(p.dense_w.values(), p.dense_w.rows(), p.dense_w.cols(), rng);
  glorot_fill(p.out_w.values(), p.out_w.rows(), p.out_w.cols(), rng);
  return p;
}

Matrix embed_sentence(const EmbeddingSet& embeddings, const Sentence& sentence, std::size_t* oov) {
  const EmbeddingTable& table = embeddings.at(sentence.language);
  Matrix x(sentence.tokens.size(), table.dim());
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    auto hit = table.lookup(sentence.tokens[i].text, embeddings.lowercase_fallback());
    std::copy(hit.vector.begin(), hit.vector.end(), x.row(i).begin());
    if (oov && !hit.in_vocabulary) ++*oov;
  }
  return x;
}

Matrix forward(const ModelParams& params, const ModelConfig& cfg, const Matrix& inputs,
               bool train, Rng& rng, ForwardCache* cache) {
  if (inputs.rows() == 0) throw ContractError("forward: empty sentence");
  if (inputs.cols() != params.embed_dim())
    throw ConfigError("forward: input dim " + std::to_string(inputs.cols()) +
                      " != model embedding dim " + std::to_string(params.embed_dim()));
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};

  c.input = inputs;
  if (train && cfg.dropout_embed > 0.0) {
    c.embed_mask = dropout_mask(inputs.rows(), inputs.cols(), cfg.dropout_embed, rng);
    multiply_inplace(c.input, c.embed_mask);
  }
  const Matrix* h = &c.input;
  for (const auto& kernel : params.conv) {
    Matrix z = conv1d(*h, kernel);
    relu_inplace(z);
    Matrix dropped = z;
    Matrix mask;
    if (train && cfg.dropout_hidden > 0.0) {
      mask = dropout_mask(z.rows(), z.cols(), cfg.dropout_hidden, rng);
      multiply_inplace(dropped, mask);
    }
    c.conv_out.push_back(std::move(z));
    c.conv_masks.push_back(std::move(mask));
    c.conv_dropped.push_back(std::move(dropped));
    h = &c.conv_dropped.back();
  }
  c.dense_out = dense(*h, params.dense_w, params.dense_b, Activation::kRelu);
  c.dense_dropped = c.dense_out;
  if (train && cfg.dropout_hidden > 0.0) {
    c.dense_mask = dropout_mask(c.dense_out.rows(), c.dense_out.cols(), cfg.dropout_hidden, rng);
    multiply_inplace(c.dense_dropped, c.dense_mask);
  }
  c.probs = dense(c.dense_dropped, params.out_w, params.out_b, Activation::kSoftmax);
  return c.probs;
}

Matrix forward(const ModelParams& params, const ModelConfig& cfg, const EmbeddingSet& embeddings,
               const Sentence& sentence) {
  Rng unused(0);
  return forward(params, cfg, embed_sentence(embeddings, sentence), false, unused);
}

Example make_example(const EmbeddingSet& embeddings, const Sentence& sentence) {
  return {sentence.id, embed_sentence(embeddings, sentence),
          spans_to_tags(sentence.tokens, sentence.targets, sentence.id)};
}

LossAndGradients loss_and_gradients(const ModelParams& params, const ModelConfig& cfg,
                                    std::span<const Example> batch, bool train, Rng& rng) {
  LossAndGradients out;
  out.grads = ModelParams(cfg, params.embed_dim());
  for (const auto& ex : batch) {
    if (ex.gold.size() != ex.inputs.rows())
      throw ContractError("sentence " + ex.id + ": " + std::to_string(ex.gold.size()) +
                          " gold tags for " + std::to_string(ex.inputs.rows()) + " tokens");
    out.tokens += ex.gold.size();
  }
  if (out.tokens == 0) throw ContractError("loss_and_gradients: batch has no tokens");
  const double scale = 1.0 / static_cast<double>(out.tokens);

  double ce_sum = 0.0;
  ForwardCache cache;
  for (const auto& ex : batch) {
    forward(params, cfg, ex.inputs, train, rng, &cache);
    const std::size_t n = ex.gold.size();

    Matrix grad(n, kNumTags);
    for (std::size_t i = 0; i < n; ++i) {
      double p[kNumTags] = {0.0, 0.0, 0.0};
      p[static_cast<int>(ex.gold[i])] = 1.0;
      const auto q = cache.probs.row(i);
      CrossEntropy ce = cross_entropy(p, q);
      if (!std::isfinite(ce.loss))
        throw NumericError("non-finite loss at sentence " + ex.id + ", token " + std::to_string(i));
      if (ce.clamped && !out.clamped)
        log_warning("cross-entropy clamped at sentence " + ex.id + ", token " + std::to_string(i));
      out.clamped = out.clamped || ce.clamped;
      ce_sum += ce.loss;
      for (std::size_t t = 0; t < kNumTags; ++t) grad(i, t) = (q[t] - p[t]) * scale;
    }

    // Output layer: grad already w.r.t. logits.
    Matrix g = dense_backward(cache.dense_dropped, params.out_w, cache.probs, grad,
                              Activation::kNone, out.grads.out_w, out.grads.out_b);
    if (!cache.dense_mask.empty()) multiply_inplace(g, cache.dense_mask);
    const Matrix& dense_in = cache.conv_dropped.back();
    g = dense_backward(dense_in, params.dense_w, cache.dense_out, g, Activation::kRelu,
                       out.grads.dense_w, out.grads.dense_b);
    for (std::size_t l = params.conv.size(); l-- > 0;) {
      if (!cache.conv_masks[l].empty()) multiply_inplace(g, cache.conv_masks[l]);
      const Matrix& z = cache.conv_out[l];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(z.values()[i] > 0.0)) g.values()[i] = 0.0;
      const Matrix& in = l == 0 ? cache.input : cache.conv_dropped[l - 1];
      if (l == 0) {
        // Embeddings are frozen; only the kernel gradient is needed.
        ConvKernel& gk = out.grads.conv[0];
        conv1d_backward(in, params.conv[0], g, gk);
      } else {
        g = conv1d_backward(in, params.conv[l], g, out.grads.conv[l]);
      }
    }
  }
  out.cross_entropy = ce_sum * scale;
  out.l1 = l1_penalty(params.dense_w.values(), cfg.l1_lambda, out.grads.dense_w.values());
  out.loss = out.cross_entropy + out.l1;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite batch loss");
  return out;
}

std::vector<Tag> argmax_tags(const Matrix& probs) {
  std::vector<Tag> tags(probs.rows(), Tag::O);
  constexpr Tag kPriority[] = {Tag::O, Tag::I, Tag::B};
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    Tag best = kPriority[0];
    double best_p = probs(i, static_cast<int>(best));
    for (Tag t : {kPriority[1], kPriority[2]}) {
      const double p = probs(i, static_cast<int>(t));
      if (p > best_p) {
        best = t;
        best_p = p;
      }
    }
    tags[i] = best;
  }
  return tags;
}

std::vector<Tag> predict_tags(const ModelParams& params, const ModelConfig& cfg,
                              const EmbeddingSet& embeddings, const Sentence& sentence) {
  if (sentence.tokens.empty()) return {};
  return argmax_tags(forward(params, cfg, embeddings, sentence));
}

std::vector<TargetSpan> predict_spans(const ModelParams& params, const ModelConfig& cfg,
                                      const EmbeddingSet& embeddings, const Sentence& sentence) {
  return tags_to_spans(sentence.tokens, predict_tags(params, cfg, embeddings, sentence),
                       &sentence.text);
}

void save_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& cfg,
                     const std::map<std::string, std::string>& metadata) {
  std::string meta;
  for (const auto& [k, v] : metadata) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("checkpoint metadata entries must be single-line key=value");
    meta += k + "=" + v + "\n";
  }
  binary::write_magic(out, "XOTE");
  binary::write_u32(out, kCheckpointVersion);
  binary::write_string(out, cfg.to_text());
  binary::write_string(out, meta);
  const auto shapes = tensor_shapes(params);
  const auto tensors = params.tensors();
  binary::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    binary::write_u32(out, static_cast<std::uint32_t>(shapes[t].size()));
    for (std::size_t d : shapes[t]) binary::write_u64(out, d);
    for (double v : tensors[t]) binary::write_f64(out, v);
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
  binary::expect_magic(in, "XOTE");
  const auto version = binary::read_u32(in, "version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = ModelConfig::from_text(binary::read_string(in, "model config", 1 << 20));
  ck.metadata = parse_key_values(binary::read_string(in, "metadata", 1 << 20));

  const auto count = binary::read_u32(in, "tensor count");
  if (count != 2 * ck.config.layers + 4)
    throw FormatError("checkpoint has " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(2 * ck.config.layers + 4));
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::vector<double>> data;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto rank = binary::read_u32(in, "tensor rank");
    if (rank == 0 || rank > 2) throw FormatError("bad tensor rank " + std::to_string(rank));
    std::vector<std::size_t> dims;
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = binary::read_u64(in, "tensor shape");
      if (d == 0 || d > (1ull << 32)) throw FormatError("bad tensor dimension");
      dims.push_back(static_cast<std::size_t>(d));
      n *= d;
      if (n > (1ull << 32)) throw FormatError("implausible tensor size");
    }
    std::vector<double> values(n);
    for (double& v : values) v = binary::read_f64(in, "tensor values");
    shapes.push_back(std::move(dims));
    data.push_back(std::move(values));
  }

  const std::size_t width = ck.config.kernel_width;
  if (shapes[0].size() != 2 || shapes[0][0] % width != 0)
    throw FormatError("first convolution tensor has an inconsistent shape");
  ModelParams params(ck.config, shapes[0][0] / width);
  if (tensor_shapes(params) != shapes)
    throw FormatError("checkpoint tensor shapes do not match its model config");
  auto tensors = params.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t)
    std::copy(data[t].begin(), data[t].end(), tensors[t].begin());
  if (!params.all_finite()) throw FormatError("checkpoint contains non-finite values");
  ck.params = std::move(params);
  return ck;
}

Checkpoint load_checkpoint(std::istream& in, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(in);
  if (!(ck.config == expected))
    throw ConfigError("checkpoint model config differs from the requested one:\n" +
                      ck.config.to_text() + "vs\n" + expected.to_text());
  return ck;
}

}  // namespace xote

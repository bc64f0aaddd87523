#include <cmath>
#include <sstream>
#include <utility>

#include "doctest.h"
#include "synthetic.hpp"
#include "xote/error.hpp"
#include "xote/tagger.hpp"

using namespace xote;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.conv_dim = 6;
  cfg.dense_dim = 5;
  return cfg;
}

EmbeddingSet random_set(const std::vector<std::string>& words, std::size_t dim, std::uint64_t seed,
                        const std::string& lang = "en") {
  Rng rng(seed);
  EmbeddingSet set;
  set.add(EmbeddingTable(lang, words, testing::random_matrix(words.size(), dim, rng)));
  return set;
}

const std::vector<std::string> kWords = {"the", "wine", "list", "is", "also", "really", "nice", "."};

Sentence example_sentence() {
  return testing::make_sentence("ex", "en", kWords, {{1, 3}});
}

}  // namespace

TEST_CASE("model config defaults, validation and text round trip") {
  ModelConfig d;
  CHECK(d.layers == 5);
  CHECK(d.kernel_width == 3);
  CHECK(d.conv_dim == 300);
  CHECK(d.dense_dim == 300);
  CHECK(d.dropout_embed == 0.3);
  CHECK(d.dropout_hidden == 0.5);

  ModelConfig c = small_config();
  c.l1_lambda = 1.0 / 3.0;
  CHECK(ModelConfig::from_text(c.to_text()) == c);

  ModelConfig bad = d;
  bad.kernel_width = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = d;
  bad.dropout_hidden = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = d;
  bad.activation = "tanh";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_text("layers=2\n"), FormatError);
}

TEST_CASE("initialization") {
  ModelConfig cfg = small_config();
  ModelParams a = init_model(cfg, 4, 11);
  CHECK(a == init_model(cfg, 4, 11));
  CHECK_FALSE(a == init_model(cfg, 4, 12));

  for (const auto& k : a.conv) {
    for (double b : k.bias) CHECK(b == 0.0);
    const double limit = std::sqrt(6.0 / double(k.width * k.in_dim + k.width * k.out_dim));
    for (double w : k.weights.values()) CHECK(std::abs(w) <= limit);
  }
  for (double b : a.dense_b) CHECK(b == 0.0);
  for (double b : a.out_b) CHECK(b == 0.0);
  const double dense_limit = std::sqrt(6.0 / double(6 + 5));
  for (double w : a.dense_w.values()) CHECK(std::abs(w) <= dense_limit);
  const double out_limit = std::sqrt(6.0 / double(5 + 3));
  for (double w : a.out_w.values()) CHECK(std::abs(w) <= out_limit);
  CHECK(a.tensors().size() == a.tensor_names().size());
  CHECK(a.embed_dim() == 4);
}

TEST_CASE("forward outputs valid distributions") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 3);
  EmbeddingSet set = random_set(kWords, 4, 5);
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 8u}) {
    std::vector<std::string> words(kWords.begin(), kWords.begin() + n);
    Sentence s = testing::make_sentence("s", "en", words, {});
    for (bool train : {false, true}) {
      Matrix q = forward(p, cfg, embed_sentence(set, s), train, rng);
      REQUIRE(q.rows() == n);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (double v : q.row(i)) {
          CHECK(v > 0.0);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }
  CHECK_THROWS_AS(forward(p, cfg, Matrix(0, 4), false, rng), ContractError);
  CHECK_THROWS_AS(forward(p, cfg, Matrix(3, 5), false, rng), ConfigError);
}

TEST_CASE("inference is deterministic and independent of vocabulary order") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 3);
  EmbeddingSet set = random_set(kWords, 4, 5);
  const EmbeddingTable& t = set.at("en");

  std::vector<std::string> reversed(kWords.rbegin(), kWords.rend());
  Matrix rows(t.size(), t.dim());
  for (std::size_t i = 0; i < reversed.size(); ++i) {
    auto v = t.vector(*t.find(reversed[i]));
    std::copy(v.begin(), v.end(), rows.row(i).begin());
  }
  EmbeddingSet permuted;
  permuted.add(EmbeddingTable("en", reversed, rows));

  Sentence s = example_sentence();
  Matrix a = forward(p, cfg, set, s);
  CHECK(a == forward(p, cfg, set, s));
  CHECK(a == forward(p, cfg, permuted, s));
}

TEST_CASE("training-mode dropout depends only on the rng stream") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 3);
  EmbeddingSet set = random_set(kWords, 4, 5);
  Matrix x = embed_sentence(set, example_sentence());
  Rng r1(77), r2(77), r3(78);
  Matrix a = forward(p, cfg, x, true, r1);
  CHECK(a == forward(p, cfg, x, true, r2));
  CHECK_FALSE(a == forward(p, cfg, x, true, r3));
}

TEST_CASE("loss: uniform outputs give ln 3 and the L1 term is separate") {
  ModelConfig cfg = small_config();
  cfg.l1_lambda = 0.01;
  ModelParams p = init_model(cfg, 4, 3);
  std::fill(p.out_w.values().begin(), p.out_w.values().end(), 0.0);
  std::vector<std::string> words;
  for (int i = 0; i < 10; ++i) words.push_back(kWords[i % kWords.size()]);
  EmbeddingSet set = random_set(kWords, 4, 5);
  Example ex = make_example(set, testing::make_sentence("u", "en", words, {{2, 4}}));
  Rng rng(0);
  LossAndGradients r = loss_and_gradients(p, cfg, std::span(&ex, 1), false, rng);
  CHECK(r.tokens == 10);
  CHECK(r.cross_entropy == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  double l1 = 0;
  for (double w : p.dense_w.values()) l1 += std::abs(w);
  CHECK(r.l1 == doctest::Approx(0.01 * l1).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(r.cross_entropy + r.l1).epsilon(1e-12));
}

TEST_CASE("loss: confident correct outputs leave only the L1 term") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 3);
  std::fill(p.out_w.values().begin(), p.out_w.values().end(), 0.0);
  p.out_b = {-40.0, 40.0, -40.0};  // always O
  EmbeddingSet set = random_set(kWords, 4, 5);
  Example ex = make_example(set, testing::make_sentence("o", "en", kWords, {}));
  Rng rng(0);
  LossAndGradients r = loss_and_gradients(p, cfg, std::span(&ex, 1), false, rng);
  CHECK(r.cross_entropy < 1e-30);
  CHECK(std::abs(r.loss - r.l1) < 1e-30);
}

TEST_CASE("loss: gold length mismatch is a contract violation") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 3);
  EmbeddingSet set = random_set(kWords, 4, 5);
  Example ex = make_example(set, example_sentence());
  ex.gold.pop_back();
  Rng rng(0);
  CHECK_THROWS_AS(loss_and_gradients(p, cfg, std::span(&ex, 1), false, rng), ContractError);
}

TEST_CASE("end-to-end gradients match finite differences") {
  ModelConfig cfg = small_config();
  cfg.l1_lambda = 1e-3;
  EmbeddingSet set = random_set(kWords, 4, 8);
  std::vector<Example> batch = {
      make_example(set, testing::make_sentence("a", "en", {"the", "wine", "list", "is", "nice"}, {{1, 3}})),
      make_example(set, testing::make_sentence("b", "en", {"really", "."}, {{0, 1}})),
  };
  for (bool train : {false, true}) {
    CAPTURE(train);
    ModelParams p = init_model(cfg, 4, 21);
    for (auto t : p.tensors())
      for (double& v : t)
        if (v == 0.0) v = 0.05;  // move biases off zero so ReLU kinks stay rare
    Rng rng(5);
    LossAndGradients r = loss_and_gradients(p, cfg, batch, train, rng);
    auto loss = [&]() {
      Rng again(5);
      return loss_and_gradients(p, cfg, batch, train, again).loss;
    };
    GradCheckResult g = gradient_check(loss, p.tensors(), std::as_const(r.grads).tensors());
    CHECK(g.max_rel_error < 1e-4);
    CHECK(g.coords_checked == [&] {
      std::size_t n = 0;
      for (auto t : p.tensors()) n += t.size();
      return n;
    }());
  }
}

TEST_CASE("argmax tie-breaking prefers O, then I, then B") {
  Matrix q{{0.4, 0.4, 0.2}, {0.3, 0.3, 0.4}, {0.5, 0.2, 0.3}, {0.4, 0.2, 0.4}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  CHECK(argmax_tags(q) == std::vector<Tag>{Tag::O, Tag::B, Tag::I, Tag::I, Tag::O});
}

TEST_CASE("prediction") {
  ModelConfig cfg = small_config();
  EmbeddingSet set = random_set(kWords, 4, 5);
  Sentence s = example_sentence();

  SUBCASE("all-O model extracts nothing") {
    ModelParams p = init_model(cfg, 4, 3);
    std::fill(p.out_w.values().begin(), p.out_w.values().end(), 0.0);
    p.out_b = {0.0, 5.0, 0.0};
    CHECK(predict_spans(p, cfg, set, s).empty());
  }

  SUBCASE("a model fitted to the example sentence extracts 'wine list'") {
    cfg.dropout_embed = 0.0;
    cfg.dropout_hidden = 0.0;
    cfg.l1_lambda = 0.0;
    ModelParams p = init_model(cfg, 4, 3);
    Example ex = make_example(set, s);
    std::vector<AdamState> states(p.tensors().size());
    AdamConfig adam;
    adam.alpha = 0.01;
    Rng rng(0);
    for (int step = 0; step < 500; ++step) {
      LossAndGradients r = loss_and_gradients(p, cfg, std::span(&ex, 1), true, rng);
      auto params = p.tensors();
      auto grads = r.grads.tensors();
      for (std::size_t t = 0; t < params.size(); ++t) adam_step(params[t], grads[t], states[t], adam);
    }
    auto spans = predict_spans(p, cfg, set, s);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 4);
    CHECK(spans[0].end == 13);
    CHECK(spans[0].surface == "wine list");

    // Shifting every output logit by a constant changes nothing.
    ModelParams shifted = p;
    for (double& b : shifted.out_b) b += 17.5;
    CHECK(predict_spans(shifted, cfg, set, s) == spans);
  }
}

TEST_CASE("zero-shot: a model runs on another language's table unchanged") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 3);
  EmbeddingSet set = random_set(kWords, 4, 5);
  std::vector<std::string> es = {"el", "vino", "lista", "es", "tambien", "muy", "bueno", "."};
  set.add(EmbeddingTable("es", es, set.at("en").vectors()));
  Sentence en = example_sentence();
  Sentence sp = testing::make_sentence("es", "es", es, {});
  CHECK(forward(p, cfg, set, en) == forward(p, cfg, set, sp));
}

TEST_CASE("checkpoint round trip and failure modes") {
  ModelConfig cfg = small_config();
  ModelParams p = init_model(cfg, 4, 99);
  p.out_b = {0.1, -1.0 / 3.0, 1e-300};
  std::stringstream buf;
  save_checkpoint(buf, p, cfg, {{"source", "en"}, {"seed", "99"}});
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "XOTE");

  Checkpoint c = load_checkpoint(buf);
  CHECK(c.params == p);
  CHECK(c.config == cfg);
  CHECK(c.metadata.at("source") == "en");

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream truncated(bytes.substr(0, cut));
    CHECK_THROWS_AS(load_checkpoint(truncated), FormatError);
  }
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'Y';
  std::istringstream wm(wrong_magic);
  CHECK_THROWS_AS(load_checkpoint(wm), FormatError);
  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  std::istringstream wv(wrong_version);
  CHECK_THROWS_AS(load_checkpoint(wv), FormatError);

  ModelConfig other = cfg;
  other.dense_dim = 7;
  std::istringstream again(bytes);
  CHECK_THROWS_AS(load_checkpoint(again, other), ConfigError);

  std::ostringstream sink;
  CHECK_THROWS_AS(save_checkpoint(sink, p, cfg, {{"bad", "two\nlines"}}), ConfigError);
}

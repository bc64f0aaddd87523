#include <sstream>

#include "doctest.h"
#include "synthetic.hpp"
#include "xote/data.hpp"
#include "xote/error.hpp"
#include "xote/log.hpp"
#include "xote/text.hpp"

using namespace xote;

namespace {

std::vector<std::string> texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

void check_offsets(const std::string& text, const std::vector<Token>& tokens) {
  for (const auto& t : tokens) CHECK(text::substr(text, t.start, t.end) == t.text);
}

const char* kReview = R"(<?xml version="1.0" encoding="UTF-8"?>
<Reviews>
  <Review rid="1">
    <sentences>
      <sentence id="1:0">
        <text>The wine list is also really nice.</text>
        <Opinions>
          <Opinion target="wine list" category="DRINKS#STYLE_OPTIONS" polarity="positive" from="4" to="13"/>
          <Opinion target="wine list" category="DRINKS#QUALITY" polarity="positive" from="4" to="13"/>
          <Opinion target="NULL" category="RESTAURANT#GENERAL" polarity="positive" from="0" to="0"/>
        </Opinions>
      </sentence>
      <sentence id="1:1">
        <text>Nothing to say.</text>
      </sentence>
      <sentence id="1:2">
        <text>Moules were excellent, lobster ravioli was VERY salty!</text>
        <Opinions>
          <Opinion target="Moules" from="0" to="6"/>
          <Opinion target="obster ravioli" from="24" to="38"/>
        </Opinions>
      </sentence>
    </sentences>
  </Review>
</Reviews>
)";

}  // namespace

TEST_CASE("tokenize splits edge punctuation and keeps offsets") {
  const std::string s = "Moules were excellent,";
  auto tokens = tokenize(s);
  CHECK(texts(tokens) == std::vector<std::string>{"Moules", "were", "excellent", ","});
  CHECK(tokens[3].start == 21);
  CHECK(tokens[3].end == 22);
  check_offsets(s, tokens);

  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t ").empty());
  CHECK(texts(tokenize("VERY!")) == std::vector<std::string>{"VERY", "!"});
  CHECK(texts(tokenize("(great)...")) ==
        std::vector<std::string>{"(", "great", ")", ".", ".", "."});
  CHECK(texts(tokenize("well-known don't")) == std::vector<std::string>{"well-known", "don't"});
}

TEST_CASE("tokenize counts code points, not bytes") {
  const std::string s = "¡Çok güzel! «Пельмени» отличные.";
  auto tokens = tokenize(s);
  CHECK(texts(tokens) == std::vector<std::string>{"¡", "Çok", "güzel", "!", "«", "Пельмени", "»",
                                                  "отличные", "."});
  CHECK(tokens[1].start == 1);
  CHECK(tokens[5].start == 13);
  CHECK(tokens[5].end == 21);
  check_offsets(s, tokens);
}

TEST_CASE("tokens plus original gaps rebuild the text") {
  Rng rng(9);
  const std::string alphabet = "ab ,.!é  ";
  for (int trial = 0; trial < 200; ++trial) {
    std::u32string cps;
    const std::u32string letters = text::decode_utf8(alphabet);
    const std::size_t n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) cps.push_back(letters[rng.below(letters.size())]);
    const std::string s = text::encode_utf8(cps);
    auto tokens = tokenize(s);
    check_offsets(s, tokens);
    std::u32string rebuilt;
    std::size_t pos = 0;
    for (const auto& t : tokens) {
      rebuilt += cps.substr(pos, t.start - pos);
      rebuilt += text::decode_utf8(t.text);
      pos = t.end;
    }
    rebuilt += cps.substr(pos);
    CHECK(rebuilt == cps);
  }
}

TEST_CASE("SemEval XML parsing") {
  std::istringstream in(kReview);
  XmlParseStats stats;
  Corpus c = parse_semeval_xml(in, "en", &stats);
  REQUIRE(c.sentences.size() == 3);
  const Sentence& first = c.sentences[0];
  CHECK(first.id == "1:0");
  CHECK(first.language == "en");
  REQUIRE(first.targets.size() == 1);
  CHECK(first.targets[0] == TargetSpan{4, 13, "wine list"});
  CHECK(stats.null_targets == 1);
  CHECK(stats.duplicate_targets == 1);
  CHECK(c.sentences[1].targets.empty());
  CHECK(c.sentences[2].targets.size() == 2);
}

TEST_CASE("SemEval XML errors") {
  std::istringstream broken("<Reviews><sentence id=\"1\">\n<text>x</text>\n</Reviews>");
  try {
    parse_semeval_xml(broken, "en");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line > 0);
  }
  std::istringstream out_of_bounds(
      "<sentences><sentence id=\"s7\"><text>short</text><Opinions>"
      "<Opinion target=\"x\" from=\"2\" to=\"40\"/></Opinions></sentence></sentences>");
  try {
    parse_semeval_xml(out_of_bounds, "en");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("s7") != std::string::npos);
  }
  std::istringstream dup_ids(
      "<sentences><sentence id=\"a\"><text>x</text></sentence>"
      "<sentence id=\"a\"><text>y</text></sentence></sentences>");
  CHECK_THROWS_AS(parse_semeval_xml(dup_ids, "en"), DataError);
}

TEST_CASE("span repair snaps to the minimal token cover") {
  Sentence s;
  s.id = "r";
  s.text = "The wine list is nice.";
  s.tokens = tokenize(s.text);

  s.targets = {{4, 13, "wine list"}};
  std::size_t moved = 99;
  CHECK(align_spans_to_tokens(s, &moved).targets == s.targets);
  CHECK(moved == 0);

  s.targets = {{5, 13, "ine list"}};
  Sentence fixed = align_spans_to_tokens(s, &moved);
  CHECK(fixed.targets == std::vector<TargetSpan>{{4, 13, "wine list"}});
  CHECK(moved == 1);
  CHECK_NOTHROW(spans_to_tags(fixed.tokens, fixed.targets));

  s.targets = {{4, 8, "wine"}, {6, 13, "ne list"}};
  CHECK_THROWS_AS(align_spans_to_tokens(s), DataError);

  s.targets = {{4, 6, "wi"}, {6, 8, "ne"}};  // both snap to "wine"
  CHECK_THROWS_AS(align_spans_to_tokens(s), DataError);

  s.text = "a   b";
  s.tokens = tokenize(s.text);
  s.targets = {{2, 3, " "}};
  CHECK_THROWS_AS(align_spans_to_tokens(s), DataError);
}

TEST_CASE("ingest report counts before exclusions") {
  LogSink prev = set_log_sink([](LogLevel, const std::string&) {});
  std::string xml = kReview;
  const std::string extra =
      "<sentence id=\"bad\"><text>The wine list</text><Opinions>"
      "<Opinion target=\"wine\" from=\"4\" to=\"8\"/><Opinion target=\"ne list\" from=\"6\" to=\"13\"/>"
      "</Opinions></sentence>";
  xml.insert(xml.find("</sentences>"), extra);
  std::istringstream in(xml);
  IngestResult r = ingest_semeval(in, "en");
  set_log_sink(prev);

  CHECK(r.report.sentences == 4);
  CHECK(r.report.targets == 5);
  CHECK(r.report.null_targets == 1);
  CHECK(r.report.duplicate_targets == 1);
  CHECK(r.report.snapped_targets == 1);
  CHECK(r.report.excluded == std::vector<std::string>{"bad"});
  CHECK(r.corpus.sentences.size() == 3);
  CHECK(r.corpus.sentences[2].targets[1].surface == "lobster ravioli");
  for (const auto& s : r.corpus.sentences) {
    check_offsets(s.text, s.tokens);
    CHECK_NOTHROW(spans_to_tags(s.tokens, s.targets, s.id));
  }
  auto j = r.report.to_json();
  CHECK(j["excluded_sentences"] == 1);
}

TEST_CASE("CoNLL export of the example sentence") {
  std::istringstream in(kReview);
  Corpus c = ingest_semeval(in, "en").corpus;
  c.sentences.resize(1);
  std::ostringstream out;
  export_conll(out, c);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<std::string> tags;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    tags.push_back(line.substr(line.rfind('\t') + 1));
  }
  CHECK(tags == std::vector<std::string>{"O", "I", "I", "O", "O", "O", "O", "O"});
  CHECK(out.str().find("wine\t4\t8\tI\n") != std::string::npos);
}

TEST_CASE("CoNLL round trip") {
  std::istringstream in(kReview);
  Corpus c = ingest_semeval(in, "en").corpus;
  for (auto& s : testing::templated_corpus("en", 30, 4)) c.sentences.push_back(s);
  std::stringstream buf;
  export_conll(buf, c);
  Corpus back = import_conll(buf);
  CHECK(back.language == "en");
  REQUIRE(back.sentences.size() == c.sentences.size());
  for (std::size_t i = 0; i < c.sentences.size(); ++i) {
    const Sentence& a = c.sentences[i];
    const Sentence& b = back.sentences[i];
    CHECK(a.id == b.id);
    CHECK(a.tokens == b.tokens);
    CHECK(spans_to_tags(a.tokens, a.targets) == spans_to_tags(b.tokens, b.targets));
    check_offsets(b.text, b.tokens);
  }

  std::stringstream empty_out;
  export_conll(empty_out, Corpus{});
  CHECK(empty_out.str().empty());
  CHECK(import_conll(empty_out).sentences.empty());
}

TEST_CASE("CoNLL without id lines gets generated ids") {
  std::istringstream in("a\t0\t1\tO\nb\t2\t3\tI\n\nc\t0\t1\tI\n");
  Corpus c = import_conll(in, "xx");
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[0].id != c.sentences[1].id);
  CHECK(c.sentences[0].targets == std::vector<TargetSpan>{{2, 3, "b"}});
}

TEST_CASE("CoNLL format errors carry line numbers") {
  std::istringstream cols("# id=1\na\t0\t1\n");
  try {
    import_conll(cols);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line == 2);
  }
  std::istringstream tag("# id=1\na\t0\t1\tO\nb\t2\t3\tX\n");
  try {
    import_conll(tag);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line == 3);
  }
  std::istringstream offsets("# id=1\nab\t0\t1\tO\n");
  CHECK_THROWS_AS(import_conll(offsets), FormatError);
}

TEST_CASE("dataset and OOV statistics") {
  CHECK(dataset_stats(Corpus{}) == DatasetStats{0, 0, 0});
  std::istringstream in(kReview);
  Corpus c = ingest_semeval(in, "en").corpus;
  CHECK(dataset_stats(c) == DatasetStats{3, 8 + 4 + 10, 3});

  EmbeddingTable t("en", {"the", "wine"}, Matrix(2, 2));
  OovStats st = oov_stats({c.sentences[0]}, t);
  CHECK(st.tokens == 8);
  CHECK(st.oov == 6);
  CHECK(oov_stats({c.sentences[0]}, t, false).oov == 7);
}

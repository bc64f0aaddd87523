#include "xote/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "xote/error.hpp"
#include "xote/log.hpp"
#include "xote/text.hpp"

namespace xote {
namespace {

namespace pt = boost::property_tree;

std::size_t parse_offset(const std::string& s, const std::string& sentence_id, const char* attr) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError("sentence " + sentence_id + ": bad '" + attr + "' offset '" + s + "'");
  return v;
}

void collect_sentence(const pt::ptree& node, const std::string& language, Corpus& corpus,
                      XmlParseStats& stats) {
  Sentence s;
  s.language = language;
  s.id = node.get<std::string>("<xmlattr>.id", "");
  if (s.id.empty()) s.id = "s" + std::to_string(corpus.sentences.size());
  s.text = node.get<std::string>("text", "");
  s.tokens = tokenize(s.text);
  const std::size_t length = text::length(s.text);

  std::set<std::pair<std::size_t, std::size_t>> seen;
  if (auto opinions = node.get_child_optional("Opinions")) {
    for (const auto& [name, op] : *opinions) {
      if (name != "Opinion") continue;
      const std::string target = op.get<std::string>("<xmlattr>.target", "NULL");
      if (target == "NULL") {
        ++stats.null_targets;
        continue;
      }
      const std::size_t from = parse_offset(op.get<std::string>("<xmlattr>.from", ""), s.id, "from");
      const std::size_t to = parse_offset(op.get<std::string>("<xmlattr>.to", ""), s.id, "to");
      if (from >= to || to > length)
        throw DataError("sentence " + s.id + ": target '" + target + "' offsets [" +
                        std::to_string(from) + "," + std::to_string(to) +
                        ") outside text of length " + std::to_string(length));
      if (!seen.emplace(from, to).second) {
        ++stats.duplicate_targets;
        continue;
      }
      s.targets.push_back({from, to, text::substr(s.text, from, to)});
    }
  }
  std::sort(s.targets.begin(), s.targets.end(), [](const TargetSpan& a, const TargetSpan& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  corpus.sentences.push_back(std::move(s));
}

void walk(const pt::ptree& node, const std::string& language, Corpus& corpus,
          XmlParseStats& stats) {
  for (const auto& [name, child] : node) {
    if (name == "sentence")
      collect_sentence(child, language, corpus, stats);
    else if (name != "<xmlattr>" && name != "<xmlcomment>")
      walk(child, language, corpus, stats);
  }
}

bool overlaps_previous(const std::vector<TargetSpan>& spans, std::size_t i) {
  return i > 0 && spans[i].start < spans[i - 1].end;
}

}  // namespace

std::vector<Token> tokenize(const std::string& input) {
  const std::u32string cps = text::decode_utf8(input);
  std::vector<Token> tokens;
  auto emit = [&](std::size_t b, std::size_t e) {
    tokens.push_back({text::encode_utf8(std::u32string_view(cps).substr(b, e - b)), b, e});
  };
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && text::is_space(cps[i])) ++i;
    if (i == cps.size()) break;
    std::size_t b = i;
    while (i < cps.size() && !text::is_space(cps[i])) ++i;
    std::size_t e = i;
    while (b < e && text::is_punct(cps[b])) {
      emit(b, b + 1);
      ++b;
    }
    std::size_t core_end = e;
    while (core_end > b && text::is_punct(cps[core_end - 1])) --core_end;
    if (core_end > b) emit(b, core_end);
    for (std::size_t p = core_end; p < e; ++p) emit(p, p + 1);
  }
  return tokens;
}

Corpus parse_semeval_xml(std::istream& in, const std::string& language, XmlParseStats* stats) {
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError("malformed XML: " + e.message(), e.line());
  }
  Corpus corpus;
  corpus.language = language;
  XmlParseStats local;
  walk(tree, language, corpus, local);
  std::unordered_set<std::string> ids;
  for (const auto& s : corpus.sentences)
    if (!ids.insert(s.id).second) throw DataError("duplicate sentence id " + s.id);
  if (stats) *stats = local;
  return corpus;
}

Sentence align_spans_to_tokens(const Sentence& sentence, std::size_t* snapped) {
  Sentence out = sentence;
  std::size_t moved = 0;
  for (auto& span : out.targets) {
    std::size_t first = sentence.tokens.size();
    std::size_t last = 0;
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      const Token& tok = sentence.tokens[t];
      if (tok.end > span.start && tok.start < span.end) {
        first = std::min(first, t);
        last = t;
      }
    }
    if (first == sentence.tokens.size())
      throw DataError("sentence " + sentence.id + ": target '" + span.surface + "' covers no token");
    const std::size_t start = sentence.tokens[first].start;
    const std::size_t end = sentence.tokens[last].end;
    if (start != span.start || end != span.end) {
      ++moved;
      const std::string surface = text::substr(sentence.text, start, end);
      log_info("sentence " + sentence.id + ": target '" + span.surface + "' [" +
               std::to_string(span.start) + "," + std::to_string(span.end) + ") snapped to '" +
               surface + "' [" + std::to_string(start) + "," + std::to_string(end) + ")");
      span = {start, end, surface};
    }
  }
  std::sort(out.targets.begin(), out.targets.end(),
            [](const TargetSpan& a, const TargetSpan& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < out.targets.size(); ++i)
    if (overlaps_previous(out.targets, i))
      throw DataError("sentence " + sentence.id + ": targets '" + out.targets[i - 1].surface +
                      "' and '" + out.targets[i].surface + "' overlap");
  if (snapped) *snapped = moved;
  return out;
}

nlohmann::json IngestReport::to_json() const {
  return {
      {"language", language},
      {"sentences", sentences},
      {"tokens", tokens},
      {"targets", targets},
      {"null_targets", null_targets},
      {"duplicate_targets", duplicate_targets},
      {"snapped_targets", snapped_targets},
      {"excluded_sentences", excluded.size()},
      {"excluded_ids", excluded},
      {"oov_tokens", oov_tokens},
      {"embedded_tokens", embedded_tokens},
  };
}

IngestResult ingest_semeval(std::istream& xml, const std::string& language) {
  XmlParseStats stats;
  Corpus parsed = parse_semeval_xml(xml, language, &stats);
  IngestResult result;
  IngestReport& rep = result.report;
  rep.language = language;
  const DatasetStats ds = dataset_stats(parsed);
  rep.sentences = ds.sentences;
  rep.tokens = ds.tokens;
  rep.targets = ds.targets;
  rep.null_targets = stats.null_targets;
  rep.duplicate_targets = stats.duplicate_targets;

  result.corpus.language = parsed.language;
  result.corpus.split = parsed.split;
  for (const Sentence& s : parsed.sentences) {
    try {
      std::size_t moved = 0;
      Sentence repaired = align_spans_to_tokens(s, &moved);
      rep.snapped_targets += moved;
      result.corpus.sentences.push_back(std::move(repaired));
    } catch (const DataError& e) {
      log_warning(std::string("excluding ") + e.what());
      rep.excluded.push_back(s.id);
    }
  }
  return result;
}

Corpus load_corpus_file(const std::string& path, const std::string& language) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file " + path);
  const bool xml = path.size() >= 4 && path.substr(path.size() - 4) == ".xml";
  if (xml) return ingest_semeval(in, language).corpus;
  Corpus c = import_conll(in, language);
  if (c.language.empty()) c.language = language;
  for (auto& s : c.sentences)
    if (s.language.empty()) s.language = c.language;
  return c;
}

void export_conll(std::ostream& out, const Corpus& corpus) {
  if (!corpus.language.empty()) out << "# lang=" << corpus.language << "\n";
  for (const Sentence& s : corpus.sentences) {
    const std::vector<Tag> tags = spans_to_tags(s.tokens, s.targets, s.id);
    out << "# id=" << s.id << "\n";
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const Token& t = s.tokens[i];
      out << t.text << '\t' << t.start << '\t' << t.end << '\t' << tag_char(tags[i]) << '\n';
    }
    out << '\n';
  }
}

Corpus import_conll(std::istream& in, const std::string& language) {
  Corpus corpus;
  corpus.language = language;
  std::string line;
  std::size_t line_no = 0;
  Sentence cur;
  std::vector<Tag> tags;
  bool open = false;

  auto finish = [&]() {
    if (!open) return;
    // Rebuild text with the original gaps as spaces.
    std::string text;
    std::size_t pos = 0;
    for (const Token& t : cur.tokens) {
      text.append(t.start - pos, ' ');
      text += t.text;
      pos = t.end;
    }
    cur.text = std::move(text);
    cur.language = corpus.language;
    cur.targets = tags_to_spans(cur.tokens, tags, &cur.text);
    corpus.sentences.push_back(std::move(cur));
    cur = Sentence{};
    tags.clear();
    open = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      finish();
      continue;
    }
    if (line.rfind("# lang=", 0) == 0) {
      if (corpus.language.empty()) corpus.language = line.substr(7);
      continue;
    }
    if (line.rfind("# id=", 0) == 0) {
      finish();
      cur.id = line.substr(5);
      open = true;
      continue;
    }
    if (line[0] == '#') continue;
    if (!open) {
      cur.id = "s" + std::to_string(corpus.sentences.size());
      open = true;
    }

    std::vector<std::string> cols;
    std::size_t b = 0;
    for (;;) {
      const auto tab = line.find('\t', b);
      cols.push_back(line.substr(b, tab == std::string::npos ? std::string::npos : tab - b));
      if (tab == std::string::npos) break;
      b = tab + 1;
    }
    if (cols.size() != 4)
      throw FormatError("expected 4 tab-separated columns, found " + std::to_string(cols.size()),
                        line_no);
    if (!open) {
      cur.id = "s" + std::to_string(corpus.sentences.size());
      open = true;
    }
    Token tok;
    tok.text = cols[0];
    auto parse = [&](const std::string& s) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw FormatError("bad offset '" + s + "'", line_no);
      return v;
    };
    tok.start = parse(cols[1]);
    tok.end = parse(cols[2]);
    const std::size_t prev_end = cur.tokens.empty() ? 0 : cur.tokens.back().end;
    if (tok.start >= tok.end || tok.start < prev_end ||
        text::length(tok.text) != tok.end - tok.start)
      throw FormatError("inconsistent token offsets", line_no);
    try {
      tags.push_back(parse_tag(cols[3]));
    } catch (const FormatError& e) {
      throw FormatError(e.what(), line_no);
    }
    cur.tokens.push_back(std::move(tok));
  }
  finish();
  std::unordered_set<std::string> ids;
  for (const auto& s : corpus.sentences)
    if (!ids.insert(s.id).second) throw FormatError("duplicate sentence id " + s.id);
  return corpus;
}

DatasetStats dataset_stats(const Corpus& corpus) {
  DatasetStats st;
  st.sentences = corpus.sentences.size();
  for (const auto& s : corpus.sentences) {
    st.tokens += s.tokens.size();
    st.targets += s.targets.size();
  }
  return st;
}

OovStats oov_stats(const std::vector<Sentence>& sentences, const EmbeddingTable& table,
                   bool lowercase_fallback) {
  OovStats st;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens) {
      ++st.tokens;
      if (!table.lookup(t.text, lowercase_fallback).in_vocabulary) ++st.oov;
    }
  return st;
}

}  // namespace xote

#include "xote/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "xote/error.hpp"
#include "xote/log.hpp"
#include "xote/text.hpp"

namespace xote {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > b) fields.push_back(line.substr(b, i - b));
  }
  return fields;
}

bool parse_count(std::string_view s, std::size_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

double parse_real(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw FormatError("bad number '" + std::string(s) + "'", line_no);
  if (!std::isfinite(v)) throw FormatError("non-finite value in embedding file", line_no);
  return v;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::string language, std::vector<std::string> vocab,
                               Matrix vectors)
    : language_(std::move(language)),
      vocab_(std::move(vocab)),
      vectors_(std::move(vectors)),
      zeros_(vectors_.cols(), 0.0) {
  if (vocab_.size() != vectors_.rows())
    throw ConfigError("embedding table: " + std::to_string(vocab_.size()) + " words but " +
                      std::to_string(vectors_.rows()) + " vectors");
  if (!vectors_.all_finite()) throw NumericError("embedding table has non-finite entries");
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], i).second)
      throw ConfigError("embedding table: duplicate word '" + vocab_[i] + "'");
  }
}

std::optional<std::size_t> EmbeddingTable::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable::Lookup EmbeddingTable::lookup(const std::string& token,
                                              bool lowercase_fallback) const {
  if (auto i = find(token)) return {vectors_.row(*i), true};
  if (lowercase_fallback) {
    if (auto i = find(text::to_lower(token))) return {vectors_.row(*i), true};
  }
  return {zeros_, false};
}

EmbeddingTable load_vectors(std::istream& in, const std::string& language, std::size_t cap) {
  std::vector<std::string> vocab;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t duplicates = 0;
  std::string line;
  bool first = true;
  while (vocab.size() < cap && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      std::size_t count = 0, header_dim = 0;
      if (fields.size() == 2 && parse_count(fields[0], count) && parse_count(fields[1], header_dim)) {
        if (header_dim == 0) throw FormatError("header declares dimension 0", line_no);
        dim = header_dim;
        continue;
      }
    }
    if (fields.size() < 2) throw FormatError("word without vector", line_no);
    const std::size_t line_dim = fields.size() - 1;
    if (dim == 0) dim = line_dim;
    if (line_dim != dim)
      throw FormatError("expected " + std::to_string(dim) + " values, found " +
                            std::to_string(line_dim),
                        line_no);
    std::string word(fields[0]);
    if (seen.count(word)) {
      ++duplicates;
      log_warning("embeddings (" + language + "): duplicate word '" + word + "' on line " +
                  std::to_string(line_no) + ", keeping line " + std::to_string(seen[word]));
      continue;
    }
    seen.emplace(word, line_no);
    for (std::size_t k = 1; k < fields.size(); ++k) values.push_back(parse_real(fields[k], line_no));
    vocab.push_back(std::move(word));
  }
  if (dim == 0) throw FormatError("embedding file has no vectors");
  Matrix vectors(vocab.size(), dim);
  std::copy(values.begin(), values.end(), vectors.values().begin());
  return EmbeddingTable(language, std::move(vocab), std::move(vectors));
}

void write_vectors(std::ostream& out, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.vocab()[i];
    for (double v : table.vector(i)) out << ' ' << v;
    out << '\n';
  }
}

void save_table(std::ostream& out, const EmbeddingTable& table) {
  binary::write_magic(out, "XEMB");
  binary::write_u32(out, kEmbeddingCacheVersion);
  binary::write_string(out, table.language());
  binary::write_u32(out, static_cast<std::uint32_t>(table.size()));
  binary::write_u32(out, static_cast<std::uint32_t>(table.dim()));
  for (const auto& w : table.vocab()) binary::write_string(out, w);
  for (double v : table.vectors().values()) binary::write_f32(out, static_cast<float>(v));
  if (!out) throw FormatError("failed writing embedding cache");
}

EmbeddingTable load_table(std::istream& in) {
  binary::expect_magic(in, "XEMB");
  const auto version = binary::read_u32(in, "version");
  if (version != kEmbeddingCacheVersion)
    throw FormatError("unsupported XEMB version " + std::to_string(version));
  std::string language = binary::read_string(in, "language", 64);
  const auto count = binary::read_u32(in, "vocab count");
  const auto dim = binary::read_u32(in, "dim");
  std::vector<std::string> vocab;
  vocab.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) vocab.push_back(binary::read_string(in, "word", 1 << 16));
  Matrix vectors(count, dim);
  for (double& v : vectors.values()) {
    v = binary::read_f32(in, "vectors");
    if (!std::isfinite(v)) throw FormatError("non-finite value in XEMB vectors");
  }
  return EmbeddingTable(std::move(language), std::move(vocab), std::move(vectors));
}

EmbeddingTable load_embeddings_file(const std::string& path, const std::string& language,
                                    std::size_t cap) {
  const bool binary = path.size() >= 5 && path.substr(path.size() - 5) == ".xemb";
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ConfigError("cannot open embeddings file " + path);
  if (!binary) return load_vectors(in, language, cap);
  EmbeddingTable t = load_table(in);
  if (t.language() != language)
    log_warning("embedding cache " + path + " is tagged '" + t.language() + "', used as '" +
                language + "'");
  if (t.size() <= cap && t.language() == language) return t;
  const std::size_t keep = std::min(cap, t.size());
  std::vector<std::string> vocab(t.vocab().begin(), t.vocab().begin() + static_cast<std::ptrdiff_t>(keep));
  Matrix vectors(keep, t.dim());
  std::copy_n(t.vectors().values().begin(), keep * t.dim(), vectors.values().begin());
  return EmbeddingTable(language, std::move(vocab), std::move(vectors));
}

EmbeddingTable apply_projection(const EmbeddingTable& table, const Matrix& w) {
  if (w.rows() != w.cols() || w.rows() != table.dim())
    throw ConfigError("projection is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                      ", table dim is " + std::to_string(table.dim()));
  return EmbeddingTable(table.language(), table.vocab(), matmul(table.vectors(), w));
}

void EmbeddingSet::add(std::shared_ptr<const EmbeddingTable> table) {
  if (!tables_.empty() && table->dim() != dim_)
    throw ConfigError("embedding dim " + std::to_string(table->dim()) + " for '" +
                      table->language() + "' differs from " + std::to_string(dim_));
  dim_ = table->dim();
  tables_[table->language()] = std::move(table);
}

const EmbeddingTable& EmbeddingSet::at(const std::string& language) const {
  auto it = tables_.find(language);
  if (it == tables_.end()) throw ConfigError("no embeddings loaded for language '" + language + "'");
  return *it->second;
}

std::vector<std::string> EmbeddingSet::languages() const {
  std::vector<std::string> out;
  for (const auto& [lang, _] : tables_) out.push_back(lang);
  return out;
}

}  // namespace xote

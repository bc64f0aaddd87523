#include "xote/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "binary_io.hpp"
#include "xote/error.hpp"
#include "xote/log.hpp"

namespace xote {
namespace {

constexpr double kJacobiTol = 1e-15;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Rows of `basis` are orthonormal except those flagged in `missing`; fills the
// missing rows with unit vectors orthogonal to everything else.
void complete_basis(Matrix& basis, const std::vector<bool>& missing) {
  const std::size_t dim = basis.cols();
  std::vector<std::size_t> done;
  for (std::size_t i = 0; i < basis.rows(); ++i)
    if (!missing[i]) done.push_back(i);
  std::size_t candidate = 0;
  for (std::size_t i = 0; i < basis.rows(); ++i) {
    if (!missing[i]) continue;
    bool placed = false;
    while (!placed && candidate < dim) {
      std::vector<double> e(dim, 0.0);
      e[candidate++] = 1.0;
      // Two Gram-Schmidt passes keep orthogonality at machine precision.
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t j : done) {
          const double c = dot(e, basis.row(j));
          for (std::size_t k = 0; k < dim; ++k) e[k] -= c * basis(j, k);
        }
      const double norm = std::sqrt(dot(e, e));
      if (norm < 1e-6) continue;
      for (std::size_t k = 0; k < dim; ++k) basis(i, k) = e[k] / norm;
      done.push_back(i);
      placed = true;
    }
    if (!placed) throw NumericError("svd: could not complete orthonormal basis");
  }
}

}  // namespace

SvdResult svd(const Matrix& m, int max_sweeps) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  if (rows < n)
    throw ConfigError("svd expects rows >= cols, got " + std::to_string(rows) + "x" +
                      std::to_string(n));
  if (!m.all_finite()) throw NumericError("svd: non-finite input");

  // Column j of M is row j of `cols`; rotations act on rows.
  Matrix cols = m.transpose();
  Matrix vt = Matrix::identity(n);  // row j = column j of V

  double residual = 0.0;
  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    residual = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto cp = cols.row(p);
        auto cq = cols.row(q);
        const double alpha = dot(cp, cp);
        const double beta = dot(cq, cq);
        const double gamma = dot(cp, cq);
        if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        residual = std::max(residual, off);
        if (off <= kJacobiTol) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < rows; ++k) {
          const double a = cp[k], b = cq[k];
          cp[k] = c * a - s * b;
          cq[k] = s * a + c * b;
        }
        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double a = vp[k], b = vq[k];
          vp[k] = c * a - s * b;
          vq[k] = s * a + c * b;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "svd: Jacobi sweeps did not converge, residual " << residual;
    throw NumericError(msg.str());
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(cols.row(j), cols.row(j)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const double smax = n ? sigma[order[0]] : 0.0;
  SvdResult out{Matrix(rows, n), std::vector<double>(n), Matrix(n, n)};
  Matrix ut(n, rows);
  std::vector<bool> missing(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.s[j] = sigma[src];
    for (std::size_t k = 0; k < n; ++k) out.v(k, j) = vt(src, k);
    if (sigma[src] <= smax * 1e-13 || sigma[src] == 0.0) {
      missing[j] = true;
      continue;
    }
    for (std::size_t k = 0; k < rows; ++k) ut(j, k) = cols(src, k) / sigma[src];
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_basis(ut, missing);
  out.u = ut.transpose();
  return out;
}

Matrix procrustes_align(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw ConfigError("procrustes_align: X and Y shapes differ");
  if (x.rows() < x.cols())
    log_warning("procrustes_align: " + std::to_string(x.rows()) + " pairs for dimension " +
                std::to_string(x.cols()) + "; the solution is not unique");
  const Matrix cross = matmul_tn(x, y);
  SvdResult dec = svd(cross);
  if (!dec.s.empty() && dec.s.back() <= dec.s.front() * 1e-12)
    log_warning("procrustes_align: cross-covariance is rank deficient");
  return matmul_nt(dec.u, dec.v);
}

std::vector<WordPair> load_dictionary(std::istream& in) {
  std::vector<WordPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto sep = line.find_first_of("\t ");
    if (sep == std::string::npos) throw FormatError("dictionary line needs two words", line_no);
    const auto tgt_begin = line.find_first_not_of("\t ", sep);
    std::string src = line.substr(0, sep);
    std::string tgt = tgt_begin == std::string::npos ? "" : line.substr(tgt_begin);
    while (!tgt.empty() && (tgt.back() == ' ' || tgt.back() == '\t')) tgt.pop_back();
    if (src.empty() || tgt.empty() || tgt.find_first_of("\t ") != std::string::npos)
      throw FormatError("dictionary line needs exactly two words", line_no);
    pairs.push_back({std::move(src), std::move(tgt)});
  }
  return pairs;
}

BilingualDictionary split_dictionary(const std::vector<WordPair>& pairs, double test_fraction,
                                     std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("dictionary test fraction must be in [0, 1)");
  std::vector<std::string> sources;
  std::unordered_set<std::string> seen;
  for (const auto& p : pairs)
    if (seen.insert(p.source).second) sources.push_back(p.source);
  Rng rng(seed);
  rng.shuffle(sources);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(sources.size())));
  std::unordered_set<std::string> test_words(sources.begin(), sources.begin() + static_cast<std::ptrdiff_t>(n_test));

  BilingualDictionary dict;
  std::unordered_set<std::string> test_taken;
  for (const auto& p : pairs) {
    if (!test_words.count(p.source))
      dict.train.push_back(p);
    else if (test_taken.insert(p.source).second)
      dict.test.push_back(p);
  }
  return dict;
}

DictionaryRows dictionary_rows(const EmbeddingTable& source, const EmbeddingTable& target,
                               const std::vector<WordPair>& pairs, bool normalize) {
  if (source.dim() != target.dim()) throw ConfigError("dictionary_rows: tables differ in dim");
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  DictionaryRows out;
  for (const auto& p : pairs) {
    auto s = source.find(p.source);
    auto t = target.find(p.target);
    if (s && t)
      idx.emplace_back(*s, *t);
    else
      ++out.dropped;
  }
  if (out.dropped)
    log_warning("alignment dictionary: " + std::to_string(out.dropped) + " of " +
                std::to_string(pairs.size()) + " pairs dropped (out of vocabulary)");
  const std::size_t d = source.dim();
  out.used = idx.size();
  out.source = Matrix(idx.size(), d);
  out.target = Matrix(idx.size(), d);
  auto copy_row = [&](std::span<const double> from, std::span<double> to) {
    double norm = 1.0;
    if (normalize) {
      norm = std::sqrt(dot(from, from));
      if (norm == 0.0) norm = 1.0;
    }
    for (std::size_t k = 0; k < d; ++k) to[k] = from[k] / norm;
  };
  for (std::size_t r = 0; r < idx.size(); ++r) {
    copy_row(source.vector(idx[r].first), out.source.row(r));
    copy_row(target.vector(idx[r].second), out.target.row(r));
  }
  return out;
}

AlignmentResult align_tables(const EmbeddingTable& source, const EmbeddingTable& target,
                             const std::vector<WordPair>& pairs, bool normalize) {
  DictionaryRows rows = dictionary_rows(source, target, pairs, normalize);
  if (rows.used == 0) throw DataError("alignment dictionary has no usable pairs");
  return {procrustes_align(rows.source, rows.target), rows.used, rows.dropped};
}

PrecisionReport translation_precision(const EmbeddingTable& projected_source,
                                      const EmbeddingTable& target,
                                      const std::vector<WordPair>& pairs, std::size_t k) {
  if (projected_source.dim() != target.dim())
    throw ConfigError("translation_precision: tables differ in dim");
  if (k == 0) throw ConfigError("translation_precision: k must be >= 1");
  std::vector<double> inv_norm(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double n = std::sqrt(dot(target.vector(i), target.vector(i)));
    inv_norm[i] = n > 0.0 ? 1.0 / n : 0.0;
  }
  PrecisionReport rep;
  for (const auto& p : pairs) {
    auto s = projected_source.find(p.source);
    auto t = target.find(p.target);
    if (!s || !t) {
      ++rep.excluded_oov;
      continue;
    }
    ++rep.evaluated;
    auto query = projected_source.vector(*s);
    // Cosine up to the positive query norm, which does not change ranks.
    auto sim = [&](std::size_t i) { return dot(query, target.vector(i)) * inv_norm[i]; };
    const double gold = sim(*t);
    std::size_t ahead = 0;
    for (std::size_t i = 0; i < target.size() && ahead < k; ++i) {
      if (i == *t) continue;
      const double si = sim(i);
      if (si > gold || (si == gold && i < *t)) ++ahead;
    }
    if (ahead < k) ++rep.hits;
  }
  if (rep.excluded_oov)
    log_warning("translation_precision: " + std::to_string(rep.excluded_oov) +
                " pairs excluded (out of vocabulary)");
  rep.precision = rep.evaluated ? static_cast<double>(rep.hits) / static_cast<double>(rep.evaluated) : 0.0;
  return rep;
}

void save_projection(std::ostream& out, const Matrix& w) {
  binary::write_magic(out, "XPRJ");
  binary::write_u32(out, kProjectionVersion);
  binary::write_u32(out, static_cast<std::uint32_t>(w.rows()));
  binary::write_u32(out, static_cast<std::uint32_t>(w.cols()));
  for (double v : w.values()) binary::write_f64(out, v);
  if (!out) throw FormatError("failed writing projection");
}

Matrix load_projection(std::istream& in) {
  binary::expect_magic(in, "XPRJ");
  const auto version = binary::read_u32(in, "version");
  if (version != kProjectionVersion)
    throw FormatError("unsupported XPRJ version " + std::to_string(version));
  const auto rows = binary::read_u32(in, "rows");
  const auto cols = binary::read_u32(in, "cols");
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw FormatError("implausible projection size");
  Matrix w(rows, cols);
  for (double& v : w.values()) v = binary::read_f64(in, "projection values");
  if (!w.all_finite()) throw FormatError("non-finite projection values");
  return w;
}

}  // namespace xote

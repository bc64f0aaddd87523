#include "xote/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xote/error.hpp"

namespace xote {
namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// y += a·x
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four independent partial sums in a fixed order, so the compiler can
// vectorise while results stay reproducible.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConfigError("ragged matrix initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ConfigError("matmul shape mismatch: " + shape(a) + " * " + shape(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s != 0.0) axpy(s, b.row(k).data(), o, b.cols());
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ConfigError("matmul_tn shape mismatch: " + shape(a) + "^T * " + shape(b));
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* br = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(r, i);
      if (s != 0.0) axpy(s, br, out.row(i).data(), b.cols());
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ConfigError("matmul_nt shape mismatch: " + shape(a) + " * " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      out(i, j) = dot(a.row(i).data(), b.row(j).data(), a.cols());
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError("max_abs_diff shape mismatch: " + shape(a) + " vs " + shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double orthogonality_error(const Matrix& a) {
  return max_abs_diff(matmul_tn(a, a), Matrix::identity(a.cols()));
}

ConvKernel::ConvKernel(std::size_t w, std::size_t in, std::size_t out)
    : width(w), in_dim(in), out_dim(out), weights(w * in, out), bias(out, 0.0) {
  if (w % 2 == 0) throw ConfigError("convolution width must be odd, got " + std::to_string(w));
}

Matrix conv1d(const Matrix& x, const ConvKernel& k) {
  if (x.cols() != k.in_dim)
    throw ConfigError("conv1d input dim " + std::to_string(x.cols()) + " != kernel in_dim " +
                      std::to_string(k.in_dim));
  require_finite(x, "conv1d input");
  const std::size_t n = x.rows();
  const auto half = static_cast<std::ptrdiff_t>(k.width / 2);
  Matrix out(n, k.out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    std::copy(k.bias.begin(), k.bias.end(), o);
    for (std::size_t t = 0; t < k.width; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(t) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      const double* xr = x.row(static_cast<std::size_t>(src)).data();
      for (std::size_t c = 0; c < k.in_dim; ++c) {
        if (xr[c] != 0.0) axpy(xr[c], k.weights.row(t * k.in_dim + c).data(), o, k.out_dim);
      }
    }
  }
  return out;
}

Matrix conv1d_backward(const Matrix& x, const ConvKernel& k, const Matrix& grad_out,
                       ConvKernel& grad_k) {
  const std::size_t n = x.rows();
  if (grad_out.rows() != n || grad_out.cols() != k.out_dim)
    throw ConfigError("conv1d_backward grad shape " + shape(grad_out));
  if (grad_k.weights.rows() != k.weights.rows() || grad_k.weights.cols() != k.weights.cols())
    throw ConfigError("conv1d_backward gradient buffer shape mismatch");
  const auto half = static_cast<std::ptrdiff_t>(k.width / 2);
  Matrix grad_x(n, k.in_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = grad_out.row(i).data();
    axpy(1.0, g, grad_k.bias.data(), k.out_dim);
    for (std::size_t t = 0; t < k.width; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(t) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      const double* xr = x.row(static_cast<std::size_t>(src)).data();
      double* gx = grad_x.row(static_cast<std::size_t>(src)).data();
      for (std::size_t c = 0; c < k.in_dim; ++c) {
        const std::size_t wr = t * k.in_dim + c;
        gx[c] += dot(g, k.weights.row(wr).data(), k.out_dim);
        if (xr[c] != 0.0) axpy(xr[c], g, grad_k.weights.row(wr).data(), k.out_dim);
      }
    }
  }
  return grad_x;
}

void relu_inplace(Matrix& z) {
  for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
}

void softmax_rows_inplace(Matrix& z) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

std::vector<double> softmax(std::span<const double> z) {
  Matrix m(1, z.size());
  std::copy(z.begin(), z.end(), m.values().begin());
  softmax_rows_inplace(m);
  return {m.values().begin(), m.values().end()};
}

Matrix dense(const Matrix& x, const Matrix& w, std::span<const double> b, Activation act) {
  if (x.cols() != w.rows() || b.size() != w.cols())
    throw ConfigError("dense shape mismatch: x " + shape(x) + ", W " + shape(w) + ", b " +
                      std::to_string(b.size()));
  Matrix y = matmul(x, w);
  for (std::size_t r = 0; r < y.rows(); ++r) axpy(1.0, b.data(), y.row(r).data(), b.size());
  switch (act) {
    case Activation::kRelu: relu_inplace(y); break;
    case Activation::kSoftmax: softmax_rows_inplace(y); break;
    case Activation::kNone: break;
  }
  return y;
}

Matrix dense_backward(const Matrix& x, const Matrix& w, const Matrix& y,
                      const Matrix& grad_y, Activation act, Matrix& grad_w,
                      std::span<double> grad_b) {
  if (grad_y.rows() != y.rows() || grad_y.cols() != y.cols() || y.cols() != w.cols() ||
      x.cols() != w.rows() || grad_w.rows() != w.rows() || grad_w.cols() != w.cols() ||
      grad_b.size() != w.cols())
    throw ConfigError("dense_backward shape mismatch");
  Matrix gz = grad_y;
  switch (act) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < gz.size(); ++i)
        if (!(y.values()[i] > 0.0)) gz.values()[i] = 0.0;
      break;
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < gz.rows(); ++r) {
        auto g = gz.row(r);
        auto yr = y.row(r);
        const double s = dot(g.data(), yr.data(), g.size());
        for (std::size_t c = 0; c < g.size(); ++c) g[c] = yr[c] * (g[c] - s);
      }
      break;
    case Activation::kNone: break;
  }
  for (std::size_t r = 0; r < gz.rows(); ++r) {
    const double* g = gz.row(r).data();
    axpy(1.0, g, grad_b.data(), grad_b.size());
    const double* xr = x.row(r).data();
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (xr[c] != 0.0) axpy(xr[c], g, grad_w.row(c).data(), w.cols());
  }
  return matmul_nt(gz, w);
}

CrossEntropy cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("cross_entropy: p and q differ in length");
  CrossEntropy ce;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t] == 0.0) continue;
    double qt = q[t];
    if (!(qt >= kLogFloor)) {
      qt = kLogFloor;
      ce.clamped = true;
    }
    ce.loss -= p[t] * std::log(qt);
  }
  return ce;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

double l1_penalty(std::span<const double> w, double lambda, std::span<double> grad) {
  if (lambda < 0.0) throw ConfigError("l1 lambda must be >= 0");
  if (grad.size() != w.size()) throw ConfigError("l1_penalty gradient size mismatch");
  if (lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sum += std::abs(w[i]);
    if (w[i] > 0.0)
      grad[i] += lambda;
    else if (w[i] < 0.0)
      grad[i] -= lambda;
  }
  return lambda * sum;
}

void AdamConfig::validate() const {
  if (!(alpha > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0))
    throw ConfigError("invalid Adam configuration");
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg) {
  if (param.size() != grad.size())
    throw ConfigError("adam_step: parameter and gradient sizes differ");
  if (state.m.empty() && state.v.empty() && state.t == 0) state = AdamState(param.size());
  if (state.m.size() != param.size() || state.v.size() != param.size())
    throw ConfigError("adam_step: state size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= cfg.alpha * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

GradCheckResult gradient_check(const std::function<double()>& loss,
                               std::span<const std::span<double>> params,
                               std::span<const std::span<const double>> analytic,
                               const GradCheckOptions& opts) {
  if (params.size() != analytic.size())
    throw ConfigError("gradient_check: parameter/gradient tensor count mismatch");
  GradCheckResult result;
  Rng rng(opts.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::span<double> p = params[t];
    if (analytic[t].size() != p.size())
      throw ConfigError("gradient_check: tensor " + std::to_string(t) + " size mismatch");
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_tensor != 0 && coords.size() > opts.max_coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(opts.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p[i];
      p[i] = saved + opts.step;
      const double up = loss();
      p[i] = saved - opts.step;
      const double down = loss();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace xote

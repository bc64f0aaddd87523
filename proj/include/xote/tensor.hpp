#pragma once

// Dense double-precision kernels for the tagger: same-padded 1-D convolution,
// dense layers, softmax, cross-entropy, dropout, L1, Adam, and a
// finite-difference gradient checker.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "xote/rng.hpp"

namespace xote {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;
  void fill(double v);

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
// max |aᵀa − I|
double orthogonality_error(const Matrix& a);

// Kernel of a same-padded 1-D convolution. Tap t (0 <= t < width) looks at
// offset t − (width−1)/2 and owns rows [t·in_dim, (t+1)·in_dim) of `weights`.
struct ConvKernel {
  ConvKernel() = default;
  ConvKernel(std::size_t width, std::size_t in_dim, std::size_t out_dim);

  std::size_t width = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Matrix weights;             // (width·in_dim) × out_dim
  std::vector<double> bias;   // out_dim

  friend bool operator==(const ConvKernel&, const ConvKernel&) = default;
};

// out[i] = bias + Σ_j x[i+j]·W_j with zero rows outside [0, n).
Matrix conv1d(const Matrix& x, const ConvKernel& k);

// Accumulates weight/bias gradients into `grad_k` (same shape as `k`) and
// returns the gradient w.r.t. x.
Matrix conv1d_backward(const Matrix& x, const ConvKernel& k, const Matrix& grad_out,
                       ConvKernel& grad_k);

enum class Activation { kNone, kRelu, kSoftmax };

void relu_inplace(Matrix& z);
// Row-wise, max-subtracted.
void softmax_rows_inplace(Matrix& z);
std::vector<double> softmax(std::span<const double> z);

// y = f(x·W + b), one row per position.
Matrix dense(const Matrix& x, const Matrix& w, std::span<const double> b, Activation act);

// Given the layer input `x` and its output `y`, turns dL/dy into dL/dz,
// accumulates into grad_w / grad_b and returns dL/dx. ReLU uses subgradient 0
// at z = 0.
Matrix dense_backward(const Matrix& x, const Matrix& w, const Matrix& y,
                      const Matrix& grad_y, Activation act, Matrix& grad_w,
                      std::span<double> grad_b);

inline constexpr double kLogFloor = 1e-12;

struct CrossEntropy {
  double loss = 0.0;
  bool clamped = false;  // some q^t < kLogFloor with p^t > 0
};

// −Σ_t p^t log q^t, with q floored at kLogFloor.
CrossEntropy cross_entropy(std::span<const double> p, std::span<const double> q);

// Inverted-dropout mask: entries are 0 or 1/(1−rate).
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

// Returns lambda·Σ|w| and adds lambda·sign(w) (sign(0) = 0) into `grad`.
double l1_penalty(std::span<const double> w, double lambda, std::span<double> grad);

struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

// Bias-corrected Adam. Throws NumericError, leaving everything untouched, if
// `grad` has a non-finite entry.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg);

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates per tensor; 0 checks all of them.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

// Central finite differences of `loss` w.r.t. each entry of `params`,
// compared against `analytic` (same shapes). Relative error per coordinate is
// |a − n| / max(|a|, |n|, 1e-8). Parameters are restored afterwards.
GradCheckResult gradient_check(const std::function<double()>& loss,
                               std::span<const std::span<double>> params,
                               std::span<const std::span<const double>> analytic,
                               const GradCheckOptions& opts = {});

}  // namespace xote

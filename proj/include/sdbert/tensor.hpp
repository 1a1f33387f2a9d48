#ifndef SDBERT_TENSOR_HPP_
#define SDBERT_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sdbert/errors.hpp"

namespace sdbert {

// Masked positions in an additive attention mask carry this sentinel instead
// of a literal -inf so that all stored values stay finite; softmax_rows maps
// sentinel positions to an exact 0.
inline constexpr double kMaskSentinel = std::numeric_limits<double>::lowest();

inline bool is_masked_score(double m) { return m <= kMaskSentinel * 0.5; }

// Dense row-major tensor of doubles with an optional gradient slot.
// Invariants: product(shape) == values.size(); grad is empty or values-sized.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> shape_in, std::vector<double> values_in);

  static Tensor zeros(std::vector<int> shape);
  static Tensor filled(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  // 2-D convenience: Tensor::matrix({{1,2},{3,4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::initializer_list<double> values);
  // Entries uniform in [-scale, scale), deterministic per rng state.
  static Tensor random_uniform(std::vector<int> shape, double scale,
                               std::mt19937_64& rng);

  std::size_t numel() const { return values.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;
  double& at(int i, int j);
  double at(int i, int j) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

// Throws NumericError if any element is NaN/Inf; `op` names the operation.
void ensure_finite(const std::vector<double>& values, const char* op);

// ---------------------------------------------------------------------------
// Pure (non-recording) operations. The Tape in tape.hpp exposes the same
// math with gradient rules attached; both run on the kernels in tensor.cpp
// so values agree bit for bit.
// ---------------------------------------------------------------------------

// Standard matrix product, a:[m x k] * b:[k x p] -> [m x p].
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with an optional additive mask of the same shape whose
// entries are 0 (keep) or kMaskSentinel (drop; output exactly 0 there).
// A fully masked row raises NumericError. Stabilized by row-max subtraction.
Tensor softmax_rows(const Tensor& x, const Tensor* additive_mask = nullptr);

// ---------------------------------------------------------------------------
// Raw kernels shared by the pure ops and the tape ops. c is written (nn/nt)
// or accumulated into (_acc variants). All matrices row-major.
// ---------------------------------------------------------------------------
namespace kernels {

// c = a * b, a:[m x k], b:[k x p]
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int p);
// c = a * b^T, a:[m x k], b:[p x k]
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int p);
// c += a * b
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int p);
// c += a * b^T
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int p);
// c += a^T * b, a:[m x k], b:[m x p], c:[k x p]
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int p);

// One softmax row over n entries; mask may be null. Returns false if every
// position is masked (caller decides how to report). Output positions with a
// masked score are exactly 0.
bool softmax_row(const double* scores, const double* mask_row, double* out, int n);

}  // namespace kernels

}  // namespace sdbert

#endif  // SDBERT_TENSOR_HPP_

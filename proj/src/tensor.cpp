#include "sdbert/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>

#include "sdbert/rng.hpp"

namespace sdbert {

namespace {

std::size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
  if (checked_numel(shape) != values.size()) {
    throw DimensionError("tensor value count does not match shape " + shape_str());
  }
  ensure_finite(values, "tensor construction");
}

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = checked_numel(shape);
  Tensor t;
  t.shape = std::move(shape);
  t.values.assign(n, 0.0);
  return t;
}

Tensor Tensor::filled(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.values.begin(), t.values.end(), value);
  ensure_finite(t.values, "tensor fill");
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const int m = static_cast<int>(rows.size());
  const int n = m > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != n) {
      throw DimensionError("matrix literal rows have unequal lengths");
    }
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(values));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, static_cast<int>(values.size())}, std::vector<double>(values));
}

Tensor Tensor::random_uniform(std::vector<int> shape, double scale,
                              std::mt19937_64& rng) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values) v = uniform_symmetric(rng, scale);
  return t;
}

int Tensor::rows() const {
  if (ndim() != 2) throw DimensionError("rows() requires a 2-D tensor, got " + shape_str());
  return shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw DimensionError("cols() requires a 2-D tensor, got " + shape_str());
  return shape[1];
}

double& Tensor::at(int i, int j) {
  return values[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
                static_cast<std::size_t>(j)];
}

double Tensor::at(int i, int j) const {
  return values[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
                static_cast<std::size_t>(j)];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void ensure_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw DimensionError("matmul requires 2-D tensors, got " + a.shape_str() + " and " +
                         b.shape_str());
  }
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner extents disagree: " + a.shape_str() + " vs " +
                         b.shape_str());
  }
  Tensor c = Tensor::zeros({a.rows(), b.cols()});
  kernels::matmul_nn(a.values.data(), b.values.data(), c.values.data(), a.rows(),
                     a.cols(), b.cols());
  ensure_finite(c.values, "matmul");
  return c;
}

Tensor softmax_rows(const Tensor& x, const Tensor* additive_mask) {
  if (x.ndim() != 2) throw DimensionError("softmax_rows requires a 2-D tensor");
  if (additive_mask != nullptr && !x.same_shape(*additive_mask)) {
    throw DimensionError("softmax_rows mask shape " + additive_mask->shape_str() +
                         " does not match input " + x.shape_str());
  }
  const int m = x.rows();
  const int n = x.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const double* row = x.values.data() + static_cast<std::size_t>(i) * n;
    const double* mrow = additive_mask
                             ? additive_mask->values.data() + static_cast<std::size_t>(i) * n
                             : nullptr;
    if (!kernels::softmax_row(row, mrow, out.values.data() + static_cast<std::size_t>(i) * n,
                              n)) {
      throw NumericError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
  }
  return out;
}

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int p) {
  MatMap(c, m, p).noalias() = ConstMatMap(a, m, k) * ConstMatMap(b, k, p);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int p) {
  MatMap(c, m, p).noalias() = ConstMatMap(a, m, k) * ConstMatMap(b, p, k).transpose();
}

void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int p) {
  MatMap(c, m, p).noalias() += ConstMatMap(a, m, k) * ConstMatMap(b, k, p);
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int p) {
  MatMap(c, m, p).noalias() += ConstMatMap(a, m, k) * ConstMatMap(b, p, k).transpose();
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int p) {
  MatMap(c, k, p).noalias() += ConstMatMap(a, m, k).transpose() * ConstMatMap(b, m, p);
}

bool softmax_row(const double* scores, const double* mask_row, double* out, int n) {
  double max_score = kMaskSentinel;
  bool any = false;
  for (int j = 0; j < n; ++j) {
    if (mask_row != nullptr && is_masked_score(mask_row[j])) continue;
    if (!any || scores[j] > max_score) max_score = scores[j];
    any = true;
  }
  if (!any) return false;
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    if (mask_row != nullptr && is_masked_score(mask_row[j])) {
      out[j] = 0.0;
    } else {
      out[j] = std::exp(scores[j] - max_score);
      sum += out[j];
    }
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < n; ++j) out[j] *= inv;
  return true;
}

}  // namespace kernels

}  // namespace sdbert

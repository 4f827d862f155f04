#include "coronet/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "coronet/error.hpp"

namespace coronet {

std::size_t Shape::numel() const noexcept {
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>{});
}

std::string Shape::str() const {
  std::string out = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims_[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor of shape " + shape_.str() + " needs " +
                     std::to_string(shape_.numel()) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0f;
  return t;
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.rank()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for tensor " + shape_.str());
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for tensor " + shape_.str());
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[flat_index(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[flat_index(index)]; }

Tensor Tensor::reshape(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshape(std::move(shape));
}

Tensor Tensor::reshape(Shape shape) && {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor tensor_from_values(Shape shape, std::vector<float> values) {
  return Tensor(std::move(shape), std::move(values));
}

namespace {

constexpr std::size_t kDepthBlock = 256;

// C[m,n] (+)= A[m,k] * B[k,n]; A element (i,p) read through a_at.
template <typename AAt>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, AAt a_at, const float* b, float* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0f);
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t p1 = std::min(k, p0 + kDepthBlock);
    for (std::size_t i = 0; i < m; ++i) {
      float* crow = c + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const float av = a_at(i, p);
        if (av == 0.0f) continue;
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate) {
  std::vector<float> bt;
  if (transpose_b) {
    // B is stored [n,k]; materialise B^T as [k,n].
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    b = bt.data();
  }
  if (transpose_a) {
    gemm_nn(m, n, k, [a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c,
            accumulate);
  } else {
    gemm_nn(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c,
            accumulate);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " + a.shape().str() + " and " +
                     b.shape().str());
  }
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner extents differ: " + a.shape().str() + " x " + b.shape().str());
  }
  Tensor out(Shape{a.dim(0), b.dim(1)});
  gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), out.data(), false);
  return out;
}

Tensor elementwise_zip(const Tensor& a, const Tensor& b, ZipOp op) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise operands differ: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(a.shape());
  auto x = a.values();
  auto y = b.values();
  auto z = out.values();
  if (op == ZipOp::add) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  } else {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  }
  return out;
}

}  // namespace coronet

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace coronet {

/// Ordered list of extents, outermost first. Image batches use N x H x W x C.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::span<const std::size_t> dims() const noexcept { return dims_; }

  /// Product of extents; 1 for rank 0.
  std::size_t numel() const noexcept;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

/// Dense row-major float tensor with value semantics.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}) {}
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  /// Throws ShapeError unless values.size() == shape.numel().
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float value);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }
  static Tensor ones_like(const Tensor& t) { return full(t.shape(), 1.0f); }
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  float& operator[](std::size_t flat) { return data_[flat]; }
  float operator[](std::size_t flat) const { return data_[flat]; }

  /// Bounds-checked multi-index access.
  float& at(std::initializer_list<std::size_t> index);
  float at(std::initializer_list<std::size_t> index) const;

  /// Same data under a new shape with equal element count.
  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<float> data_;
};

Tensor tensor_from_values(Shape shape, std::vector<float> values);

/// [p,q] x [q,r] -> [p,r].
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ZipOp { add, mul };

/// Pointwise add/mul of identically-shaped tensors.
Tensor elementwise_zip(const Tensor& a, const Tensor& b, ZipOp op);

/// Row-major GEMM kernel: C = alpha-free (A' * B') [+ C when accumulate], where
/// A' is A or A^T and B' is B or B^T. The reduction order is fixed so results are
/// bit-reproducible.
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate);

}  // namespace coronet

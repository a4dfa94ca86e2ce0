#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bdc/error.hpp"

namespace bdc {

/// Dense tensor shape, rank 1-4. Activation convention is (C, H, W) per
/// sample; batches are handled as an outer list index.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(const std::vector<std::int64_t>& dims);

  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t numel() const { return numel_; }
  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return !(*this == other); }
  std::string to_string() const;

 private:
  void validate();

  std::vector<std::int64_t> dims_;
  std::int64_t numel_ = 0;
};

/// Dense real-valued tensor, row-major. float in training paths, double in
/// verification paths.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel())
      throw Error(ErrorKind::kShapeMismatch, "data length " + std::to_string(data_.size()) +
                                                 " != shape numel " + std::to_string(shape_.numel()));
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  // (C, H, W) accessor.
  T at(std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>((c * shape_.dim(1) + h) * shape_.dim(2) + w)];
  }
  T& at(std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>((c * shape_.dim(1) + h) * shape_.dim(2) + w)];
  }

  // (A, B, C, D) accessor.
  T at4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
    return data_[static_cast<std::size_t>(
        ((a * shape_.dim(1) + b) * shape_.dim(2) + c) * shape_.dim(3) + d)];
  }
  T& at4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return data_[static_cast<std::size_t>(
        ((a * shape_.dim(1) + b) * shape_.dim(2) + c) * shape_.dim(3) + d)];
  }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using FpTensor = Tensor<float>;
using FpTensor64 = Tensor<double>;

/// Integer label tensor (voxel semantics).
struct IntTensor {
  Shape shape;
  std::vector<std::int32_t> data;

  IntTensor() = default;
  explicit IntTensor(Shape s, std::int32_t fill = 0)
      : shape(std::move(s)), data(static_cast<std::size_t>(shape.numel()), fill) {}
  std::int64_t size() const { return shape.numel(); }
  std::int32_t operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  std::int32_t& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
};

/// Bit-packed {-1,+1} tensor. Bit value 1 <-> +1 and 0 <-> -1, packed in
/// innermost-dimension-major (row-major linear) order, LSB-first within each
/// 64-bit word. Unused tail bits of the last word are zero.
class BitTensor {
 public:
  static constexpr int kWordBits = 64;

  BitTensor() = default;
  explicit BitTensor(Shape shape);

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.numel(); }
  /// Count of meaningful bits in the final word.
  int n_valid_tail() const { return n_valid_tail_; }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  bool get(std::int64_t i) const {
    return (words_[static_cast<std::size_t>(i / kWordBits)] >> (i % kWordBits)) & 1u;
  }
  void set(std::int64_t i, bool v) {
    std::uint64_t mask = 1ull << (i % kWordBits);
    auto& w = words_[static_cast<std::size_t>(i / kWordBits)];
    w = v ? (w | mask) : (w & ~mask);
  }

  bool operator==(const BitTensor& other) const {
    return shape_ == other.shape_ && words_ == other.words_;
  }

 private:
  Shape shape_;
  std::vector<std::uint64_t> words_;
  int n_valid_tail_ = 0;
};

/// Packs a {-1,+1}-valued tensor into bits. Throws NonBinaryValue if any
/// element is not exactly -1 or +1.
template <typename T>
BitTensor bit_pack(const Tensor<T>& t);

/// Inverse of bit_pack.
template <typename T>
Tensor<T> bit_unpack_as(const BitTensor& b);

inline FpTensor bit_unpack(const BitTensor& b) { return bit_unpack_as<float>(b); }

/// Integer dot product of two packed +-1 vectors of length n:
/// 2*popcount(XNOR(a,b) restricted to the n valid bits) - n. Tail bits are
/// masked post-XNOR, so garbage beyond n never leaks in.
std::int64_t popcount_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                          std::int64_t n);

}  // namespace bdc

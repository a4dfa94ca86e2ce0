#include "bdc/tensor.hpp"

#include <bit>
#include <cmath>
#include <sstream>

namespace bdc {

Shape::Shape(std::initializer_list<std::int64_t> dims)
    : dims_(dims.begin(), dims.end()) {
  validate();
}

Shape::Shape(const std::vector<std::int64_t>& dims) : dims_(dims) { validate(); }

void Shape::validate() {
  if (dims_.empty() || dims_.size() > 4)
    throw Error(ErrorKind::kShapeMismatch, "rank must be 1-4, got " + std::to_string(dims_.size()));
  numel_ = 1;
  for (std::int64_t d : dims_) {
    if (d < 1) throw Error(ErrorKind::kShapeMismatch, "dims must be >= 1, got " + std::to_string(d));
    if (__builtin_mul_overflow(numel_, d, &numel_))
      throw Error(ErrorKind::kShapeMismatch, "element count overflows int64");
  }
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ")";
  return os.str();
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonBinaryValue: return "NonBinaryValue";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kChannelMismatch: return "ChannelMismatch";
    case ErrorKind::kGeometryMismatch: return "GeometryMismatch";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kEmptyTensor: return "EmptyTensor";
    case ErrorKind::kNonPositiveAlpha: return "NonPositiveAlpha";
    case ErrorKind::kStackLengthMismatch: return "StackLengthMismatch";
    case ErrorKind::kKernelNotOne: return "KernelNotOne";
    case ErrorKind::kIndivisibleShape: return "IndivisibleShape";
    case ErrorKind::kGridTooSmall: return "GridTooSmall";
    case ErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::kTapeMismatch: return "TapeMismatch";
    case ErrorKind::kChannelPlanMismatch: return "ChannelPlanMismatch";
    case ErrorKind::kInvalidKernel: return "InvalidKernel";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kNumeric: return "NumericError";
  }
  return "UnknownError";
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

BitTensor::BitTensor(Shape shape) : shape_(std::move(shape)) {
  std::int64_t n = shape_.numel();
  words_.assign(static_cast<std::size_t>((n + kWordBits - 1) / kWordBits), 0ull);
  n_valid_tail_ = static_cast<int>(n % kWordBits == 0 ? kWordBits : n % kWordBits);
}

template <typename T>
BitTensor bit_pack(const Tensor<T>& t) {
  BitTensor out(t.shape());
  auto words = out.words();
  const auto data = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i) {
    T v = data[static_cast<std::size_t>(i)];
    if (v == T(1)) {
      words[static_cast<std::size_t>(i / BitTensor::kWordBits)] |=
          1ull << (i % BitTensor::kWordBits);
    } else if (v != T(-1)) {
      throw Error(ErrorKind::kNonBinaryValue,
                  "element " + std::to_string(i) + " = " + std::to_string(static_cast<double>(v)));
    }
  }
  return out;
}

template <typename T>
Tensor<T> bit_unpack_as(const BitTensor& b) {
  Tensor<T> out(b.shape());
  auto data = out.data();
  for (std::int64_t i = 0; i < b.size(); ++i)
    data[static_cast<std::size_t>(i)] = b.get(i) ? T(1) : T(-1);
  return out;
}

std::int64_t popcount_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                          std::int64_t n) {
  if (n < 0) throw Error(ErrorKind::kLengthMismatch, "negative length");
  const std::size_t need = static_cast<std::size_t>((n + 63) / 64);
  if (a.size() < need || b.size() < need)
    throw Error(ErrorKind::kLengthMismatch, "packed operands shorter than n=" + std::to_string(n));
  std::int64_t pop = 0;
  for (std::size_t w = 0; w < need; ++w) {
    std::uint64_t x = ~(a[w] ^ b[w]);  // XNOR flips padding bits to 1; mask after
    if (w + 1 == need) {
      int tail = static_cast<int>(n - static_cast<std::int64_t>(w) * 64);
      if (tail < 64) x &= (1ull << tail) - 1ull;
    }
    pop += std::popcount(x);
  }
  return 2 * pop - n;
}

template class Tensor<float>;
template class Tensor<double>;
template BitTensor bit_pack<float>(const Tensor<float>&);
template BitTensor bit_pack<double>(const Tensor<double>&);
template Tensor<float> bit_unpack_as<float>(const BitTensor&);
template Tensor<double> bit_unpack_as<double>(const BitTensor&);

}  // namespace bdc

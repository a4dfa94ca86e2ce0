#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bdc/autograd.hpp"
#include "bdc/tensor.hpp"

namespace bdc {

/// CRC-32 (IEEE, reflected, poly 0xEDB88320).
std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

/// Container format: magic "BDC1", version u16, record list of
/// (name, dtype in {f32,f64,i32,bits}, rank, dims, little-endian payload),
/// trailing CRC32 of all preceding bytes. Fixed little-endian on any host.
class CheckpointWriter {
 public:
  void add(const std::string& name, const Tensor<float>& t);
  void add(const std::string& name, const Tensor<double>& t);
  void add(const std::string& name, const IntTensor& t);
  void add(const std::string& name, const BitTensor& t);
  void write(const std::string& path) const;
  std::vector<std::uint8_t> bytes() const;

 private:
  std::vector<std::uint8_t> body_;
  std::uint32_t n_records_ = 0;
};

struct CheckpointEntry {
  enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1, kI32 = 2, kBits = 3 };
  Dtype dtype = Dtype::kF32;
  Shape shape;
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<std::int32_t> i32;
  std::vector<std::uint64_t> words;
};

/// Rejects bad magic, truncation, or CRC mismatch with IoError.
class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path);
  const CheckpointEntry* find(const std::string& name) const;
  const std::vector<std::pair<std::string, CheckpointEntry>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, CheckpointEntry>> entries_;
};

/// Saves every store tensor (trainable parameters and BN running stats).
void save_params(const std::string& path, const ParamStore<float>& store);

/// Loads tensors by name into an identically built store; missing names or
/// shape mismatches are IoError.
void load_params(const std::string& path, ParamStore<float>& store);

}  // namespace bdc

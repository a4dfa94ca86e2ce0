#include "bdc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace bdc {

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'B', 'D', 'C', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct ByteCursor {
  const std::uint8_t* p;
  std::size_t left;
  void need(std::size_t n) const {
    if (left < n) throw Error(ErrorKind::kIo, "truncated checkpoint");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

void put_header(std::vector<std::uint8_t>& out, const std::string& name,
                CheckpointEntry::Dtype dtype, const Shape& shape) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(shape.rank()));
  for (int i = 0; i < shape.rank(); ++i) put_u64(out, static_cast<std::uint64_t>(shape.dim(i)));
}

}  // namespace

void CheckpointWriter::add(const std::string& name, const Tensor<float>& t) {
  put_header(body_, name, CheckpointEntry::Dtype::kF32, t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(t[i]);
    put_u32(body_, bits);
  }
  n_records_ += 1;
}

void CheckpointWriter::add(const std::string& name, const Tensor<double>& t) {
  put_header(body_, name, CheckpointEntry::Dtype::kF64, t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) put_u64(body_, std::bit_cast<std::uint64_t>(t[i]));
  n_records_ += 1;
}

void CheckpointWriter::add(const std::string& name, const IntTensor& t) {
  put_header(body_, name, CheckpointEntry::Dtype::kI32, t.shape);
  for (std::int64_t i = 0; i < t.size(); ++i) put_u32(body_, std::bit_cast<std::uint32_t>(t[i]));
  n_records_ += 1;
}

void CheckpointWriter::add(const std::string& name, const BitTensor& t) {
  put_header(body_, name, CheckpointEntry::Dtype::kBits, t.shape());
  for (std::uint64_t w : t.words()) put_u64(body_, w);
  n_records_ += 1;
}

std::vector<std::uint8_t> CheckpointWriter::bytes() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kVersion);
  put_u32(out, n_records_);
  out.insert(out.end(), body_.begin(), body_.end());
  put_u32(out, crc32(out.data(), out.size()));
  return out;
}

void CheckpointWriter::write(const std::string& path) const {
  const std::vector<std::uint8_t> out = bytes();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::kIo, "write failed: " + path);
}

CheckpointReader::CheckpointReader(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (data.size() < 14) throw Error(ErrorKind::kIo, "truncated checkpoint");
  if (std::memcmp(data.data(), kMagic, 4) != 0) throw Error(ErrorKind::kIo, "bad magic");
  const std::uint32_t stored_crc =
      static_cast<std::uint32_t>(data[data.size() - 4]) |
      (static_cast<std::uint32_t>(data[data.size() - 3]) << 8) |
      (static_cast<std::uint32_t>(data[data.size() - 2]) << 16) |
      (static_cast<std::uint32_t>(data[data.size() - 1]) << 24);
  if (crc32(data.data(), data.size() - 4) != stored_crc)
    throw Error(ErrorKind::kIo, "CRC mismatch");

  ByteCursor cur{data.data() + 4, data.size() - 8};
  const std::uint16_t version = cur.u16();
  if (version != kVersion) throw Error(ErrorKind::kIo, "unsupported version");
  const std::uint32_t n_records = cur.u32();
  for (std::uint32_t r = 0; r < n_records; ++r) {
    const std::uint32_t name_len = cur.u32();
    cur.need(name_len);
    std::string name(reinterpret_cast<const char*>(cur.p), name_len);
    cur.p += name_len;
    cur.left -= name_len;
    cur.need(2);
    const auto dtype = static_cast<CheckpointEntry::Dtype>(cur.p[0]);
    const int rank = cur.p[1];
    cur.p += 2;
    cur.left -= 2;
    if (rank < 1 || rank > 4) throw Error(ErrorKind::kIo, "bad rank");
    std::vector<std::int64_t> dims;
    for (int i = 0; i < rank; ++i) dims.push_back(static_cast<std::int64_t>(cur.u64()));
    CheckpointEntry entry;
    entry.dtype = dtype;
    entry.shape = Shape(dims);
    const std::int64_t n = entry.shape.numel();
    switch (dtype) {
      case CheckpointEntry::Dtype::kF32:
        entry.f32.resize(static_cast<std::size_t>(n));
        for (auto& v : entry.f32) v = std::bit_cast<float>(cur.u32());
        break;
      case CheckpointEntry::Dtype::kF64:
        entry.f64.resize(static_cast<std::size_t>(n));
        for (auto& v : entry.f64) v = std::bit_cast<double>(cur.u64());
        break;
      case CheckpointEntry::Dtype::kI32:
        entry.i32.resize(static_cast<std::size_t>(n));
        for (auto& v : entry.i32) v = std::bit_cast<std::int32_t>(cur.u32());
        break;
      case CheckpointEntry::Dtype::kBits:
        entry.words.resize(static_cast<std::size_t>((n + 63) / 64));
        for (auto& v : entry.words) v = cur.u64();
        break;
      default:
        throw Error(ErrorKind::kIo, "bad dtype");
    }
    entries_.emplace_back(std::move(name), std::move(entry));
  }
}

const CheckpointEntry* CheckpointReader::find(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return &e;
  return nullptr;
}

void save_params(const std::string& path, const ParamStore<float>& store) {
  CheckpointWriter writer;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(static_cast<ParamId>(i));
    writer.add(p.name, p.value);
  }
  writer.write(path);
}

void load_params(const std::string& path, ParamStore<float>& store) {
  CheckpointReader reader(path);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(static_cast<ParamId>(i));
    const CheckpointEntry* e = reader.find(p.name);
    if (!e) throw Error(ErrorKind::kIo, "missing record " + p.name);
    if (e->dtype != CheckpointEntry::Dtype::kF32 || e->shape != p.value.shape())
      throw Error(ErrorKind::kIo, "record mismatch for " + p.name);
    for (std::int64_t j = 0; j < p.value.size(); ++j)
      p.value[j] = e->f32[static_cast<std::size_t>(j)];
  }
}

}  // namespace bdc

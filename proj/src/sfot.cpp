#include "sfocda/sfot.hpp"

#include <cstring>
#include <fstream>

namespace sfocda::sfot {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'O', 'T'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kMaxRank = 8;

std::function<void(const std::string&)>& audit_sink() {
  static std::function<void(const std::string&)> sink;
  return sink;
}

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

void put_u32le(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(static_cast<uint8_t>(v));
  buf.push_back(static_cast<uint8_t>(v >> 8));
  buf.push_back(static_cast<uint8_t>(v >> 16));
  buf.push_back(static_cast<uint8_t>(v >> 24));
}

}  // namespace

void set_audit_sink(std::function<void(const std::string&)> sink) {
  audit_sink() = std::move(sink);
}

void clear_audit_sink() { audit_sink() = nullptr; }

Array read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<uint8_t> head(7);
  in.read(reinterpret_cast<char*>(head.data()), 7);
  if (!in) throw DataError(path + ": truncated header");
  if (std::memcmp(head.data(), kMagic, 4) != 0)
    throw DataError(path + ": bad magic");
  if (head[4] != kVersion)
    throw DataError(path + ": unsupported version " + std::to_string(head[4]));
  const uint8_t dt = head[5];
  if (dt != 1 && dt != 2)
    throw DataError(path + ": unknown dtype " + std::to_string(dt));
  const uint8_t rank = head[6];
  if (rank == 0 || rank > kMaxRank)
    throw DataError(path + ": bad rank " + std::to_string(rank));

  Array a;
  a.dtype = static_cast<Dtype>(dt);
  std::vector<uint8_t> dims(rank * 4u);
  in.read(reinterpret_cast<char*>(dims.data()), dims.size());
  if (!in) throw DataError(path + ": truncated dims");
  size_t numel = 1;
  for (uint8_t i = 0; i < rank; ++i) {
    const uint32_t d = read_u32le(dims.data() + i * 4);
    if (d == 0) throw DataError(path + ": zero dimension");
    if (numel > (1u << 30) / d) throw DataError(path + ": tensor too large");
    numel *= d;
    a.dims.push_back(d);
  }

  if (a.dtype == Dtype::f32) {
    a.f32.resize(numel);
    in.read(reinterpret_cast<char*>(a.f32.data()), numel * sizeof(float));
  } else {
    a.u8.resize(numel);
    in.read(reinterpret_cast<char*>(a.u8.data()), numel);
  }
  if (!in) throw DataError(path + ": truncated payload");

  if (audit_sink()) audit_sink()(path);
  return a;
}

void write(const std::string& path, const Array& a) {
  if (a.dims.empty() || a.dims.size() > kMaxRank)
    throw ContractError("sfot::write: rank must be 1..8");
  size_t numel = 1;
  for (uint32_t d : a.dims) {
    if (d == 0) throw ContractError("sfot::write: zero dimension");
    numel *= d;
  }
  const size_t have = a.dtype == Dtype::f32 ? a.f32.size() : a.u8.size();
  if (have != numel)
    throw ContractError("sfot::write: payload size does not match dims");

  std::vector<uint8_t> head;
  head.insert(head.end(), kMagic, kMagic + 4);
  head.push_back(kVersion);
  head.push_back(static_cast<uint8_t>(a.dtype));
  head.push_back(static_cast<uint8_t>(a.dims.size()));
  for (uint32_t d : a.dims) put_u32le(head, d);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(head.data()), head.size());
  if (a.dtype == Dtype::f32)
    out.write(reinterpret_cast<const char*>(a.f32.data()),
              a.f32.size() * sizeof(float));
  else
    out.write(reinterpret_cast<const char*>(a.u8.data()), a.u8.size());
  if (!out) throw DataError("write failed for " + path);
}

void write_f32(const std::string& path, const std::vector<uint32_t>& dims,
               const std::vector<float>& data) {
  Array a;
  a.dtype = Dtype::f32;
  a.dims = dims;
  a.f32 = data;
  write(path, a);
}

void write_u8(const std::string& path, const std::vector<uint32_t>& dims,
              const std::vector<uint8_t>& data) {
  Array a;
  a.dtype = Dtype::u8;
  a.dims = dims;
  a.u8 = data;
  write(path, a);
}

}  // namespace sfocda::sfot

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sfocda/errors.hpp"

namespace sfocda::sfot {

// Binary tensor container: magic "SFOT", version byte, dtype byte
// (1 = float32, 2 = uint8), rank byte, little-endian u32 dims, then the
// row-major payload.

enum class Dtype : uint8_t { f32 = 1, u8 = 2 };

struct Array {
  Dtype dtype = Dtype::f32;
  std::vector<uint32_t> dims;
  std::vector<float> f32;
  std::vector<uint8_t> u8;

  size_t numel() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

Array read(const std::string& path);
void write(const std::string& path, const Array& a);

void write_f32(const std::string& path, const std::vector<uint32_t>& dims,
               const std::vector<float>& data);
void write_u8(const std::string& path, const std::vector<uint32_t>& dims,
              const std::vector<uint8_t>& data);

/// Every successful read() reports its path here. The adaptation pipeline
/// uses this to prove which files a run touched.
void set_audit_sink(std::function<void(const std::string&)> sink);
void clear_audit_sink();

}  // namespace sfocda::sfot

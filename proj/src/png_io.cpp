#include "sfocda/png_io.hpp"

#include <cstring>
#include <fstream>

#include "sfocda/errors.hpp"

#if SFOCDA_HAVE_ZLIB
#include <zlib.h>
#endif

namespace sfocda {

bool png_supported() {
#if SFOCDA_HAVE_ZLIB
  return true;
#else
  return false;
#endif
}

#if SFOCDA_HAVE_ZLIB

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  const size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  put_u32(out, crc);
}

}  // namespace

void write_png_rgb8(const std::filesystem::path& path, int64_t h, int64_t w,
                    const std::vector<uint8_t>& rgb) {
  if (h <= 0 || w <= 0 || rgb.size() != static_cast<size_t>(h * w * 3))
    throw ContractError("write_png_rgb8: buffer does not match dimensions");

  // Raw stream: one filter byte (0 = none) before each row.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h) * (w * 3 + 1));
  for (int64_t y = 0; y < h; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb.data() + y * w * 3;
    raw.insert(raw.end(), row, row + w * 3);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> deflated(bound);
  if (compress2(deflated.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("write_png_rgb8: deflate failed");
  deflated.resize(bound);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(w));
  put_u32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", deflated);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to " + path.string());
}

#else

void write_png_rgb8(const std::filesystem::path& path, int64_t, int64_t,
                    const std::vector<uint8_t>&) {
  throw ContractError("PNG export requires a zlib build; cannot write " +
                      path.string());
}

#endif

}  // namespace sfocda

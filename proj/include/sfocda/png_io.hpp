#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sfocda {

/// True when the library was built with zlib and PNG export works.
bool png_supported();

/// Write an 8-bit RGB PNG. `rgb` is row-major interleaved, 3 bytes per
/// pixel. Throws ContractError when PNG support is compiled out and
/// DataError on I/O failure. Export-only; nothing in the pipeline reads
/// PNGs back.
void write_png_rgb8(const std::filesystem::path& path, int64_t h, int64_t w,
                    const std::vector<uint8_t>& rgb);

}  // namespace sfocda

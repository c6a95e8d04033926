#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace samflow::png {

// Raw decoded PNG. Palette and sub-byte images are expanded to 8 bit; alpha
// is kept. Samples are interleaved, row-major, native integers.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

Raster read(const std::filesystem::path& path);
// channels in {1, 3}, bit_depth in {8, 16}.
void write(const std::filesystem::path& path, const Raster& raster);

}  // namespace samflow::png

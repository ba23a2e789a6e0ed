#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ovavss::data {

struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (PGM) or 3 (PPM)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

// Binary PPM (P6) / PGM (P5), maxval 255.
void write_ppm(const std::string& path, const ImageU8& img);
void write_pgm(const std::string& path, const ImageU8& img);
ImageU8 read_pnm(const std::string& path);

}  // namespace ovavss::data

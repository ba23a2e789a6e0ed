#include "ovavss/synthdata/image_io.hpp"

#include <fstream>
#include <stdexcept>

namespace ovavss::data {

namespace {

void write_pnm(const std::string& path, const ImageU8& img, const char* magic,
               int channels) {
  if (img.channels != channels) {
    throw std::invalid_argument("image channel count " + std::to_string(img.channels) +
                                " does not match format " + magic);
  }
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * channels) {
    throw std::invalid_argument("image buffer size mismatch for " + path);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write image: " + path);
  os << magic << "\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw std::runtime_error("image write failed: " + path);
}

int read_pnm_int(std::istream& is, const std::string& path) {
  // skips whitespace and '#' comments
  int c = is.peek();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      is.get();
    }
    c = is.peek();
  }
  int v;
  if (!(is >> v)) throw std::runtime_error("malformed PNM header in " + path);
  return v;
}

}  // namespace

void write_ppm(const std::string& path, const ImageU8& img) {
  write_pnm(path, img, "P6", 3);
}

void write_pgm(const std::string& path, const ImageU8& img) {
  write_pnm(path, img, "P5", 1);
}

ImageU8 read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  ImageU8 img;
  if (m0 == 'P' && m1 == '6') {
    img.channels = 3;
  } else if (m0 == 'P' && m1 == '5') {
    img.channels = 1;
  } else {
    throw std::runtime_error("unsupported PNM magic in " + path);
  }
  img.width = read_pnm_int(is, path);
  img.height = read_pnm_int(is, path);
  const int maxval = read_pnm_int(is, path);
  if (maxval != 255) throw std::runtime_error("expected maxval 255 in " + path);
  is.get();  // single whitespace after header
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (is.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error("truncated image data in " + path);
  }
  return img;
}

}  // namespace ovavss::data

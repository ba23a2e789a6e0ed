#include "ovavss/numcore/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ovavss::num {

namespace {

constexpr char kMagic[] = "OVAVSS1";
constexpr std::size_t kMagicLen = 7;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

[[noreturn]] void corrupt(const std::string& path, std::streamoff offset,
                          const std::string& what) {
  throw std::runtime_error("corrupt checkpoint " + path + " at offset " +
                           std::to_string(offset) + ": " + what);
}

bool read_u32(std::istream& is, std::uint32_t& v) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4) return false;
  v = static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
      (static_cast<std::uint32_t>(buf[2]) << 16) |
      (static_cast<std::uint32_t>(buf[3]) << 24);
  return true;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, kMagicLen);
  for (const auto& [name, t] : tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    // Little-endian float64; this writes raw doubles (LE host assumed).
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  is.read(magic, kMagicLen);
  if (is.gcount() != static_cast<std::streamsize>(kMagicLen) ||
      std::memcmp(magic, kMagic, kMagicLen) != 0) {
    corrupt(path, 0, "bad magic (expected OVAVSS1)");
  }
  std::map<std::string, Tensor> out;
  for (;;) {
    const std::streamoff rec_off = is.tellg();
    std::uint32_t name_len;
    if (!read_u32(is, name_len)) {
      if (is.eof() && is.gcount() == 0) break;  // clean EOF at record boundary
      corrupt(path, rec_off, "truncated record header");
    }
    if (name_len == 0 || name_len > 4096) corrupt(path, rec_off, "implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (is.gcount() != static_cast<std::streamsize>(name_len))
      corrupt(path, rec_off, "truncated name");
    std::uint32_t rank;
    if (!read_u32(is, rank)) corrupt(path, is.tellg(), "truncated rank");
    if (rank > 8) corrupt(path, is.tellg(), "implausible rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d;
      if (!read_u32(is, d)) corrupt(path, is.tellg(), "truncated dims");
      shape[i] = static_cast<int>(d);
      numel *= d;
    }
    std::vector<double> data(numel);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (is.gcount() != static_cast<std::streamsize>(numel * sizeof(double)))
      corrupt(path, is.tellg(), "truncated payload for " + name);
    out.emplace(name, Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace ovavss::num

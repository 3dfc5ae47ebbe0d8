#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "egt/common.hpp"
#include "egt/tensor.hpp"

namespace egt {

// "EGT1" tensor container. Layout:
//   magic "EGT1"
//   records until EOF, each:
//     u32 LE  name length
//     bytes   name (UTF-8)
//     u32 LE  rank
//     u32 LE  dims[rank]
//     f64 LE  payload (row-major)
// Used for checkpoints and dataset feature blobs.
inline constexpr char kContainerMagic[4] = {'E', 'G', 'T', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double d) {
  const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_u32(std::istream& is, std::uint32_t& out) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  out = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline bool get_f64(std::istream& is, double& out) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  out = std::bit_cast<double>(v);
  return true;
}

}  // namespace detail

class ContainerWriter {
 public:
  explicit ContainerWriter(const std::string& path)
      : os_(path, std::ios::binary) {
    check(os_.good(), "cannot open for writing: ", path);
    os_.write(kContainerMagic, 4);
  }

  // Returns the byte offset of the record that is about to be written.
  std::uint64_t add(const std::string& name, const Tensor& t) {
    const std::uint64_t offset = static_cast<std::uint64_t>(os_.tellp());
    detail::put_u32(os_, static_cast<std::uint32_t>(name.size()));
    os_.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os_, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) detail::put_u32(os_, static_cast<std::uint32_t>(d));
    for (double v : t.data) detail::put_f64(os_, v);
    check(os_.good(), "container write failed: ", name);
    return offset;
  }

  void close() { os_.close(); }

 private:
  std::ofstream os_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  std::uint64_t offset = 0;  // byte offset of the record in the file
};

class ContainerReader {
 public:
  explicit ContainerReader(const std::string& path) : is_(path, std::ios::binary) {
    check(is_.good(), "cannot open for reading: ", path);
    char magic[4];
    check(static_cast<bool>(is_.read(magic, 4)), "container truncated: ", path);
    check(std::memcmp(magic, kContainerMagic, 4) == 0,
          "bad container magic in ", path);
    path_ = path;
  }

  // Reads the next record; returns false on clean EOF, throws on truncation.
  bool next(NamedTensor& out) {
    out.offset = static_cast<std::uint64_t>(is_.tellg());
    std::uint32_t name_len = 0;
    if (!detail::get_u32(is_, name_len)) {
      check(is_.eof(), "container read error: ", path_);
      return false;
    }
    out.name.resize(name_len);
    check(static_cast<bool>(is_.read(out.name.data(), name_len)),
          "container truncated in name: ", path_);
    std::uint32_t rank = 0;
    check(detail::get_u32(is_, rank), "container truncated in rank: ", path_);
    check(rank >= 1 && rank <= 8, "container record has invalid rank: ", rank);
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d = 0;
      check(detail::get_u32(is_, d), "container truncated in dims: ", path_);
      check(d > 0, "container record has zero dim: ", path_);
      shape[i] = d;
      numel *= d;
    }
    out.tensor = Tensor(std::move(shape));
    for (std::size_t i = 0; i < numel; ++i) {
      check(detail::get_f64(is_, out.tensor.data[i]),
            "container truncated in payload of ", out.name, ": ", path_);
    }
    return true;
  }

  std::vector<NamedTensor> read_all() {
    std::vector<NamedTensor> out;
    NamedTensor nt;
    while (next(nt)) out.push_back(std::move(nt));
    return out;
  }

 private:
  std::ifstream is_;
  std::string path_;
};

}  // namespace egt

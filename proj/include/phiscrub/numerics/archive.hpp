#pragma once

// Versioned container for named tensors plus a JSON config block.
//
// Layout (all integers little-endian):
//   bytes 0..7    magic "PHISCRB\0"
//   u32           format version (kArchiveVersion)
//   u64           config length L, followed by L bytes of UTF-8 JSON
//   u32           tensor count
//   per tensor:   u32 name length, name bytes,
//                 u32 rank, rank x u64 dimensions,
//                 product(dims) x IEEE-754 binary64
// JSON objects are written with sorted keys, so identical models produce
// identical files.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phiscrub/error.hpp"
#include "phiscrub/numerics/tensor.hpp"

namespace phiscrub::num {

inline constexpr std::array<char, 8> kArchiveMagic = {'P', 'H', 'I', 'S', 'C', 'R', 'B', '\0'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw DataError("archive: missing tensor '" + name + "'");
  }
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw DataError("archive: unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (std::uint64_t{1} << 34)) throw DataError("archive: implausible length field");
  std::string s(static_cast<std::size_t>(n), '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw DataError("archive: unexpected end of file");
  }
  return s;
}

}  // namespace detail

inline void write_archive(std::ostream& out, const Archive& a) {
  out.write(kArchiveMagic.data(), kArchiveMagic.size());
  detail::put_le<std::uint32_t>(out, kArchiveVersion);
  const std::string config = a.config.dump();
  detail::put_le<std::uint64_t>(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.tensors.size()));
  for (const auto& [name, t] : a.tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    } else {
      for (double v : t.values()) detail::put_le<double>(out, v);
    }
  }
  if (!out) throw Error("archive: write failed");
}

inline Archive read_archive(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kArchiveMagic) {
    throw DataError("archive: bad magic, not a model file");
  }
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kArchiveVersion) {
    throw DataError("archive: unsupported format version " + std::to_string(version));
  }
  Archive a;
  const std::string config = detail::get_bytes(in, detail::get_le<std::uint64_t>(in));
  try {
    a.config = nlohmann::json::parse(config);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("archive: config block is not valid JSON: ") + e.what());
  }
  const auto count = detail::get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = detail::get_bytes(in, detail::get_le<std::uint32_t>(in));
    const auto rank = detail::get_le<std::uint32_t>(in);
    if (rank > 8) throw DataError("archive: implausible tensor rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(detail::get_le<std::uint64_t>(in)));
    Tensor t(shape);
    if constexpr (std::endian::native == std::endian::little) {
      if (t.size() && !in.read(reinterpret_cast<char*>(t.data()),
                               static_cast<std::streamsize>(t.size() * sizeof(double)))) {
        throw DataError("archive: unexpected end of file in tensor '" + name + "'");
      }
    } else {
      for (double& v : t.values()) v = detail::get_le<double>(in);
    }
    a.tensors.emplace_back(std::move(name), std::move(t));
  }
  return a;
}

inline void save_archive(const std::string& path, const Archive& a) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  write_archive(out, a);
}

inline Archive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  return read_archive(in);
}

}  // namespace phiscrub::num

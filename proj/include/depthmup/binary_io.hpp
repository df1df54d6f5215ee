#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "depthmup/errors.hpp"

// Little-endian scalar I/O shared by the checkpoint and table dumps.
namespace depthmup::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  const auto offset = static_cast<std::size_t>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("unexpected end of file", offset);
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, std::size_t max_len = (1u << 26)) {
  const auto offset = static_cast<std::size_t>(is.tellg());
  const auto n = get<std::uint64_t>(is);
  if (n > max_len) throw ParseError("string length out of range", offset);
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw ParseError("truncated string", offset);
  return s;
}

}  // namespace depthmup::binio

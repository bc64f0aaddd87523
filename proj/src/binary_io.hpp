#pragma once

// Little-endian primitives shared by the XEMB, XPRJ and XOTE containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "xote/error.hpp"

namespace xote::binary {

template <typename U>
void write_uint(std::ostream& out, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(U));
}

template <typename U>
U read_uint(std::istream& in, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U)))
    throw FormatError(std::string("truncated file while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_uint(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_uint(out, v); }
inline std::uint32_t read_u32(std::istream& in, const char* what) {
  return read_uint<std::uint32_t>(in, what);
}
inline std::uint64_t read_u64(std::istream& in, const char* what) {
  return read_uint<std::uint64_t>(in, what);
}

inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline float read_f32(std::istream& in, const char* what) {
  return std::bit_cast<float>(read_u32(in, what));
}
inline double read_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(read_u64(in, what));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what,
                               std::uint32_t max_len = 1u << 30) {
  const std::uint32_t n = read_u32(in, what);
  if (n > max_len) throw FormatError(std::string("implausible string length for ") + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError(std::string("truncated file while reading ") + what);
  return s;
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

}  // namespace xote::binary

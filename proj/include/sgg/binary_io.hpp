#pragma once

// Little-endian primitive readers/writers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "sgg/errors.hpp"

namespace sgg::binary {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
    }
    return out;
  }
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_f32(std::ostream& os, float f) {
  write_u32(os, std::bit_cast<std::uint32_t>(f));
}

inline void write_bytes(std::ostream& os, const std::string& s) {
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Reader that raises FormatError(plane, ...) on short reads.
class Reader {
 public:
  Reader(std::istream& is, std::string plane) : is_(is), plane_(std::move(plane)) {}

  std::uint32_t u32() {
    std::uint32_t v = 0;
    read(&v, sizeof(v), "u32");
    return to_little(v);
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    read(&v, sizeof(v), "u64");
    return to_little(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    if (n) read(s.data(), n, "bytes");
    return s;
  }
  void expect_magic(const char* magic) {
    const std::string m = bytes(std::strlen(magic));
    if (m != magic) throw FormatError(plane_, std::string("bad magic, expected ") + magic);
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }
  const std::string& plane() const { return plane_; }

 private:
  void read(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(plane_, std::string("truncated file while reading ") + what);
    }
  }

  std::istream& is_;
  std::string plane_;
};

}  // namespace sgg::binary

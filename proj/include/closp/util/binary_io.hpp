#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "closp/error.hpp"

namespace closp::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume little-endian");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), std::streamsize(n));
    if (!os_) throw Error("write failed");
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size_bytes()); }
  void u64s(std::span<const std::uint64_t> v) { bytes(v.data(), v.size_bytes()); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(is_.gcount()) != n) throw FormatError(what_ + ": truncated file");
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, sizeof v); return v; }
  double f64() { double v; bytes(&v, sizeof v); return v; }
  void f64s(std::span<double> v) { bytes(v.data(), v.size_bytes()); }
  std::vector<std::uint64_t> u64s(std::size_t n) {
    std::vector<std::uint64_t> v(n);
    bytes(v.data(), n * sizeof(std::uint64_t));
    return v;
  }
  std::string str(std::size_t limit = 1u << 20) {
    const auto n = u64();
    if (n > limit) throw FormatError(what_ + ": string length " + std::to_string(n) + " too large");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void magic(std::string_view expected) {
    std::string got(expected.size(), '\0');
    bytes(got.data(), got.size());
    if (got != expected) throw FormatError(what_ + ": bad magic, expected '" + std::string(expected) + "'");
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace closp::io

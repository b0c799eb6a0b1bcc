#pragma once

#include "core/common.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

namespace hdmed::wire {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename T>
void put_le(unsigned char* dst, T v) {
  static_assert(std::is_unsigned_v<T>);
  std::memcpy(dst, &v, sizeof(T));
}

template <typename T>
[[nodiscard]] T get_le(const unsigned char* src) {
  static_assert(std::is_unsigned_v<T>);
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

/// Growing little-endian byte buffer.
struct Writer {
  std::vector<unsigned char> bytes;

  void raw(const void* src, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(src);
    bytes.insert(bytes.end(), p, p + n);
  }
  template <typename T>
  void u(T v) {
    static_assert(std::is_unsigned_v<T>);
    unsigned char buf[sizeof(T)];
    put_le(buf, v);
    raw(buf, sizeof(T));
  }
  void f64(double v) { u(std::bit_cast<std::uint64_t>(v)); }
};

/// Bounds-checked cursor over a byte span; overruns raise FormatError
/// tagged with the format name.
struct Reader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos = 0;
  std::string context;

  Reader(const unsigned char* d, std::size_t n, std::string what)
      : data(d), size(n), context(std::move(what)) {}

  void need(std::size_t n) const {
    if (n > size || pos > size - n) throw FormatError(context + ": truncated");
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data + pos, n);
    pos += n;
  }
  template <typename T>
  [[nodiscard]] T u() {
    need(sizeof(T));
    const T v = get_le<T>(data + pos);
    pos += sizeof(T);
    return v;
  }
  [[nodiscard]] double f64() { return std::bit_cast<double>(u<std::uint64_t>()); }
  [[nodiscard]] bool done() const { return pos == size; }
};

}  // namespace hdmed::wire

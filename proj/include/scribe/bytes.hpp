#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace scribe {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i32 = std::int32_t;
using i64 = std::int64_t;

using Bytes = std::vector<u8>;

// Little-endian accessors. Callers bounds-check.
template <typename T> T load_le(const u8 *p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T> void store_le(u8 *p, T v) { std::memcpy(p, &v, sizeof(T)); }

template <typename T> void append_le(Bytes &out, T v) {
  size_t n = out.size();
  out.resize(n + sizeof(T));
  store_le(out.data() + n, v);
}

inline u64 align_up(u64 v, u64 align) {
  if (align <= 1)
    return v;
  return (v + align - 1) / align * align;
}

inline bool is_pow2_or_zero(u64 v) { return (v & (v - 1)) == 0; }

std::string hex(u64 v);
u64 parse_hex(const std::string &s);

Bytes read_file(const std::string &path);
void write_file(const std::string &path, std::span<const u8> data);
void write_text_file(const std::string &path, const std::string &text);
std::string read_text_file(const std::string &path);

// Write to a sibling temp file and rename over the destination.
void write_file_atomic(const std::string &path, std::span<const u8> data);

} // namespace scribe

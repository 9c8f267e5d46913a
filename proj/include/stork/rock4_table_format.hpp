#pragma once

// Layout shared by the table generator and the loader.

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <vector>

namespace stork::rock4_table_format {

inline constexpr char kVersion[] = "rock4-table/1";

/// Every degree 5..40, then progressively sparser up to 152.
inline std::vector<int> supported_degrees() {
  std::vector<int> d;
  for (int s = 5; s <= 40; ++s) d.push_back(s);
  for (int s = 42; s <= 60; s += 2) d.push_back(s);
  for (int s = 64; s <= 100; s += 4) d.push_back(s);
  for (int s = 106; s <= 148; s += 6) d.push_back(s);
  d.push_back(152);
  return d;
}

/// FNV-1a over the bit patterns of all values, array by array.
inline std::uint64_t checksum(std::initializer_list<const std::vector<double>*> arrays) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* a : arrays) {
    for (double v : *a) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace stork::rock4_table_format

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "deepest/types.hpp"

namespace deepest {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;

// 64-bit FNV-1a, chainable through `h`.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t checksum(std::span<const double> values) {
  return fnv1a(values.data(), values.size_bytes());
}

inline std::uint64_t checksum(const Vector& v) {
  return fnv1a(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

}  // namespace deepest

#pragma once

#include <cstdint>
#include <cstring>

#include <Eigen/Core>

namespace progslam {

// FNV-1a over raw bytes. Used for the frozen-field and gauge contracts,
// where "unchanged" means bit-identical.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t hash_vector(const Eigen::VectorXd& v) {
  return fnv1a(v.data(), sizeof(double) * static_cast<size_t>(v.size()));
}

}  // namespace progslam

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace vcaug {

// 64-bit FNV-1a. Stable across platforms; used for content hashes in the
// artifact index and for seed derivation.
class Fnv1a {
 public:
  void Update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void Update(const void* data, size_t n) {
    Update(std::string_view(static_cast<const char*>(data), n));
  }
  uint64_t Digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline uint64_t HashBytes(std::string_view bytes) {
  Fnv1a h;
  h.Update(bytes);
  return h.Digest();
}

inline std::string HexDigest(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// SplitMix64 finalizer.
inline uint64_t MixSeed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-stage seed: MixSeed(root ^ FNV-1a(label)). Every random consumer
// derives its seed from the root this way so that stages are independent
// of execution order.
inline uint64_t DeriveSeed(uint64_t root, std::string_view label) {
  return MixSeed(root ^ HashBytes(label));
}

}  // namespace vcaug

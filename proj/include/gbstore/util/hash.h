#ifndef GBSTORE_UTIL_HASH_H_
#define GBSTORE_UTIL_HASH_H_

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace gbstore {

// 64-bit non-cryptographic hash over a sequence of byte strings. Parts are
// separated by a 0xff byte so ("ab","c") and ("a","bc") hash differently.
// FNV-1a accumulation followed by the murmur3 fmix64 avalanche step.
inline uint64_t hash64(std::initializer_list<std::string_view> parts) {
  uint64_t h = 0xcbf29ce484222325ULL;
  bool first = true;
  for (std::string_view part : parts) {
    if (!first) {
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    }
    first = false;
    for (unsigned char c : part) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace gbstore

#endif  // GBSTORE_UTIL_HASH_H_

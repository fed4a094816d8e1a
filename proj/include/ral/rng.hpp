// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace ral {

// 64-bit FNV-1a.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t hash = kFnvOffset) {
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= kFnvPrime;
  }
  return hash;
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = kFnvOffset) {
  return fnv1a(std::span<const unsigned char>(
                   reinterpret_cast<const unsigned char*>(text.data()), text.size()),
               hash);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the named substream ("data", "init", "proxy", "noise", ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  return splitmix64(seed ^ fnv1a(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream) {
  return std::mt19937_64(derive_seed(seed, stream));
}

}  // namespace ral

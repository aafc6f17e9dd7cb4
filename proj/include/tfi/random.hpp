// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_RANDOM_HPP_
#define TFI_RANDOM_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace tfi {

using Rng = std::mt19937_64;

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t HashTag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent stream seed from a master seed, a purpose tag and
// a list of integer coordinates (client id, round, ...). Streams keyed this
// way do not depend on the order in which they are requested.
inline std::uint64_t DeriveSeed(std::uint64_t master, std::string_view tag,
                                std::initializer_list<std::uint64_t> coords = {}) {
  std::uint64_t h = SplitMix64(master ^ SplitMix64(HashTag(tag)));
  for (std::uint64_t c : coords) h = SplitMix64(h ^ SplitMix64(c + 0x51ed2701ULL));
  return h;
}

inline Rng MakeRng(std::uint64_t master, std::string_view tag,
                   std::initializer_list<std::uint64_t> coords = {}) {
  return Rng(DeriveSeed(master, tag, coords));
}

}  // namespace tfi

#endif  // TFI_RANDOM_HPP_

// Copyright 2026 The qsurf Authors
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

#ifndef QSURF_RNG_HPP
#define QSURF_RNG_HPP

#include <cstdint>
#include <random>

namespace qsurf {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based stream splitting: derives an independent generator for
// (seed, counter) so shots can be simulated in parallel and still be
// reproducible regardless of scheduling.
inline std::mt19937_64 split_rng(uint64_t seed, uint64_t counter) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(counter * 0xd1342543de82ef95ULL + 1)));
}

}  // namespace qsurf

#endif

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace gaitcnn {

using Rng = std::mt19937_64;

/// Deterministic generator for a run identified by a base seed and a path of
/// sub-identifiers (fold, member, patient, ...).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace gaitcnn

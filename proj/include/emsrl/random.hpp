#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace emsrl {

using Rng = std::mt19937_64;

// Derives an independent generator from a master seed and a list of stream
// identifiers (worker id, iteration, ...). Same inputs give the same stream.
inline Rng make_rng(std::uint64_t master_seed,
                    std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master_seed);
  for (std::uint64_t s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace emsrl

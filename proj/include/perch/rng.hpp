#pragma once

// Independent random streams keyed by (seed, id...). Streams with different
// keys are decorrelated through std::seed_seq, so results never depend on the
// order in which streams are consumed.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace perch {

inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * ids.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (std::uint64_t id : ids) push(id);
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

}  // namespace perch

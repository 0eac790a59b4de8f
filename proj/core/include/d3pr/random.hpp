#pragma once

#include <cstdint>
#include <random>

namespace d3pr {

/// Engine used everywhere randomness is consumed. Always passed explicitly.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace d3pr

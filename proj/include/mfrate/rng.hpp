#pragma once

#include <cstdint>
#include <random>

namespace mfrate {

// Platform-independent uniform draw in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform_symmetric(std::mt19937_64& rng) { return 2.0 * uniform01(rng) - 1.0; }

}  // namespace mfrate

#pragma once

#include <string>

#include "mile/ensemble.hpp"

namespace mile {

// Binary sample container: magic "MILE", u32 format version, then K, S, d,
// thinning and base seed as little-endian u64, then K*S*d little-endian f64
// values in (chain, sample, parameter) order, then the chain reports as a
// structured text block. Round-trips bit-exactly.

inline constexpr std::uint32_t kSampleFormatVersion = 1;

void save_samples(const std::string& path, const PosteriorSamples& samples);
PosteriorSamples load_samples(const std::string& path);

}  // namespace mile

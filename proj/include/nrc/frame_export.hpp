#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nrc/grid.hpp"

namespace nrc {

// Channel selections mapped to (R, G, B) in P6 output.
inline constexpr std::array<std::size_t, 3> kChemRgb{chem::kF, chem::kV, chem::kPH};
inline constexpr std::array<std::size_t, 3> kQdRgb{0, 1, 2};  // alpha dropped

// Binary P6 image, 8 bits per sample, value v -> floor(255 v + 0.5).
std::vector<std::uint8_t> encode_ppm(const Grid& grid, std::array<std::size_t, 3> channels);

// Lossless dump: row-major, channel-interleaved little-endian f64, no header.
std::vector<std::uint8_t> encode_raw_f64(const Grid& grid);
Grid decode_raw_f64(const std::vector<std::uint8_t>& bytes, std::size_t width,
                    std::size_t height);

// `<prefix>_<generation:06d>.ppm`
std::string frame_filename(const std::string& prefix, std::uint64_t generation);

}  // namespace nrc

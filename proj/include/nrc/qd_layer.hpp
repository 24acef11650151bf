#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "nrc/grid.hpp"

namespace nrc::qd {

// Quantum-dot channels. Each responds to one electrochemical quantity.
inline constexpr std::size_t kRed = 0;    // F
inline constexpr std::size_t kGreen = 1;  // V
inline constexpr std::size_t kBlue = 2;   // Mz+
inline constexpr std::size_t kAlpha = 3;  // pH

// QD channel c is excited by chemistry channel kChemSource[c].
inline constexpr std::array<std::size_t, 4> kChemSource{chem::kF, chem::kV, chem::kMz,
                                                        chem::kPH};

struct QdConfig {
  double retention = 0.9;      // lambda, in [0,1)
  double chem_gain = 0.1;      // >= 0
  double neighbor_gain = 0.05; // >= 0
  Neighborhood neighborhood = Neighborhood::kVonNeumann4;

  void validate() const;
};

// Leaky, saturating excitation:
//   q'_c = clamp(lambda q_c + k_chem chem_src(c) + k_nbr mean_{k in N} q^k_c, 0, 1)
Grid qd_excite(const Grid& qd, const Grid& chem, const QdConfig& cfg);

enum class InputChannel { kRed, kGreen, kBlue, kAlpha, kLuminanceMean };

InputChannel parse_input_channel(const std::string& text);

// Row-major flattening of one channel (or the per-cell mean of all four).
Eigen::VectorXd qd_to_input(const Grid& qd, InputChannel channel);

}  // namespace nrc::qd

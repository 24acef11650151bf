#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "nrc/error.hpp"
#include "nrc/grid.hpp"

namespace nrc::ca {

enum class InitMode {
  kRandom,         // chaos in (0.05, 0.95), chemistry uniform in [0,1]
  kSeededFeature,  // chaos random; F = 1 at `feature_cells`, everything else 0
};

struct CaConfig {
  double r = 4.0;
  double a = 0.001;
  std::array<double, 4> thresholds{0.5, 0.5, 0.5, 0.5};
  Neighborhood neighborhood = Neighborhood::kVonNeumann4;
  std::uint64_t seed = 0;
  std::size_t width = 28;
  std::size_t height = 28;
  InitMode init = InitMode::kRandom;
  std::vector<std::pair<std::size_t, std::size_t>> feature_cells;  // (x, y)

  // Throws UsageError on any out-of-range parameter.
  void validate() const;
};

struct CaState {
  Grid chaos;
  Grid chem;

  friend bool operator==(const CaState&, const CaState&) = default;
};

// One synchronous tick of the coupled logistic map, applied per channel:
//   x_i <- a R x_i (1 - x_i) + (1 - a) R x_{i+1} (1 - x_{i+1})
// where x_{i+1} is the right-hand neighbour (toroidal).
Grid logistic_step(const Grid& field, double r, double a);

// One synchronous tick of the electrochemical layer. With m the neighbourhood
// mean of cell i and p the chaos cell at the same position:
//   V  <- m.F   if p0 > t0
//   pH <- m.V   if p1 > t1
//   Mz <- m.pH  if p2 > t2
//   F  <- m.Mz  if p3 > t3 and m.Mz > 0
Grid electrochem_step(const Grid& chem, const Grid& chaos, const CaConfig& cfg);

// Same update, visiting cells in `visit_order` (a permutation of all cell
// indices). The result does not depend on the order.
Grid electrochem_step(const Grid& chem, const Grid& chaos, const CaConfig& cfg,
                      std::span<const std::size_t> visit_order);

CaState init_ca(const CaConfig& cfg);

// Receives generation 0 and then every new generation.
using FrameSink = std::function<void(const CaState&)>;

class FrameSinkError : public DataError {
 public:
  FrameSinkError(std::uint64_t generation, const std::string& what)
      : DataError("frame sink failed at generation " + std::to_string(generation) + ": " +
                  what),
        generation_(generation) {}
  std::uint64_t generation() const noexcept { return generation_; }

 private:
  std::uint64_t generation_;
};

// Advances the chaos layer then the electrochemical layer `steps` times.
CaState run_ca(CaState state, const CaConfig& cfg, std::uint64_t steps,
               const FrameSink& sink = {});
CaState run_ca(const CaConfig& cfg, std::uint64_t steps, const FrameSink& sink = {});

}  // namespace nrc::ca

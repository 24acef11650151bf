#include "nrc/ca_substrate.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "nrc/rng.hpp"

namespace nrc::ca {

void CaConfig::validate() const {
  if (!(r > 0.0 && r <= 4.0)) {
    throw UsageError("ca: R must lie in (0, 4], got " + std::to_string(r));
  }
  if (!(a >= 0.0 && a <= 1.0)) {
    throw UsageError("ca: coupling a must lie in [0, 1], got " + std::to_string(a));
  }
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw UsageError("ca: thresholds must lie in [0, 1], got " + std::to_string(t));
    }
  }
  if (width == 0 || height == 0) throw UsageError("ca: grid dimensions must be positive");
  for (const auto& [x, y] : feature_cells) {
    if (x >= width || y >= height) {
      throw UsageError("ca: feature cell (" + std::to_string(x) + ", " + std::to_string(y) +
                       ") outside the grid");
    }
  }
}

Grid logistic_step(const Grid& field, double r, double a) {
  if (!(r > 0.0 && r <= 4.0)) {
    throw UsageError("logistic_step: R must lie in (0, 4], got " + std::to_string(r));
  }
  if (!(a >= 0.0 && a <= 1.0)) {
    throw UsageError("logistic_step: a must lie in [0, 1], got " + std::to_string(a));
  }
  Grid out = field.next_generation();
  const std::size_t w = field.width();
  for (std::size_t y = 0; y < field.height(); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Cell4& self = field.at(x, y);
      const Cell4& right = field.at((x + 1) % w, y);
      Cell4& dst = out.at(x, y);
      for (std::size_t c = 0; c < 4; ++c) {
        const double v = a * r * self[c] * (1.0 - self[c]) +
                         (1.0 - a) * r * right[c] * (1.0 - right[c]);
        dst[c] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

namespace {

void check_layers(const Grid& chem, const Grid& chaos) {
  if (!chem.same_shape(chaos)) {
    throw DataError("electrochem_step: chemistry grid is " + std::to_string(chem.width()) +
                    "x" + std::to_string(chem.height()) + " but chaos grid is " +
                    std::to_string(chaos.width()) + "x" + std::to_string(chaos.height()));
  }
}

Cell4 gated_update(const Grid& chem, const Grid& chaos, const CaConfig& cfg, std::size_t i) {
  const auto idx = chem.neighbors(i, cfg.neighborhood);
  std::vector<Cell4> nbrs;
  nbrs.reserve(idx.size());
  for (std::size_t k : idx) nbrs.push_back(chem[k]);
  const Cell4 mean = neighbor_average(chem[i], nbrs);
  const Cell4& p = chaos[i];
  const auto& theta = cfg.thresholds;

  Cell4 out = chem[i];
  if (p[0] > theta[0]) out[chem::kV] = mean[chem::kF];
  if (p[1] > theta[1]) out[chem::kPH] = mean[chem::kV];
  if (p[2] > theta[2]) out[chem::kMz] = mean[chem::kPH];
  if (p[3] > theta[3] && mean[chem::kMz] > 0.0) out[chem::kF] = mean[chem::kMz];
  return out;
}

}  // namespace

Grid electrochem_step(const Grid& chem, const Grid& chaos, const CaConfig& cfg,
                      std::span<const std::size_t> visit_order) {
  check_layers(chem, chaos);
  if (visit_order.size() != chem.size()) {
    throw UsageError("electrochem_step: visit order must cover every cell");
  }
  Grid out = chem.next_generation();
  for (std::size_t i : visit_order) {
    if (i >= chem.size()) throw UsageError("electrochem_step: visit index out of range");
    out[i] = gated_update(chem, chaos, cfg, i);
  }
  return out;
}

Grid electrochem_step(const Grid& chem, const Grid& chaos, const CaConfig& cfg) {
  std::vector<std::size_t> order(chem.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return electrochem_step(chem, chaos, cfg, order);
}

CaState init_ca(const CaConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> chaos_dist(0.05, 0.95);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CaState s{Grid(cfg.width, cfg.height), Grid(cfg.width, cfg.height)};
  for (std::size_t i = 0; i < s.chaos.size(); ++i) {
    for (double& v : s.chaos[i]) v = chaos_dist(rng);
  }
  if (cfg.init == InitMode::kRandom) {
    for (std::size_t i = 0; i < s.chem.size(); ++i) {
      for (double& v : s.chem[i]) v = unit(rng);
    }
  } else {
    for (const auto& [x, y] : cfg.feature_cells) s.chem.at(x, y)[chem::kF] = 1.0;
  }
  return s;
}

CaState run_ca(CaState state, const CaConfig& cfg, std::uint64_t steps, const FrameSink& sink) {
  cfg.validate();
  if (!state.chem.same_shape(state.chaos)) {
    throw DataError("run_ca: chaos and chemistry layers differ in shape");
  }
  auto emit = [&](const CaState& s) {
    if (!sink) return;
    try {
      sink(s);
    } catch (const std::exception& e) {
      throw FrameSinkError(s.chem.generation(), e.what());
    }
  };
  emit(state);
  for (std::uint64_t t = 0; t < steps; ++t) {
    state.chaos = logistic_step(state.chaos, cfg.r, cfg.a);
    state.chem = electrochem_step(state.chem, state.chaos, cfg);
    emit(state);
  }
  return state;
}

CaState run_ca(const CaConfig& cfg, std::uint64_t steps, const FrameSink& sink) {
  return run_ca(init_ca(cfg), cfg, steps, sink);
}

}  // namespace nrc::ca

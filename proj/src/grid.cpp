#include "nrc/grid.hpp"

#include <algorithm>

#include "nrc/error.hpp"

namespace nrc {

std::string to_string(Neighborhood n) {
  return n == Neighborhood::kVonNeumann4 ? "von-neumann-4" : "moore-8";
}

Neighborhood parse_neighborhood(const std::string& text) {
  if (text == "von-neumann-4") return Neighborhood::kVonNeumann4;
  if (text == "moore-8") return Neighborhood::kMoore8;
  throw UsageError("unknown neighborhood '" + text + "' (valid: von-neumann-4, moore-8)");
}

Grid::Grid(std::size_t width, std::size_t height, Cell4 fill)
    : width_(width), height_(height), cells_(width * height, fill) {
  if (width == 0 || height == 0) throw UsageError("grid dimensions must be positive");
}

Grid Grid::next_generation() const {
  Grid out = *this;
  ++out.generation_;
  return out;
}

std::vector<std::size_t> Grid::neighbors(std::size_t i, Neighborhood n) const {
  const std::size_t x = i % width_;
  const std::size_t y = i / width_;
  auto wrap = [](std::size_t v, std::ptrdiff_t d, std::size_t m) {
    return static_cast<std::size_t>((static_cast<std::ptrdiff_t>(v) + d +
                                     static_cast<std::ptrdiff_t>(m)) %
                                    static_cast<std::ptrdiff_t>(m));
  };
  std::vector<std::size_t> out;
  out.reserve(8);
  for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
    for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      if (n == Neighborhood::kVonNeumann4 && dx != 0 && dy != 0) continue;
      out.push_back(wrap(y, dy, height_) * width_ + wrap(x, dx, width_));
    }
  }
  return out;
}

bool Grid::in_unit_range() const {
  return std::all_of(cells_.begin(), cells_.end(), [](const Cell4& c) {
    return std::all_of(c.begin(), c.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  });
}

Cell4 neighbor_average(const Cell4& cell, const std::vector<Cell4>& neighbors) {
  Cell4 out{};
  const double count = static_cast<double>(1 + neighbors.size());
  for (std::size_t c = 0; c < 4; ++c) {
    double sum = cell[c];
    double lo = cell[c];
    double hi = cell[c];
    for (const Cell4& k : neighbors) {
      sum += k[c];
      lo = std::min(lo, k[c]);
      hi = std::max(hi, k[c]);
    }
    // The exact mean lies in [lo, hi]; clamping only strips rounding error.
    out[c] = std::clamp(sum / count, lo, hi);
  }
  return out;
}

}  // namespace nrc

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nrc {

// Four concentrations or intensities, each in [0,1]. Used for the chaos
// layer, the electrochemical layer (F, V, pH, Mz+) and the quantum-dot layer
// (r, g, b, alpha).
using Cell4 = std::array<double, 4>;

namespace chem {
inline constexpr std::size_t kF = 0;
inline constexpr std::size_t kV = 1;
inline constexpr std::size_t kPH = 2;
inline constexpr std::size_t kMz = 3;
}  // namespace chem

enum class Neighborhood { kVonNeumann4, kMoore8 };

std::string to_string(Neighborhood n);
Neighborhood parse_neighborhood(const std::string& text);

// Toroidal width x height field of Cell4, stored row-major.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t width, std::size_t height, Cell4 fill = {0, 0, 0, 0});

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return cells_.size(); }
  std::uint64_t generation() const noexcept { return generation_; }

  Cell4& at(std::size_t x, std::size_t y) { return cells_[y * width_ + x]; }
  const Cell4& at(std::size_t x, std::size_t y) const { return cells_[y * width_ + x]; }
  Cell4& operator[](std::size_t i) { return cells_[i]; }
  const Cell4& operator[](std::size_t i) const { return cells_[i]; }

  const std::vector<Cell4>& cells() const& noexcept { return cells_; }
  std::vector<Cell4> cells() && noexcept { return std::move(cells_); }

  bool same_shape(const Grid& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  // Copy of this grid with the generation counter advanced by one; the
  // starting point of every synchronous update.
  Grid next_generation() const;

  // Linear indices of the toroidal neighbours of cell `i`.
  std::vector<std::size_t> neighbors(std::size_t i, Neighborhood n) const;

  // True when every channel of every cell lies in [0,1].
  bool in_unit_range() const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Cell4> cells_;
  std::uint64_t generation_ = 0;
};

// Componentwise mean of `cell` and its neighbours: (a + sum a_k) / (1 + |N|).
Cell4 neighbor_average(const Cell4& cell, const std::vector<Cell4>& neighbors);

}  // namespace nrc

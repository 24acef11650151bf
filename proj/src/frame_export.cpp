#include "nrc/frame_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nrc/binary_io.hpp"
#include "nrc/error.hpp"

namespace nrc {

std::vector<std::uint8_t> encode_ppm(const Grid& grid, std::array<std::size_t, 3> channels) {
  const std::string header = "P6\n" + std::to_string(grid.width()) + " " +
                             std::to_string(grid.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + grid.size() * 3);
  for (const Cell4& cell : grid.cells()) {
    for (std::size_t c : channels) {
      const double scaled = std::floor(cell[c] * 255.0 + 0.5);
      out.push_back(static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0)));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_raw_f64(const Grid& grid) {
  io::ByteWriter w;
  for (const Cell4& cell : grid.cells()) {
    for (double v : cell) w.put_f64(v);
  }
  return w.take();
}

Grid decode_raw_f64(const std::vector<std::uint8_t>& bytes, std::size_t width,
                    std::size_t height) {
  Grid g(width, height);
  io::ByteReader r(bytes, "raw f64 dump");
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (double& v : g[i]) v = r.f64();
  }
  r.expect_end();
  return g;
}

std::string frame_filename(const std::string& prefix, std::uint64_t generation) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%06llu.ppm", static_cast<unsigned long long>(generation));
  return prefix + buf;
}

}  // namespace nrc

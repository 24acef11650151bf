#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nrc/error.hpp"

namespace nrc::dataset {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

class IdxError : public DataError {
 public:
  enum class Kind { kBadMagic, kTruncated, kTrailingBytes, kDimensionOverflow, kLabelRange, kPairing };

  IdxError(Kind kind, std::size_t offset, const std::string& what)
      : DataError(what), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

struct RawImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image

  friend bool operator==(const RawImages&, const RawImages&) = default;
};

// IDX3: big-endian u32 magic 0x00000803, count, rows, cols, then the pixels.
RawImages parse_idx_images(std::span<const std::uint8_t> bytes);
// IDX1: big-endian u32 magic 0x00000801, count, then one byte per label (0..9).
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

RawImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_idx_images(const RawImages& images);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels);

struct LabeledPatternSet {
  Eigen::MatrixXd patterns;  // P x T, one pattern per column, values in [0,1]
  std::vector<std::uint8_t> labels;
  std::size_t rows = 28;
  std::size_t cols = 28;

  std::size_t size() const { return labels.size(); }
};

// pixel / 255, each image flattened row-major into one column.
Eigen::MatrixXd normalize(const RawImages& images);
// Inverse of normalize (rounding to the nearest byte).
RawImages to_raw_images(const Eigen::MatrixXd& patterns, std::size_t rows, std::size_t cols);

// Loads and pairs an image file with its label file. `limit` keeps the first
// `limit` pairs.
LabeledPatternSet load_labeled_set(const std::filesystem::path& images,
                                   const std::filesystem::path& labels,
                                   std::optional<std::size_t> limit = std::nullopt);

// K x T matrix with 1 at (labels[t], t).
Eigen::MatrixXd one_hot(std::span<const std::uint8_t> labels, std::size_t classes);

}  // namespace nrc::dataset

#include "nrc/dataset.hpp"

#include <cmath>
#include <cstdio>

#include "nrc/binary_io.hpp"

namespace nrc::dataset {

namespace {

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08X", v);
  return buf;
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void need_header(std::span<const std::uint8_t> bytes, std::size_t header, const char* what) {
  if (bytes.size() < header) {
    throw IdxError(IdxError::Kind::kTruncated, bytes.size(),
                   std::string(what) + ": header truncated: expected " + std::to_string(header) +
                       " bytes, found " + std::to_string(bytes.size()));
  }
}

void check_magic(std::uint32_t found, std::uint32_t expected, const char* what) {
  if (found != expected) {
    throw IdxError(IdxError::Kind::kBadMagic, 0,
                   std::string(what) + ": bad magic at byte offset 0: expected " +
                       hex32(expected) + ", found " + hex32(found));
  }
}

void check_length(std::size_t actual, std::size_t expected, const char* what) {
  if (actual < expected) {
    throw IdxError(IdxError::Kind::kTruncated, actual,
                   std::string(what) + ": truncated at byte offset " + std::to_string(actual) +
                       ": expected " + std::to_string(expected) + " bytes, found " +
                       std::to_string(actual));
  }
  if (actual > expected) {
    throw IdxError(IdxError::Kind::kTrailingBytes, expected,
                   std::string(what) + ": " + std::to_string(actual - expected) +
                       " unexpected bytes after offset " + std::to_string(expected));
  }
}

}  // namespace

RawImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 16;
  need_header(bytes, 4, "IDX image file");
  check_magic(be32(bytes, 0), kImageMagic, "IDX image file");
  need_header(bytes, kHeader, "IDX image file");

  RawImages img;
  img.count = be32(bytes, 4);
  img.rows = be32(bytes, 8);
  img.cols = be32(bytes, 12);
  const unsigned __int128 total =
      static_cast<unsigned __int128>(img.count) * img.rows * img.cols + kHeader;
  if (total > static_cast<unsigned __int128>(SIZE_MAX) ||
      static_cast<unsigned __int128>(img.count) * img.rows * img.cols >
          static_cast<unsigned __int128>(SIZE_MAX / 2)) {
    throw IdxError(IdxError::Kind::kDimensionOverflow, 4,
                   "IDX image file: dimensions " + std::to_string(img.count) + "x" +
                       std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                       " at byte offset 4 overflow the addressable size");
  }
  check_length(bytes.size(), static_cast<std::size_t>(total), "IDX image file");
  img.pixels.assign(bytes.begin() + kHeader, bytes.end());
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 8;
  need_header(bytes, 4, "IDX label file");
  check_magic(be32(bytes, 0), kLabelMagic, "IDX label file");
  need_header(bytes, kHeader, "IDX label file");
  const std::uint32_t count = be32(bytes, 4);
  check_length(bytes.size(), kHeader + std::size_t{count}, "IDX label file");
  std::vector<std::uint8_t> labels(bytes.begin() + kHeader, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw IdxError(IdxError::Kind::kLabelRange, kHeader + i,
                     "IDX label file: label " + std::to_string(labels[i]) + " at index " +
                         std::to_string(i) + " (byte offset " + std::to_string(kHeader + i) +
                         ") is outside [0, 9]");
    }
  }
  return labels;
}

RawImages load_idx_images(const std::filesystem::path& path) {
  try {
    return parse_idx_images(io::read_file(path));
  } catch (const IdxError& e) {
    throw IdxError(e.kind(), e.offset(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  try {
    return parse_idx_labels(io::read_file(path));
  } catch (const IdxError& e) {
    throw IdxError(e.kind(), e.offset(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_idx_images(const RawImages& images) {
  io::ByteWriter w;
  w.put_u32_be(kImageMagic);
  w.put_u32_be(images.count);
  w.put_u32_be(images.rows);
  w.put_u32_be(images.cols);
  w.put_bytes(images.pixels);
  return w.take();
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels) {
  io::ByteWriter w;
  w.put_u32_be(kLabelMagic);
  w.put_u32_be(static_cast<std::uint32_t>(labels.size()));
  w.put_bytes(labels);
  return w.take();
}

Eigen::MatrixXd normalize(const RawImages& images) {
  const auto p = static_cast<Eigen::Index>(images.rows) * images.cols;
  Eigen::MatrixXd out(p, static_cast<Eigen::Index>(images.count));
  for (Eigen::Index t = 0; t < out.cols(); ++t) {
    const std::uint8_t* src = images.pixels.data() + t * p;
    for (Eigen::Index k = 0; k < p; ++k) out(k, t) = src[k] / 255.0;
  }
  return out;
}

RawImages to_raw_images(const Eigen::MatrixXd& patterns, std::size_t rows, std::size_t cols) {
  if (static_cast<std::size_t>(patterns.rows()) != rows * cols) {
    throw DataError("to_raw_images: pattern length does not match " + std::to_string(rows) +
                    "x" + std::to_string(cols));
  }
  RawImages img;
  img.count = static_cast<std::uint32_t>(patterns.cols());
  img.rows = static_cast<std::uint32_t>(rows);
  img.cols = static_cast<std::uint32_t>(cols);
  img.pixels.reserve(static_cast<std::size_t>(patterns.size()));
  for (Eigen::Index t = 0; t < patterns.cols(); ++t) {
    for (Eigen::Index k = 0; k < patterns.rows(); ++k) {
      img.pixels.push_back(static_cast<std::uint8_t>(std::lround(patterns(k, t) * 255.0)));
    }
  }
  return img;
}

LabeledPatternSet load_labeled_set(const std::filesystem::path& images,
                                   const std::filesystem::path& labels,
                                   std::optional<std::size_t> limit) {
  RawImages raw = load_idx_images(images);
  std::vector<std::uint8_t> lab = load_idx_labels(labels);
  if (lab.size() != raw.count) {
    throw IdxError(IdxError::Kind::kPairing, 4,
                   "image file '" + images.string() + "' holds " + std::to_string(raw.count) +
                       " images but label file '" + labels.string() + "' holds " +
                       std::to_string(lab.size()) + " labels");
  }
  if (limit && *limit < raw.count) {
    raw.count = static_cast<std::uint32_t>(*limit);
    raw.pixels.resize(std::size_t{raw.count} * raw.rows * raw.cols);
    lab.resize(*limit);
  }
  LabeledPatternSet set;
  set.rows = raw.rows;
  set.cols = raw.cols;
  set.patterns = normalize(raw);
  set.labels = std::move(lab);
  return set;
}

Eigen::MatrixXd one_hot(std::span<const std::uint8_t> labels, std::size_t classes) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes),
                                            static_cast<Eigen::Index>(labels.size()));
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= classes) {
      throw DataError("one_hot: label " + std::to_string(labels[t]) + " at index " +
                      std::to_string(t) + " is outside [0, " + std::to_string(classes) + ")");
    }
    v(labels[t], static_cast<Eigen::Index>(t)) = 1.0;
  }
  return v;
}

}  // namespace nrc::dataset

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wdpose/geometry.hpp"

namespace wdpose {

/// Dense sensor depth in millimeters, row-major with a top-left origin.
/// Invalid pixels are NaN; every other value is > 0.
class DepthMap {
 public:
  /// All-NaN map. Throws InvalidInputError for a zero dimension.
  DepthMap(std::size_t width, std::size_t height);
  DepthMap(std::size_t width, std::size_t height, std::vector<float> values);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  float at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }
  float& at(std::size_t x, std::size_t y) { return values_[y * width_ + x]; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  /// Bit-level equality, so NaN pixels compare equal to themselves.
  bool bit_equal(const DepthMap& other) const;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<float> values_;
};

/// Per-joint depth readings in millimeters; NaN marks an invalid entry.
struct JointDepthVector {
  std::vector<double> mm;

  std::size_t size() const { return mm.size(); }
  bool valid(std::size_t j) const { return !std::isnan(mm[j]); }
  std::size_t valid_count() const;
};

// Bilinear sample at a pixel coordinate; NaN when outside
// [0, w-1] x [0, h-1] or when a neighbor with nonzero weight is NaN.
double sample_bilinear(const DepthMap& map, const Point2D& p);

JointDepthVector read_depth_at(const DepthMap& map, std::span<const Point2D> points);

// DMAP file: "DMAP", u32 version = 1, u32 width, u32 height, then
// width * height little-endian float32 values.
inline constexpr std::uint32_t kDepthFileVersion = 1;

void save_depth(const DepthMap& map, const std::filesystem::path& path);
DepthMap load_depth(const std::filesystem::path& path);

}  // namespace wdpose

#include "wdpose/depth.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "wdpose/error.hpp"

namespace wdpose {

static_assert(std::endian::native == std::endian::little,
              "DMAP I/O writes host-order floats and assumes a little-endian host");

DepthMap::DepthMap(std::size_t width, std::size_t height)
    : DepthMap(width, height,
               std::vector<float>(width * height, std::numeric_limits<float>::quiet_NaN())) {}

DepthMap::DepthMap(std::size_t width, std::size_t height, std::vector<float> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width_ == 0 || height_ == 0) throw InvalidInputError("depth map must be non-empty");
  if (values_.size() != width_ * height_)
    throw InvalidInputError("depth map has " + std::to_string(values_.size()) +
                            " values, expected " + std::to_string(width_ * height_));
  for (float v : values_)
    if (!std::isnan(v) && !(v > 0.0f && std::isfinite(v)))
      throw InvalidInputError("depth values must be NaN or finite and positive");
}

bool DepthMap::bit_equal(const DepthMap& other) const {
  return width_ == other.width_ && height_ == other.height_ &&
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
}

std::size_t JointDepthVector::valid_count() const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < mm.size(); ++j) n += valid(j) ? 1 : 0;
  return n;
}

namespace {

// Left cell index and fractional offset along one axis of length n.
bool cell(double t, std::size_t n, std::size_t& i0, double& frac) {
  if (!(t >= 0.0) || t > static_cast<double>(n - 1)) return false;
  if (n == 1) {
    i0 = 0;
    frac = 0.0;
    return true;
  }
  i0 = std::min(static_cast<std::size_t>(std::floor(t)), n - 2);
  frac = t - static_cast<double>(i0);
  return true;
}

}  // namespace

double sample_bilinear(const DepthMap& map, const Point2D& p) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t x0, y0;
  double tx, ty;
  if (!cell(p.x, map.width(), x0, tx) || !cell(p.y, map.height(), y0, ty)) return nan;
  const std::size_t x1 = map.width() == 1 ? x0 : x0 + 1;
  const std::size_t y1 = map.height() == 1 ? y0 : y0 + 1;

  const double w[4] = {(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty};
  const double v[4] = {map.at(x0, y0), map.at(x1, y0), map.at(x0, y1), map.at(x1, y1)};
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (w[k] == 0.0) continue;
    if (std::isnan(v[k])) return nan;
    sum += w[k] * v[k];
  }
  return sum;
}

JointDepthVector read_depth_at(const DepthMap& map, std::span<const Point2D> points) {
  JointDepthVector out;
  out.mm.reserve(points.size());
  for (const auto& p : points) out.mm.push_back(sample_bilinear(map, p));
  return out;
}

namespace {

constexpr char kMagic[4] = {'D', 'M', 'A', 'P'};

void write_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& is, const std::string& what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError("truncated depth file while reading " + what);
  return v;
}

}  // namespace

void save_depth(const DepthMap& map, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  write_u32(os, kDepthFileVersion);
  write_u32(os, static_cast<std::uint32_t>(map.width()));
  write_u32(os, static_cast<std::uint32_t>(map.height()));
  const auto values = map.values();
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!os) throw IoError("failed writing " + path.string());
}

DepthMap load_depth(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4] = {};
  if (!is.read(magic, 4)) throw IoError("truncated depth file " + path.string());
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic");
  const auto version = read_u32(is, "version");
  if (version != kDepthFileVersion)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  const auto width = read_u32(is, "width");
  const auto height = read_u32(is, "height");
  if (width == 0 || height == 0) throw FormatError(path.string() + ": empty shape");
  const std::uint64_t count = std::uint64_t{width} * height;
  if (count > (std::uint64_t{1} << 32)) throw FormatError(path.string() + ": shape too large");

  std::vector<float> values(count);
  if (!is.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(count * sizeof(float))))
    throw IoError(path.string() + ": truncated payload");
  try {
    return DepthMap(width, height, std::move(values));
  } catch (const InvalidInputError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace wdpose

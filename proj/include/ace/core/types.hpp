#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace ace {

/// Image geometry. Pixel data is stored channel-major: one row per channel,
/// `height * width` columns in row-scan order.
struct Geometry {
  int channels = 0;
  int height = 0;
  int width = 0;

  int pixels() const { return height * width; }
  int size() const { return channels * height * width; }
  bool operator==(const Geometry&) const = default;
};

std::string to_string(const Geometry& g);

/// Spatial extent of a feature map.
struct Extent {
  int height = 0;
  int width = 0;

  int pixels() const { return height * width; }
  bool operator==(const Extent&) const = default;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Image tensor: `channels x (height * width)`, values in [-1, 1] internally.
template <typename Scalar>
using ImageArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
ImageArray<Scalar> zero_image(const Geometry& g) {
  return ImageArray<Scalar>::Zero(g.channels, g.pixels());
}

template <typename Scalar>
bool has_geometry(const ImageArray<Scalar>& x, const Geometry& g) {
  return x.rows() == g.channels && x.cols() == g.pixels();
}

template <typename To, typename From>
ImageArray<To> image_cast(const ImageArray<From>& x) {
  return x.template cast<To>();
}

/// Internal pixel range.
inline constexpr double kPixelMin = -1.0;
inline constexpr double kPixelMax = 1.0;

using Label = int;

}  // namespace ace

#pragma once

#include "ace/core/types.hpp"

#include <cstdint>

namespace ace::engine {

/// Single-channel region mask over the image plane.
struct Mask {
  Geometry geometry;                // channels == 1
  ImageArray<double> magnitude;     // channel-summed |x - x'| divided by its maximum
  ImageArray<double> dilated;       // magnitude after the d x d max filter
  ImageArray<std::uint8_t> binary;  // 1 x pixels, values 0/1
  int dilation = 1;
  double threshold = 0.0;

  Eigen::Index count() const { return binary.template cast<Eigen::Index>().sum(); }
  template <typename Scalar>
  ImageArray<Scalar> weights() const {
    return binary.template cast<Scalar>();
  }
};

/// Grey-scale dilation with a d x d square window (border windows are clipped).
ImageArray<double> dilate(const ImageArray<double>& plane, const Extent& extent, int d);

/// |x - x'| summed over channels, divided by its maximum (all zeros when the
/// maximum is 0), dilated with a d x d max filter and thresholded at >= u.
template <typename Scalar>
Mask compute_mask(const ImageArray<Scalar>& x, const ImageArray<Scalar>& x_pre, const Geometry& geometry, int dilation,
                  double threshold);

/// Mask with every pixel set, used when region masking is disabled.
Mask full_mask(const Geometry& geometry);

}  // namespace ace::engine

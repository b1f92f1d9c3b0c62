#include "ace/engine/mask.hpp"

#include "ace/core/errors.hpp"

#include <algorithm>

namespace ace::engine {

ImageArray<double> dilate(const ImageArray<double>& plane, const Extent& extent, int d) {
  require(plane.rows() == 1 && plane.cols() == extent.pixels(), "dilate: plane does not match extent");
  require(d >= 1 && d % 2 == 1, "dilation size must be an odd positive integer");
  const int r = d / 2;
  const int h = extent.height, w = extent.width;
  // Separable max filter: rows, then columns.
  ImageArray<double> horizontal(1, plane.cols());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = plane(0, y * w + x);
      for (int k = std::max(0, x - r); k <= std::min(w - 1, x + r); ++k) m = std::max(m, plane(0, y * w + k));
      horizontal(0, y * w + x) = m;
    }
  ImageArray<double> out(1, plane.cols());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = horizontal(0, y * w + x);
      for (int k = std::max(0, y - r); k <= std::min(h - 1, y + r); ++k) m = std::max(m, horizontal(0, k * w + x));
      out(0, y * w + x) = m;
    }
  return out;
}

template <typename Scalar>
Mask compute_mask(const ImageArray<Scalar>& x, const ImageArray<Scalar>& x_pre, const Geometry& geometry, int dilation,
                  double threshold) {
  require(has_geometry(x, geometry) && has_geometry(x_pre, geometry), "compute_mask: images do not match geometry " +
                                                                           to_string(geometry));
  require(dilation >= 1 && dilation % 2 == 1, "mask dilation must be an odd positive integer");
  require(threshold >= 0.0 && threshold <= 1.0, "mask threshold must lie in [0, 1]");
  Mask m;
  m.geometry = {1, geometry.height, geometry.width};
  m.dilation = dilation;
  m.threshold = threshold;
  m.magnitude = ImageArray<double>::Zero(1, geometry.pixels());
  for (int c = 0; c < geometry.channels; ++c)
    m.magnitude += (x.row(c).template cast<double>() - x_pre.row(c).template cast<double>()).abs();
  const double peak = m.magnitude.maxCoeff();
  if (peak == 0.0) {
    m.dilated = m.magnitude;
    m.binary = ImageArray<std::uint8_t>::Zero(1, geometry.pixels());
    return m;
  }
  m.magnitude /= peak;
  m.dilated = dilate(m.magnitude, {geometry.height, geometry.width}, dilation);
  m.binary = (m.dilated >= threshold).template cast<std::uint8_t>();
  return m;
}

Mask full_mask(const Geometry& geometry) {
  Mask m;
  m.geometry = {1, geometry.height, geometry.width};
  m.magnitude = ImageArray<double>::Ones(1, geometry.pixels());
  m.dilated = m.magnitude;
  m.binary = ImageArray<std::uint8_t>::Ones(1, geometry.pixels());
  return m;
}

template Mask compute_mask<float>(const ImageArray<float>&, const ImageArray<float>&, const Geometry&, int, double);
template Mask compute_mask<double>(const ImageArray<double>&, const ImageArray<double>&, const Geometry&, int, double);

}  // namespace ace::engine

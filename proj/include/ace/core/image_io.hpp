#pragma once

#include "ace/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ace {

/// 8-bit value in [0, 255] -> internal [-1, 1].
inline double byte_to_internal(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

/// Internal [-1, 1] -> nearest 8-bit value, clamped.
std::uint8_t internal_to_byte(double x);

/// Quantizes an image to the 8-bit grid and back. The result survives a
/// PNG round trip bit-exactly.
template <typename Scalar>
ImageArray<Scalar> quantize(const ImageArray<Scalar>& x) {
  ImageArray<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out.data()[i] = static_cast<Scalar>(byte_to_internal(internal_to_byte(static_cast<double>(x.data()[i]))));
  return out;
}

struct DecodedImage {
  Geometry geometry;
  ImageArray<double> pixels;
};

/// Reads an 8-bit gray or RGB PNG (alpha is dropped). Throws RuntimeFailure
/// naming the file when it cannot be decoded.
DecodedImage read_png(const std::filesystem::path& path);

/// Decodes PNG bytes held in memory.
DecodedImage decode_png(const std::vector<std::uint8_t>& bytes);

/// Writes an image (internal range) as 8-bit gray (1 channel) or RGB (3 channels).
void write_png(const std::filesystem::path& path, const ImageArray<double>& pixels, const Geometry& g);

template <typename Scalar>
void write_png(const std::filesystem::path& path, const ImageArray<Scalar>& pixels, const Geometry& g) {
  write_png(path, ImageArray<double>(pixels.template cast<double>()), g);
}

std::vector<std::uint8_t> encode_png(const ImageArray<double>& pixels, const Geometry& g);

/// Writes a binary mask (1 x pixels, values 0/1) as 8-bit gray 0/255.
void write_mask_png(const std::filesystem::path& path, const ImageArray<std::uint8_t>& mask, const Extent& extent);

ImageArray<std::uint8_t> read_mask_png(const std::filesystem::path& path, Extent* extent = nullptr);

}  // namespace ace

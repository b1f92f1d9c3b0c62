#include "ace/core/image_io.hpp"

#include "ace/core/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ace {

std::string to_string(const Geometry& g) {
  return std::to_string(g.channels) + "x" + std::to_string(g.height) + "x" + std::to_string(g.width);
}

std::uint8_t internal_to_byte(double x) {
  const double v = std::nearbyint((x + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

namespace {

DecodedImage decode(png_image& image, const std::string& what) {
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    std::string message = image.message;
    png_image_free(&image);
    throw RuntimeFailure("cannot decode PNG " + what + ": " + message);
  }
  DecodedImage out;
  out.geometry = {channels, static_cast<int>(image.height), static_cast<int>(image.width)};
  out.pixels.resize(channels, out.geometry.pixels());
  for (int p = 0; p < out.geometry.pixels(); ++p)
    for (int c = 0; c < channels; ++c) out.pixels(c, p) = byte_to_internal(buffer[p * channels + c]);
  return out;
}

std::vector<std::uint8_t> interleave(const ImageArray<double>& pixels, const Geometry& g) {
  if (g.channels != 1 && g.channels != 3)
    throw ValidationError("PNG output supports 1 or 3 channels, got " + std::to_string(g.channels));
  require(has_geometry(pixels, g), "image does not match geometry " + to_string(g));
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(g.size()));
  for (int p = 0; p < g.pixels(); ++p)
    for (int c = 0; c < g.channels; ++c) buffer[p * g.channels + c] = internal_to_byte(pixels(c, p));
  return buffer;
}

png_image writer(const Geometry& g) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(g.width);
  image.height = static_cast<png_uint_32>(g.height);
  image.format = g.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  return image;
}

}  // namespace

DecodedImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    std::string message = image.message;
    png_image_free(&image);
    throw RuntimeFailure("cannot read PNG " + path.string() + ": " + message);
  }
  return decode(image, path.string());
}

DecodedImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    std::string message = image.message;
    png_image_free(&image);
    throw RuntimeFailure("cannot decode PNG bytes: " + message);
  }
  return decode(image, "(memory)");
}

void write_png(const std::filesystem::path& path, const ImageArray<double>& pixels, const Geometry& g) {
  const auto buffer = interleave(pixels, g);
  png_image image = writer(g);
  if (png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr) == 0)
    throw RuntimeFailure("cannot write PNG " + path.string() + ": " + image.message);
}

std::vector<std::uint8_t> encode_png(const ImageArray<double>& pixels, const Geometry& g) {
  const auto buffer = interleave(pixels, g);
  png_image image = writer(g);
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&image, nullptr, &size, 0, buffer.data(), 0, nullptr) == 0)
    throw RuntimeFailure(std::string("cannot encode PNG: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&image, out.data(), &size, 0, buffer.data(), 0, nullptr) == 0)
    throw RuntimeFailure(std::string("cannot encode PNG: ") + image.message);
  out.resize(size);
  return out;
}

void write_mask_png(const std::filesystem::path& path, const ImageArray<std::uint8_t>& mask, const Extent& extent) {
  require(mask.rows() == 1 && mask.cols() == extent.pixels(), "mask does not match extent");
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(extent.pixels()));
  for (int p = 0; p < extent.pixels(); ++p) buffer[p] = mask(0, p) ? 255 : 0;
  png_image image = writer({1, extent.height, extent.width});
  if (png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr) == 0)
    throw RuntimeFailure("cannot write PNG " + path.string() + ": " + image.message);
}

ImageArray<std::uint8_t> read_mask_png(const std::filesystem::path& path, Extent* extent) {
  const auto decoded = read_png(path);
  if (extent) *extent = {decoded.geometry.height, decoded.geometry.width};
  ImageArray<std::uint8_t> mask(1, decoded.geometry.pixels());
  for (int p = 0; p < decoded.geometry.pixels(); ++p) mask(0, p) = decoded.pixels(0, p) > 0.0 ? 1 : 0;
  return mask;
}

}  // namespace ace

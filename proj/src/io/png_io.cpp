// SPDX-License-Identifier: Apache-2.0
#include "endomim/io/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "endomim/error.hpp"

namespace endomim {

Tensor<float> read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + message);
  }
  Tensor<float> out({static_cast<Index>(image.height), static_cast<Index>(image.width), 3});
  for (std::size_t i = 0; i < buffer.size(); ++i) out[static_cast<Index>(i)] = static_cast<float>(buffer[i] / 255.0);
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("write_png expects HxWx3, got " + to_string(image.shape()));
  std::vector<png_byte> buffer(static_cast<std::size_t>(image.size()));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image[static_cast<Index>(i)]), 0.0, 1.0);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.dim(1));
  png.height = static_cast<png_uint_32>(image.dim(0));
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace endomim

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ponnet {

/// Row-major interleaved image. `channels` values per pixel.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  T& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

using RgbImage = Image<std::uint8_t>;  // 3 channels
using DepthImage = Image<float>;       // 1 channel, meters; <= 0 means invalid

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary P6, maxval 255.
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

/// Binary P5, maxval 65535, big-endian samples holding depth in millimeters.
void write_depth_pgm(const std::filesystem::path& path, const DepthImage& depth);
DepthImage read_depth_pgm(const std::filesystem::path& path);

}  // namespace ponnet

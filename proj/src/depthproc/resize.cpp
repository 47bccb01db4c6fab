#include <algorithm>
#include <cmath>
#include <type_traits>

#include "ponnet/depthproc/depthproc.hpp"

namespace ponnet::depth {

template <typename T>
Image<T> roi_crop_resize(const Image<T>& image, const Roi& roi, int side) {
  if (!(roi.width > 0.0) || !(roi.height > 0.0)) throw std::invalid_argument("roi_crop_resize: zero-area roi");
  if (side < 1) throw std::invalid_argument("roi_crop_resize: side must be positive");
  if (roi.x < 0.0 || roi.y < 0.0 || roi.x + roi.width > image.width + 1e-9 ||
      roi.y + roi.height > image.height + 1e-9) {
    throw std::invalid_argument("roi_crop_resize: roi outside the image");
  }
  Image<T> out(side, side, image.channels);
  const double sx = roi.width / side;
  const double sy = roi.height / side;
  for (int j = 0; j < side; ++j) {
    const double fy = std::clamp(roi.y + (j + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int i = 0; i < side; ++i) {
      const double fx = std::clamp(roi.x + (i + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1.0 - wx) * image.at(x0, y0, c) + wx * image.at(x1, y0, c);
        const double bottom = (1.0 - wx) * image.at(x0, y1, c) + wx * image.at(x1, y1, c);
        const double v = (1.0 - wy) * top + wy * bottom;
        if constexpr (std::is_integral_v<T>) {
          out.at(i, j, c) = static_cast<T>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        } else {
          out.at(i, j, c) = static_cast<T>(v);
        }
      }
    }
  }
  return out;
}

template Image<std::uint8_t> roi_crop_resize(const Image<std::uint8_t>&, const Roi&, int);
template Image<float> roi_crop_resize(const Image<float>&, const Roi&, int);

}  // namespace ponnet::depth

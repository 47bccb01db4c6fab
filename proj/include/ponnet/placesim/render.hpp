#pragma once

#include "ponnet/common/image.hpp"
#include "ponnet/placesim/scene.hpp"

namespace ponnet::sim {

struct Rendering {
  RgbImage rgb;
  DepthImage depth;  // camera-frame z in meters, 0 where nothing was hit
};

/// Z-buffered triangle rasterization of the floor, the destination and the
/// obstacles (the target is in the hand and not drawn). Flat Lambert shading
/// from the location's light; uncovered pixels take the background color.
Rendering render(const Scene& scene, const GenConfig& config);

}  // namespace ponnet::sim

#pragma once

#include <cstdint>

#include "cocot/types.hpp"

namespace cocot::geometry {

inline constexpr std::int64_t kDefaultTarget = 336;

/// Aspect-preserving embedding of a width x height image into a square
/// canvas: isotropic scale by the long side, short side centred.
struct PadTransform {
  double scale = 1.0;
  std::int64_t pad_x = 0;
  std::int64_t pad_y = 0;
  std::int64_t target = kDefaultTarget;
  std::int64_t scaled_width = 0;
  std::int64_t scaled_height = 0;

  friend bool operator==(const PadTransform&, const PadTransform&) = default;
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Throws UsageError for non-positive arguments.
PadTransform compute_pad_transform(std::int64_t width, std::int64_t height, std::int64_t target = kDefaultTarget);

/// Original-image box to padded-canvas box (scale, then offset, round half-up).
/// Throws ConstructionError if the result collapses to zero area.
BBox map_bbox_to_padded(const BBox& b, const PadTransform& t);

/// Inverse of map_bbox_to_padded, up to one pixel of rounding per coordinate.
BBox map_bbox_from_padded(const BBox& b, const PadTransform& t);

/// Clamps a requested crop to [0,width] x [0,height]. Coordinates may be
/// negative on input. Throws OutOfBoundsError if nothing of the box remains.
BBox crop_spec(double x1, double y1, double x2, double y2, std::int64_t width, std::int64_t height);
BBox crop_spec(const BBox& b, std::int64_t width, std::int64_t height);

}  // namespace cocot::geometry

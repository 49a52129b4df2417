#include "cocot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cocot/errors.hpp"

namespace cocot::geometry {

double iou(const BBox& a, const BBox& b) {
  const auto ix = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const auto iy = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = static_cast<double>(ix) * static_cast<double>(iy);
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return inter / uni;
}

PadTransform compute_pad_transform(std::int64_t width, std::int64_t height, std::int64_t target) {
  if (width <= 0 || height <= 0 || target <= 0) {
    throw UsageError("pad transform needs positive dimensions, got " + std::to_string(width) + "x" +
                     std::to_string(height) + " -> " + std::to_string(target));
  }
  PadTransform t;
  t.target = target;
  t.scale = static_cast<double>(target) / static_cast<double>(std::max(width, height));
  t.scaled_width = std::clamp<std::int64_t>(round_half_up(width * t.scale), 1, target);
  t.scaled_height = std::clamp<std::int64_t>(round_half_up(height * t.scale), 1, target);
  t.pad_x = (target - t.scaled_width) / 2;
  t.pad_y = (target - t.scaled_height) / 2;
  return t;
}

BBox map_bbox_to_padded(const BBox& b, const PadTransform& t) {
  auto map = [&](std::int64_t v, std::int64_t pad) {
    return std::clamp<std::int64_t>(round_half_up(static_cast<double>(v) * t.scale) + pad, 0, t.target);
  };
  const auto x1 = map(b.x1(), t.pad_x), y1 = map(b.y1(), t.pad_y);
  const auto x2 = map(b.x2(), t.pad_x), y2 = map(b.y2(), t.pad_y);
  if (x1 >= x2 || y1 >= y2) throw ConstructionError("box collapses under pad transform");
  return BBox(x1, y1, x2, y2);
}

BBox map_bbox_from_padded(const BBox& b, const PadTransform& t) {
  auto unmap = [&](std::int64_t v, std::int64_t pad) { return static_cast<double>(v - pad) / t.scale; };
  return make_bbox(unmap(b.x1(), t.pad_x), unmap(b.y1(), t.pad_y), unmap(b.x2(), t.pad_x), unmap(b.y2(), t.pad_y));
}

BBox crop_spec(double x1, double y1, double x2, double y2, std::int64_t width, std::int64_t height) {
  if (width <= 0 || height <= 0) throw UsageError("crop_spec needs positive image dimensions");
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  const auto w = static_cast<double>(width), h = static_cast<double>(height);
  const double cx1 = std::clamp(x1, 0.0, w), cx2 = std::clamp(x2, 0.0, w);
  const double cy1 = std::clamp(y1, 0.0, h), cy2 = std::clamp(y2, 0.0, h);
  const auto rx1 = round_half_up(cx1), ry1 = round_half_up(cy1), rx2 = round_half_up(cx2), ry2 = round_half_up(cy2);
  if (rx1 >= rx2 || ry1 >= ry2) throw OutOfBoundsError("crop lies outside the " + std::to_string(width) + "x" + std::to_string(height) + " image");
  return BBox(rx1, ry1, rx2, ry2);
}

BBox crop_spec(const BBox& b, std::int64_t width, std::int64_t height) {
  return crop_spec(static_cast<double>(b.x1()), static_cast<double>(b.y1()), static_cast<double>(b.x2()),
                   static_cast<double>(b.y2()), width, height);
}

}  // namespace cocot::geometry

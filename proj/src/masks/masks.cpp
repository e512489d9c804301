#include "mofa/masks.hpp"

#include <cmath>

#include "mofa/core/errors.hpp"
#include "mofa/core/random.hpp"

namespace mofa::masks {

FrameGeometry frame_geometry(MaskStyle style) {
  if (style == MaskStyle::large) return {true, 0.0, 6.0, 5.0};
  return {false, 1.0, 2.0, 1.0};
}

PatchMask eyeglass_mask(Point eye_left, Point eye_right, int height, int width, MaskStyle style) {
  if (height <= 0 || width <= 0) throw GeometryError("canvas must be non-empty");
  auto inside = [&](Point p) { return p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height; };
  if (!inside(eye_left) || !inside(eye_right)) throw GeometryError("eye landmark lies outside the canvas");
  if (eye_right.x < eye_left.x) std::swap(eye_left, eye_right);
  const double separation = eye_right.x - eye_left.x;
  if (separation < kMinEyeSeparation) {
    throw GeometryError("eyes are " + std::to_string(separation) + " px apart, need at least 8");
  }

  const FrameGeometry g = frame_geometry(style);
  const double eye_distance = std::hypot(eye_right.x - eye_left.x, eye_right.y - eye_left.y);
  const double radius = kRimRadiusFraction * eye_distance;
  const double outer = radius + g.rim_thickness / 2.0;
  const double inner = g.filled_rims ? -1.0 : radius - g.rim_thickness / 2.0;
  // Bars cover a half-open band so a bar of thickness t is t rows tall.
  auto in_band = [](double offset, double thickness) {
    return offset > -thickness / 2.0 && offset <= thickness / 2.0;
  };
  // Height of the line joining the eyes, interpolated at x.
  auto line_y = [&](double x) {
    const double t = (x - eye_left.x) / separation;
    return eye_left.y + t * (eye_right.y - eye_left.y);
  };

  PatchMask mask(height, width, style, eye_left, eye_right);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      bool on = false;
      for (const Point& eye : {eye_left, eye_right}) {
        const double d = std::hypot(px - eye.x, py - eye.y);
        if (d <= outer && d >= inner) on = true;
      }
      if (px > eye_left.x + radius - 0.5 && px < eye_right.x - radius + 0.5 &&
          in_band(py - line_y(px), g.bridge_height)) {
        on = true;
      }
      const bool outside_rims = px < eye_left.x - radius + 0.5 || px > eye_right.x + radius - 0.5;
      const double temple_y = px < eye_left.x ? eye_left.y : eye_right.y;
      if (outside_rims && in_band(py - temple_y, g.temple_thickness)) on = true;
      if (on) mask.set(y, x);
    }
  }
  return mask;
}

AdversarialNoise random_patch(std::shared_ptr<const PatchMask> mask, std::uint64_t seed, int channels) {
  if (!mask) throw DomainError("random_patch requires a mask");
  Tensor3 delta(mask->height(), mask->width(), channels);
  Rng rng(mix_seed(seed, 0xc1ea));
  for (int y = 0; y < mask->height(); ++y) {
    for (int x = 0; x < mask->width(); ++x) {
      if (!mask->contains(y, x)) continue;
      for (int c = 0; c < channels; ++c) delta(y, x, c) = rng.uniform(-0.5, 0.5);
    }
  }
  return AdversarialNoise(std::move(delta), std::move(mask));
}

}  // namespace mofa::masks

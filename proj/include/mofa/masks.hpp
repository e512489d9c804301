#pragma once

#include <cstdint>
#include <memory>

#include "mofa/core/types.hpp"

namespace mofa::masks {

/// Rim radius as a fraction of the inter-eye distance.
inline constexpr double kRimRadiusFraction = 0.45;
inline constexpr double kMinEyeSeparation = 8.0;

/// Frame geometry per style, in pixels.
struct FrameGeometry {
  bool filled_rims = false;
  double rim_thickness = 1.0;
  double bridge_height = 2.0;
  double temple_thickness = 1.0;
};

FrameGeometry frame_geometry(MaskStyle style);

/// Eyeglass frame anchored on the eye centres: two rims of radius
/// 0.45 x inter-eye distance, a bridge between them and temple bars out to
/// the image edges. Pixel (x, y) is tested at its centre (x + 0.5, y + 0.5).
/// Throws GeometryError when an eye lies outside the canvas or the eyes are
/// less than 8 px apart horizontally.
PatchMask eyeglass_mask(Point eye_left, Point eye_right, int height, int width, MaskStyle style);

/// Uniform noise in [-0.5, 0.5) on every channel inside the support, exactly
/// zero elsewhere. Deterministic in `seed`.
AdversarialNoise random_patch(std::shared_ptr<const PatchMask> mask, std::uint64_t seed,
                              int channels = 3);

}  // namespace mofa::masks

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mofa/core/types.hpp"

namespace mofa::synth {

/// Appearance of one toy identity. Ranges (inclusive) are the contract that
/// generate_identity() samples from:
///   face_half_width   [7.5, 9.5]   px, horizontal semi-axis of the face oval
///   face_half_height  [9.5, 11.5]  px, vertical semi-axis
///   eye_spacing       [8.5, 10.5]  px between eye centres
///   eye_radius        [1.0, 2.0]   px
///   mouth_curvature   [-1, 1]      negative frowns, positive smiles
///   mouth_width       [4.0, 7.0]   px
///   skin_tone         [0, 1]       light to dark
///   hair_tone         [0, 1]       position on the hair palette
///   iris_tone         [0, 1]       position on the iris palette
struct IdentitySpec {
  std::uint64_t seed = 0;
  double face_half_width = 0.0;
  double face_half_height = 0.0;
  double eye_spacing = 0.0;
  double eye_radius = 0.0;
  double mouth_curvature = 0.0;
  double mouth_width = 0.0;
  double skin_tone = 0.0;
  double hair_tone = 0.0;
  double iris_tone = 0.0;

  bool operator==(const IdentitySpec&) const = default;
  /// True if every parameter lies inside its documented range.
  bool in_range() const;
};

struct Range {
  double lo;
  double hi;
};

namespace ranges {
inline constexpr Range face_half_width{7.5, 9.5};
inline constexpr Range face_half_height{9.5, 11.5};
inline constexpr Range eye_spacing{8.5, 10.5};
inline constexpr Range eye_radius{1.0, 2.0};
inline constexpr Range mouth_curvature{-1.0, 1.0};
inline constexpr Range mouth_width{4.0, 7.0};
inline constexpr Range unit{0.0, 1.0};
}  // namespace ranges

struct Canvas {
  int height = 64;
  int width = 64;
};

/// Geometry of a rendered face, in image pixels.
struct FaceAnnotation {
  Box face_box;
  Point center;
  double semi_x = 0.0;
  double semi_y = 0.0;
  Point eye_left;
  Point eye_right;
  Point chin;
};

struct RenderedImage {
  ImageTensor image;
  std::optional<FaceAnnotation> face;
};

IdentitySpec generate_identity(std::uint64_t seed);

/// Draws the identity's face at a jittered position, scale and brightness on
/// a textured background. Output is quantized to 8-bit levels. Throws
/// RenderError when the canvas cannot hold the face, DomainError below 32 px.
RenderedImage render(const IdentitySpec& spec, std::uint64_t jitter_seed, Canvas canvas);

/// Background-only image (no face annotation).
RenderedImage render_background(std::uint64_t jitter_seed, Canvas canvas);

struct DatasetOptions {
  int n_identities = 5;
  int images_per_identity = 5;
  Canvas canvas{};
  std::uint64_t seed = 0;
  /// Background-only images for detector negatives.
  int negatives = 0;
  /// Fraction of each identity's images held out for matcher verification,
  /// rounded, at least one and at most all but one.
  double test_fraction = 0.2;
  /// Fraction of identities held out entirely from detector training.
  double detector_holdout_fraction = 0.2;
};

struct Sample {
  std::string identity_id;   // empty for background-only negatives
  int identity_index = -1;
  int image_index = 0;
  std::uint64_t jitter_seed = 0;
  bool train = true;
  RenderedImage rendered;
};

struct Dataset {
  DatasetOptions options;
  std::vector<IdentitySpec> identities;
  std::vector<std::string> identity_ids;
  /// Faces in identity-major order.
  std::vector<Sample> faces;
  std::vector<Sample> negatives;
  /// Identities excluded from detector training (identity-disjoint split).
  std::vector<int> detector_holdout;

  bool detector_trains_on(int identity_index) const;
  /// Pairs of indices into `faces`.
  std::vector<std::pair<std::size_t, std::size_t>> genuine_pairs() const;
  std::vector<std::pair<std::size_t, std::size_t>> impostor_pairs() const;
  std::vector<std::size_t> faces_of(int identity_index) const;
};

std::string identity_name(int index);
std::uint64_t identity_seed(std::uint64_t dataset_seed, int identity_index);
std::uint64_t image_seed(std::uint64_t dataset_seed, int identity_index, int image_index);

/// Throws DomainError if n_identities < 2 or images_per_identity < 2.
Dataset make_dataset(const DatasetOptions& options);

/// Writes `<root>/<identity_id>/<index>.png` plus one landmarks.json per
/// directory; negatives go to `<root>/_background/`. Refuses a non-empty
/// root unless `force`.
void export_dataset(const Dataset& dataset, const std::filesystem::path& root, bool force = false);
Dataset import_dataset(const std::filesystem::path& root);

}  // namespace mofa::synth

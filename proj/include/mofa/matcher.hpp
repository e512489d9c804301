#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mofa/core/types.hpp"
#include "mofa/nn/conv_net.hpp"
#include "mofa/synth.hpp"

namespace mofa::matcher {

inline constexpr int kDefaultEmbeddingDim = 32;
inline constexpr int kDefaultCropSize = 32;
/// Side of the square image region handed to the matcher, centred on the face.
inline constexpr double kDefaultCropBoxSide = 28.0;
inline constexpr double kTripletMargin = 0.5;

/// Unit-L2 feature vector.
class Embedding {
 public:
  Embedding() = default;
  /// Normalises `raw`; throws DomainError for a zero or non-finite vector.
  static Embedding normalized(std::vector<double> raw);
  /// Wraps an already unit-length vector as stored; throws DomainError when
  /// its norm is off by more than 1e-5.
  static Embedding from_unit(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  bool operator==(const Embedding&) const = default;

 private:
  std::vector<double> values_;
};

/// Minkowski p-distance (sum |a_i - b_i|^p)^(1/p). Throws DomainError on a
/// dimension mismatch or p <= 0.
double distance(std::span<const double> a, std::span<const double> b, double p);
double distance(const Embedding& a, const Embedding& b, double p);
/// d distance(a, b) / d b. Zero when a == b.
std::vector<double> distance_gradient(std::span<const double> a, std::span<const double> b, double p);

struct MatcherPass {
  Embedding embedding;
  std::function<Tensor3(std::span<const double> d_embedding)> pullback;
};

/// Differentiable feature extractor over fixed-size face crops.
class MatcherModel {
 public:
  virtual ~MatcherModel() = default;
  virtual int crop_size() const = 0;
  virtual int embedding_dim() const = 0;
  /// Side of the square source region that crop_face() resamples.
  virtual double crop_box_side() const { return kDefaultCropBoxSide; }
  virtual MatcherPass run(const Tensor3& crop) const = 0;
  virtual bool supports_gradients() const { return true; }
};

/// Four ELU conv layers (4x4/2, 3x3/2, 3x3/2, 3x3 to a 1x1xD map) followed by
/// L2 normalisation.
class ReferenceMatcher final : public MatcherModel {
 public:
  struct Architecture {
    int crop_size = kDefaultCropSize;
    int embedding_dim = kDefaultEmbeddingDim;
    double crop_box_side = kDefaultCropBoxSide;
    int channels1 = 16;
    int channels2 = 32;
    int channels3 = 32;
  };

  ReferenceMatcher();
  explicit ReferenceMatcher(Architecture arch);

  int crop_size() const override { return arch_.crop_size; }
  int embedding_dim() const override { return arch_.embedding_dim; }
  double crop_box_side() const override { return arch_.crop_box_side; }
  MatcherPass run(const Tensor3& crop) const override;

  nn::ConvNet& net() { return net_; }
  const nn::ConvNet& net() const { return net_; }
  const Architecture& architecture() const { return arch_; }

 private:
  Architecture arch_;
  nn::ConvNet net_;
};

/// Throws DomainError if the crop is not crop_size x crop_size.
Embedding embed(const MatcherModel& model, const ImageTensor& crop);

/// Bilinear resampling of `box` to out_size x out_size with pixel-centre
/// alignment. Throws DomainError for a degenerate or out-of-bounds box.
Tensor3 crop_face(const Tensor3& image, const Box& box, int out_size);
ImageTensor crop_face(const ImageTensor& image, const Box& box, int out_size);
/// Adjoint of crop_face: scatters a crop gradient back onto the source pixels.
Tensor3 crop_face_backward(const Shape3& image_shape, const Box& box, int out_size,
                           const Tensor3& d_crop);

/// Square box of `side` around `center`, shifted inside the image.
Box centered_box(Point center, double side, int image_width, int image_height);

struct Verification {
  bool match = false;
  double dist = 0.0;
};

/// Registered identities plus the match threshold theta_m.
struct Gallery {
  std::map<std::string, Embedding> entries;
  double theta = 1.0;
  double p = 2.0;

  const Embedding& at(const std::string& id) const;
  bool contains(const std::string& id) const { return entries.count(id) != 0; }
};

/// match <=> dist <= theta (inclusive). Throws LookupError for an unknown id.
Verification verify(const Gallery& gallery, const Embedding& probe, const std::string& claimed_id);

/// gallery.json holds ids, embedding file names and theta; each embedding is
/// an array file next to it.
void save_gallery(const Gallery& gallery, const std::filesystem::path& json_path);
Gallery load_gallery(const std::filesystem::path& json_path);

struct Calibration {
  double theta = 0.0;
  double eer = 0.0;
  double false_reject = 0.0;
  double false_accept = 0.0;
  /// Set when the two distributions cannot be separated (EER >= 0.5).
  bool degenerate = false;
};

/// Equal-error-rate threshold for the rule match <=> d <= theta. Sweeps the
/// intervals between consecutive observed distances, picks the one where
/// false-reject and false-accept rates are closest, and returns its midpoint.
Calibration calibrate_threshold(std::span<const double> genuine, std::span<const double> impostor);

struct MatcherTrainOptions {
  int epochs = 40;
  std::uint64_t seed = 0;
  int identities_per_batch = 8;
  int images_per_identity = 4;
  double learning_rate = 2e-3;
  double margin = kTripletMargin;
  double p = 2.0;
  double center_jitter = 2.0;
};

struct MatcherTrainReport {
  int epochs = 0;
  double final_loss = 0.0;
  /// EER over held-out image pairs (at least one test image).
  double pair_eer = 0.0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
  /// Gallery threshold calibrated on held-out probes against enrolled means.
  Calibration gallery_calibration;
  double genuine_accept_rate = 0.0;
  double impostor_reject_rate = 0.0;
};

struct TrainedMatcher {
  std::shared_ptr<ReferenceMatcher> model;
  Gallery gallery;
  MatcherTrainReport report;
};

/// Crop of a dataset face around its annotated centre.
Tensor3 annotated_crop(const MatcherModel& model, const synth::Sample& sample, Point jitter = {});

/// Batch-hard triplet-margin training. Deterministic in `seed`. Throws
/// TrainingError with fewer than 2 identities of at least 2 training images.
TrainedMatcher train_matcher(const synth::Dataset& dataset, const MatcherTrainOptions& options);

/// Enrols every identity from its training images (mean embedding,
/// re-normalised) and calibrates theta on held-out probes.
Gallery enroll(const MatcherModel& model, const synth::Dataset& dataset, double p,
               MatcherTrainReport* report = nullptr);

void save_matcher(const ReferenceMatcher& model, const std::filesystem::path& dir);
std::shared_ptr<ReferenceMatcher> load_matcher(const std::filesystem::path& dir);

}  // namespace mofa::matcher

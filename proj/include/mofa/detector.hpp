#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "mofa/core/types.hpp"
#include "mofa/nn/conv_net.hpp"
#include "mofa/synth.hpp"

namespace mofa::detector {

inline constexpr int kWindow = 12;
inline constexpr int kStride = 4;
inline constexpr double kDefaultTau = 0.6;

/// m (horizontal cell count) and n (vertical cell count) of the window grid.
struct GridDims {
  int m = 0;
  int n = 0;
  bool operator==(const GridDims&) const = default;
};

/// m = floor((W-12)/4)+1, n = floor((H-12)/4)+1. Throws DomainError below 12.
GridDims grid_dims(int width, int height);

/// Per-window face probabilities. `probs` is stored rows x cols = n x m, so
/// cell (k, l) of the m x n grid lives at probs(l, k).
struct DetectionMap {
  Grid probs;
  int origin_x = 0;
  int origin_y = 0;
  int stride = kStride;
  int window = kWindow;

  GridDims dims() const { return {probs.cols(), probs.rows()}; }
  /// Pixel window covered by the cell at (row, col).
  Box window_box(int row, int col) const;
};

/// A(k,l) = 1 exactly when the clean-image probability T(k,l) >= tau.
struct ActiveWindowMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> active;
  double tau = kDefaultTau;

  bool at(int row, int col) const { return active[static_cast<std::size_t>(row) * cols + col] != 0; }
  std::size_t count() const;
};

struct Detection {
  bool detected = false;
  double max_prob = 0.0;
  int row = 0;
  int col = 0;
  Box box;
};

/// Forward result plus the vector-Jacobian product back to the input pixels.
struct DetectorPass {
  DetectionMap map;
  std::function<Tensor3(const Grid& d_probs)> pullback;
};

/// Anything that maps an image to a stride-4, 12x12-window probability grid
/// and can back-propagate a grid gradient to the pixels.
class DetectorModel {
 public:
  virtual ~DetectorModel() = default;
  virtual DetectorPass run(const Tensor3& image) const = 0;
  virtual bool supports_gradients() const { return true; }
};

/// 3 ELU conv layers (4x4/2, 3x3/2, 2x2/1: receptive field 12, stride 4)
/// and a 1x1 sigmoid head.
class ReferenceDetector final : public DetectorModel {
 public:
  struct Architecture {
    int channels1 = 8;
    int channels2 = 16;
    int channels3 = 16;
  };

  ReferenceDetector();
  explicit ReferenceDetector(Architecture arch);

  DetectorPass run(const Tensor3& image) const override;
  /// Logits only, without the backward trace.
  Grid logits(const Tensor3& image) const;

  nn::ConvNet& net() { return net_; }
  const nn::ConvNet& net() const { return net_; }
  const Architecture& architecture() const { return arch_; }

 private:
  Architecture arch_;
  nn::ConvNet net_;
};

DetectionMap probability_map(const DetectorModel& model, const ImageTensor& image);
ActiveWindowMask active_windows(const DetectionMap& clean_map, double tau);
ActiveWindowMask active_windows(const DetectorModel& model, const ImageTensor& clean_image, double tau);
/// detected <=> max prob >= tau; ties go to the first cell in row-major order.
Detection detect(const DetectionMap& map, double tau);
Detection detect(const DetectorModel& model, const ImageTensor& image, double tau);

/// Square box of side `side` centred on the mean centre of the active windows
/// (the argmax window when none is active), shifted to lie inside the image.
Box face_box_from_detection(const DetectionMap& map, const ActiveWindowMask& active, double side,
                            int image_width, int image_height);

/// Training label of each window: 1 face, 0 background, -1 ignored.
/// Positive windows have their centre inside the face core (ellipse at 45% of
/// the face semi-axes). Windows centred outside the face oval, or overlapping
/// it by less than 25%, are negatives; the rest are ignored.
std::vector<std::int8_t> window_labels(const std::optional<synth::FaceAnnotation>& face,
                                       int width, int height);

struct DetectorTrainOptions {
  int epochs = 60;
  std::uint64_t seed = 0;
  int batch_size = 8;
  double learning_rate = 3e-3;
  double tau = kDefaultTau;
  /// Chance per face image and epoch of drawing a random thin eyeglass frame
  /// over the eyes. Only the background windows of such an image are trained.
  double occluder_probability = 0.5;
};

struct DetectorTrainReport {
  int epochs = 0;
  double final_loss = 0.0;
  /// Held-out labeled-window accuracy at tau.
  double window_accuracy = 0.0;
  /// Held-out faces (detector-holdout identities and test images) detected at tau.
  double face_detection_rate = 0.0;
  /// Held-out background-only images with no detection at tau.
  double background_rejection_rate = 0.0;
  int heldout_faces = 0;
  int heldout_backgrounds = 0;
};

struct TrainedDetector {
  std::shared_ptr<ReferenceDetector> model;
  DetectorTrainReport report;
};

/// Class-balanced per-window binary cross-entropy with Adam. Deterministic in
/// `seed`. Throws TrainingError when the data lacks negative or positive windows.
TrainedDetector train_detector(const synth::Dataset& dataset, const DetectorTrainOptions& options);

DetectorTrainReport evaluate_detector(const DetectorModel& model, const synth::Dataset& dataset,
                                      double tau);

void save_detector(const ReferenceDetector& model, const std::filesystem::path& dir);
std::shared_ptr<ReferenceDetector> load_detector(const std::filesystem::path& dir);

}  // namespace mofa::detector

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mofa/core/tensor.hpp"

namespace mofa {

/// Minimum image side: one detector window.
inline constexpr int kMinImageSide = 12;

/// An RGB image in height x width x channels layout with every value in [0,1].
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Throws DomainError if any value is non-finite, outside [0,1], or the
  /// image is smaller than one detector window.
  explicit ImageTensor(Tensor3 pixels);

  const Tensor3& pixels() const { return pixels_; }
  const Shape3& shape() const { return pixels_.shape(); }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  int channels() const { return pixels_.channels(); }
  double operator()(int y, int x, int c) const { return pixels_(y, x, c); }

  bool operator==(const ImageTensor&) const = default;

 private:
  Tensor3 pixels_;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Axis-aligned box in pixel coordinates; (x0, y0) is the top-left corner.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 0.0;
  double height = 0.0;

  double x1() const { return x0 + width; }
  double y1() const { return y0 + height; }
  Point center() const { return {x0 + width / 2.0, y0 + height / 2.0}; }
  bool contains(Point p) const { return p.x >= x0 && p.x <= x1() && p.y >= y0 && p.y <= y1(); }
  bool operator==(const Box&) const = default;
};

enum class MaskStyle { thin, large };

std::string_view to_string(MaskStyle style);
MaskStyle parse_mask_style(std::string_view text);

/// Binary per-pixel support confining adversarial noise.
class PatchMask {
 public:
  PatchMask() = default;
  PatchMask(int height, int width, MaskStyle style, Point eye_left = {}, Point eye_right = {});

  int height() const { return height_; }
  int width() const { return width_; }
  MaskStyle style() const { return style_; }
  Point eye_left() const { return eye_left_; }
  Point eye_right() const { return eye_right_; }

  bool contains(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool on = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }
  std::size_t area() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const PatchMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  MaskStyle style_ = MaskStyle::thin;
  Point eye_left_{};
  Point eye_right_{};
  std::vector<std::uint8_t> bits_;
};

/// Additive noise whose support is confined to a patch mask.
class AdversarialNoise {
 public:
  AdversarialNoise() = default;
  /// Throws DomainError if shapes disagree or delta is non-zero off the mask.
  AdversarialNoise(Tensor3 delta, std::shared_ptr<const PatchMask> support);

  const Tensor3& delta() const { return delta_; }
  const PatchMask& support() const { return *support_; }
  std::shared_ptr<const PatchMask> support_ptr() const { return support_; }

 private:
  Tensor3 delta_;
  std::shared_ptr<const PatchMask> support_;
};

/// clamp(image + delta) into [0,1].
ImageTensor apply_noise(const ImageTensor& image, const Tensor3& delta);
ImageTensor apply_noise(const ImageTensor& image, const AdversarialNoise& noise);

struct Identity {
  std::string id;
  std::vector<ImageTensor> images;

  /// Throws DomainError on an empty list or mixed channel counts.
  void validate() const;
};

enum class AttackMode { di, de, ue };

std::string_view to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view text);

struct AttackConfig {
  AttackMode mode = AttackMode::di;
  double alpha = 1.0;
  double exponent_s = 3.0;
  double margin_k = 0.95;
  double detect_threshold_tau = 0.6;
  double p_norm = 2.0;
  int iterations = 500;
  double step_size = 1.0 / 255.0;
  std::uint64_t seed = 0;
  int repeats = 3;
  MaskStyle mask_size = MaskStyle::large;
  /// Weight on the matcher term; 1 for every multi-objective attack, 0 for
  /// detector-only baselines.
  double matcher_weight = 1.0;
  /// Target identity (DI).
  std::string target;
  /// Registered image of the adversary's true identity (DE, UE).
  std::string registered;

  /// Mode-specific defaults: K = 0.95 and the large mask for DI/DE,
  /// K = 0.30 and the thin mask for UE.
  static AttackConfig defaults_for(AttackMode mode);

  /// Throws ConfigError on any out-of-range field or missing mode argument.
  void validate() const;
};

}  // namespace mofa

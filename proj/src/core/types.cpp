#include "mofa/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mofa/core/errors.hpp"

namespace mofa {

Tensor3::Tensor3(Shape3 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw DomainError("tensor data size " + std::to_string(data_.size()) +
                      " does not match shape size " + std::to_string(shape_.size()));
  }
}

ImageTensor::ImageTensor(Tensor3 pixels) : pixels_(std::move(pixels)) {
  if (pixels_.height() < kMinImageSide || pixels_.width() < kMinImageSide) {
    throw DomainError("image " + std::to_string(pixels_.width()) + "x" +
                      std::to_string(pixels_.height()) + " is smaller than one 12x12 window");
  }
  if (pixels_.channels() <= 0) throw DomainError("image has no channels");
  for (double v : pixels_.data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DomainError("image value outside [0,1]: " + std::to_string(v));
    }
  }
}

std::string_view to_string(MaskStyle style) {
  return style == MaskStyle::thin ? "thin" : "large";
}

MaskStyle parse_mask_style(std::string_view text) {
  if (text == "thin") return MaskStyle::thin;
  if (text == "large") return MaskStyle::large;
  throw ConfigError("unknown mask size '" + std::string(text) + "' (expected thin|large)");
}

PatchMask::PatchMask(int height, int width, MaskStyle style, Point eye_left, Point eye_right)
    : height_(height),
      width_(width),
      style_(style),
      eye_left_(eye_left),
      eye_right_(eye_right),
      bits_(static_cast<std::size_t>(height) * width, 0) {}

std::size_t PatchMask::area() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

AdversarialNoise::AdversarialNoise(Tensor3 delta, std::shared_ptr<const PatchMask> support)
    : delta_(std::move(delta)), support_(std::move(support)) {
  if (!support_) throw DomainError("noise requires a support mask");
  if (delta_.height() != support_->height() || delta_.width() != support_->width()) {
    throw DomainError("noise and mask shapes differ");
  }
  for (int y = 0; y < delta_.height(); ++y) {
    for (int x = 0; x < delta_.width(); ++x) {
      if (support_->contains(y, x)) continue;
      for (int c = 0; c < delta_.channels(); ++c) {
        if (delta_(y, x, c) != 0.0) throw DomainError("noise is non-zero outside its mask");
      }
    }
  }
}

ImageTensor apply_noise(const ImageTensor& image, const Tensor3& delta) {
  if (delta.shape() != image.shape()) throw DomainError("noise shape differs from image shape");
  Tensor3 out = image.pixels();
  auto dst = out.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp(dst[i] + src[i], 0.0, 1.0);
  return ImageTensor(std::move(out));
}

ImageTensor apply_noise(const ImageTensor& image, const AdversarialNoise& noise) {
  return apply_noise(image, noise.delta());
}

void Identity::validate() const {
  if (images.empty()) throw DomainError("identity '" + id + "' has no images");
  for (const auto& img : images) {
    if (img.channels() != images.front().channels()) {
      throw DomainError("identity '" + id + "' mixes channel counts");
    }
  }
}

std::string_view to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::di: return "di";
    case AttackMode::de: return "de";
    case AttackMode::ue: return "ue";
  }
  return "?";
}

AttackMode parse_attack_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "di") return AttackMode::di;
  if (lower == "de") return AttackMode::de;
  if (lower == "ue") return AttackMode::ue;
  throw ConfigError("unknown attack mode '" + std::string(text) + "' (expected di|de|ue)");
}

AttackConfig AttackConfig::defaults_for(AttackMode mode) {
  AttackConfig cfg;
  cfg.mode = mode;
  if (mode == AttackMode::ue) {
    cfg.margin_k = 0.30;
    cfg.mask_size = MaskStyle::thin;
  }
  return cfg;
}

void AttackConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be a finite nonnegative real");
  if (!(exponent_s > 0.0) || !std::isfinite(exponent_s)) fail("exponent_s must be positive");
  if (!(margin_k >= 0.0 && margin_k <= 1.0)) fail("margin_k must lie in [0,1]");
  if (!(detect_threshold_tau > 0.0 && detect_threshold_tau < 1.0)) {
    fail("detect_threshold_tau must lie in (0,1)");
  }
  if (!(p_norm > 0.0) || !std::isfinite(p_norm)) fail("p_norm must be positive");
  if (iterations < 0) fail("iterations must be nonnegative");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) fail("step_size must be positive");
  if (repeats <= 0) fail("repeats must be positive");
  if (!(matcher_weight >= 0.0) || !std::isfinite(matcher_weight)) {
    fail("matcher_weight must be a finite nonnegative real");
  }
  if (mode == AttackMode::di && target.empty()) fail("mode di requires a target identity");
  if (mode != AttackMode::di && registered.empty()) {
    fail("mode " + std::string(to_string(mode)) + " requires a registered image");
  }
}

}  // namespace mofa

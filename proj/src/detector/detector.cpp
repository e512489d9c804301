#include "mofa/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mofa/core/errors.hpp"
#include "mofa/nn/checkpoint.hpp"

namespace mofa::detector {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor3 centered(const Tensor3& image) {
  Tensor3 x = image;
  for (auto& v : x.data()) v -= 0.5;
  return x;
}

}  // namespace

GridDims grid_dims(int width, int height) {
  if (width < kWindow || height < kWindow) {
    throw DomainError("image " + std::to_string(width) + "x" + std::to_string(height) +
                      " is smaller than one 12x12 window");
  }
  return {(width - kWindow) / kStride + 1, (height - kWindow) / kStride + 1};
}

Box DetectionMap::window_box(int row, int col) const {
  return {static_cast<double>(origin_x + col * stride), static_cast<double>(origin_y + row * stride),
          static_cast<double>(window), static_cast<double>(window)};
}

std::size_t ActiveWindowMask::count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

ReferenceDetector::ReferenceDetector() : ReferenceDetector(Architecture{}) {}

ReferenceDetector::ReferenceDetector(Architecture arch)
    : arch_(arch),
      net_(3, {{arch.channels1, 4, 2, true},
               {arch.channels2, 3, 2, true},
               {arch.channels3, 2, 1, true},
               {1, 1, 1, false}}) {}

DetectorPass ReferenceDetector::run(const Tensor3& image) const {
  grid_dims(image.width(), image.height());
  auto trace = std::make_shared<nn::ConvNet::Trace>();
  Tensor3 logits = net_.forward(centered(image), trace.get());

  DetectorPass pass;
  pass.map.probs = Grid(logits.height(), logits.width());
  auto probs = pass.map.probs.data();
  auto z = logits.data();
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = sigmoid(z[i]);

  pass.pullback = [this, trace, probs_copy = pass.map.probs](const Grid& d_probs) {
    if (d_probs.rows() != probs_copy.rows() || d_probs.cols() != probs_copy.cols()) {
      throw DomainError("probability gradient has the wrong grid shape");
    }
    Tensor3 d_logits(probs_copy.rows(), probs_copy.cols(), 1);
    auto dl = d_logits.data();
    auto p = probs_copy.data();
    auto dp = d_probs.data();
    for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = dp[i] * p[i] * (1.0 - p[i]);
    return net_.backward(*trace, d_logits, nullptr, true);
  };
  return pass;
}

Grid ReferenceDetector::logits(const Tensor3& image) const {
  grid_dims(image.width(), image.height());
  Tensor3 z = net_.forward(centered(image));
  Grid out(z.height(), z.width());
  std::copy(z.data().begin(), z.data().end(), out.data().begin());
  return out;
}

DetectionMap probability_map(const DetectorModel& model, const ImageTensor& image) {
  return model.run(image.pixels()).map;
}

ActiveWindowMask active_windows(const DetectionMap& clean_map, double tau) {
  ActiveWindowMask mask;
  mask.rows = clean_map.probs.rows();
  mask.cols = clean_map.probs.cols();
  mask.tau = tau;
  mask.active.resize(clean_map.probs.size());
  auto p = clean_map.probs.data();
  for (std::size_t i = 0; i < p.size(); ++i) mask.active[i] = p[i] >= tau ? 1 : 0;
  return mask;
}

ActiveWindowMask active_windows(const DetectorModel& model, const ImageTensor& clean_image,
                                double tau) {
  return active_windows(probability_map(model, clean_image), tau);
}

Detection detect(const DetectionMap& map, double tau) {
  Detection d;
  if (map.probs.size() == 0) return d;
  d.max_prob = map.probs(0, 0);
  for (int r = 0; r < map.probs.rows(); ++r) {
    for (int c = 0; c < map.probs.cols(); ++c) {
      if (map.probs(r, c) > d.max_prob) {
        d.max_prob = map.probs(r, c);
        d.row = r;
        d.col = c;
      }
    }
  }
  d.detected = d.max_prob >= tau;
  d.box = map.window_box(d.row, d.col);
  return d;
}

Detection detect(const DetectorModel& model, const ImageTensor& image, double tau) {
  return detect(probability_map(model, image), tau);
}

Box face_box_from_detection(const DetectionMap& map, const ActiveWindowMask& active, double side,
                            int image_width, int image_height) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < active.rows; ++r) {
    for (int c = 0; c < active.cols; ++c) {
      if (!active.at(r, c)) continue;
      auto center = map.window_box(r, c).center();
      sx += center.x;
      sy += center.y;
      ++n;
    }
  }
  Point center;
  if (n > 0) {
    center = {sx / static_cast<double>(n), sy / static_cast<double>(n)};
  } else {
    center = detect(map, 1.0).box.center();
  }
  side = std::min({side, static_cast<double>(image_width), static_cast<double>(image_height)});
  double x0 = std::clamp(center.x - side / 2.0, 0.0, image_width - side);
  double y0 = std::clamp(center.y - side / 2.0, 0.0, image_height - side);
  return {x0, y0, side, side};
}

std::vector<std::int8_t> window_labels(const std::optional<synth::FaceAnnotation>& face,
                                       int width, int height) {
  constexpr double kCoreRatio = 0.45;
  // Centres beyond this multiple of the core radius are background.
  constexpr double kOuterRatio = 1.0;
  const GridDims dims = grid_dims(width, height);
  std::vector<std::int8_t> labels(static_cast<std::size_t>(dims.m) * dims.n, 0);
  if (!face) return labels;
  for (int r = 0; r < dims.n; ++r) {
    for (int c = 0; c < dims.m; ++c) {
      const double x0 = c * kStride;
      const double y0 = r * kStride;
      const double cx = (x0 + kWindow / 2.0 - face->center.x) / (kCoreRatio * face->semi_x);
      const double cy = (y0 + kWindow / 2.0 - face->center.y) / (kCoreRatio * face->semi_y);
      const double r2 = cx * cx + cy * cy;
      std::int8_t label;
      if (r2 <= 1.0) {
        label = 1;
      } else if (r2 > kOuterRatio * kOuterRatio) {
        label = 0;
      } else {
        int inside = 0;
        for (int y = 0; y < kWindow; ++y) {
          for (int x = 0; x < kWindow; ++x) {
            double dx = (x0 + x + 0.5 - face->center.x) / face->semi_x;
            double dy = (y0 + y + 0.5 - face->center.y) / face->semi_y;
            if (dx * dx + dy * dy <= 1.0) ++inside;
          }
        }
        label = inside < 0.25 * kWindow * kWindow ? 0 : -1;
      }
      labels[static_cast<std::size_t>(r) * dims.m + c] = label;
    }
  }
  return labels;
}

void save_detector(const ReferenceDetector& model, const std::filesystem::path& dir) {
  const auto& a = model.architecture();
  nn::save_net(model.net(),
               {{"kind", "reference_detector"},
                {"window", kWindow},
                {"stride", kStride},
                {"receptive_field", model.net().receptive_field()},
                {"input_offset", -0.5},
                {"output", "sigmoid"},
                {"channels", {a.channels1, a.channels2, a.channels3}}},
               dir);
}

std::shared_ptr<ReferenceDetector> load_detector(const std::filesystem::path& dir) {
  auto [net, arch] = nn::load_net(dir);
  if (arch.value("kind", "") != "reference_detector") {
    throw FormatError(dir.string() + " is not a reference detector checkpoint");
  }
  ReferenceDetector::Architecture a;
  const auto& ch = arch.at("channels");
  a.channels1 = ch.at(0).get<int>();
  a.channels2 = ch.at(1).get<int>();
  a.channels3 = ch.at(2).get<int>();
  auto model = std::make_shared<ReferenceDetector>(a);
  if (model->net().parameter_count() != net.parameter_count()) {
    throw CorruptionError("detector checkpoint does not match its architecture");
  }
  model->net() = std::move(net);
  return model;
}

}  // namespace mofa::detector

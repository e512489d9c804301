#include <algorithm>
#include <cmath>
#include <numeric>

#include "mofa/core/errors.hpp"
#include "mofa/core/random.hpp"
#include "mofa/detector.hpp"
#include "mofa/masks.hpp"

namespace mofa::detector {

namespace {

struct LabeledImage {
  const Tensor3* pixels;
  std::vector<std::int8_t> labels;
  std::shared_ptr<const PatchMask> frame;
};

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

DetectorTrainReport evaluate_detector(const DetectorModel& model, const synth::Dataset& dataset,
                                      double tau) {
  DetectorTrainReport r;
  std::size_t correct = 0;
  std::size_t labeled = 0;
  int faces_hit = 0;
  int bg_clean = 0;
  auto score_windows = [&](const DetectionMap& map, const std::vector<std::int8_t>& labels) {
    auto p = map.probs.data();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0) continue;
      ++labeled;
      if ((p[i] >= tau) == (labels[i] == 1)) ++correct;
    }
  };
  for (const auto& s : dataset.faces) {
    if (s.train && dataset.detector_trains_on(s.identity_index)) continue;
    const auto& img = s.rendered.image;
    auto map = probability_map(model, img);
    score_windows(map, window_labels(s.rendered.face, img.width(), img.height()));
    if (detect(map, tau).detected) ++faces_hit;
    ++r.heldout_faces;
  }
  for (const auto& s : dataset.negatives) {
    if (s.train) continue;
    const auto& img = s.rendered.image;
    auto map = probability_map(model, img);
    score_windows(map, window_labels(std::nullopt, img.width(), img.height()));
    if (!detect(map, tau).detected) ++bg_clean;
    ++r.heldout_backgrounds;
  }
  r.window_accuracy = labeled ? static_cast<double>(correct) / static_cast<double>(labeled) : 0.0;
  r.face_detection_rate = r.heldout_faces ? static_cast<double>(faces_hit) / r.heldout_faces : 0.0;
  r.background_rejection_rate =
      r.heldout_backgrounds ? static_cast<double>(bg_clean) / r.heldout_backgrounds : 0.0;
  return r;
}

TrainedDetector train_detector(const synth::Dataset& dataset, const DetectorTrainOptions& options) {
  if (options.epochs < 0) throw TrainingError("epochs must be nonnegative");
  if (options.batch_size <= 0) throw TrainingError("batch size must be positive");

  std::vector<LabeledImage> train;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  auto add = [&](const synth::Sample& s) {
    const auto& img = s.rendered.image;
    LabeledImage li{&img.pixels(), window_labels(s.rendered.face, img.width(), img.height()), nullptr};
    if (s.rendered.face && options.occluder_probability > 0.0) {
      li.frame = std::make_shared<const PatchMask>(masks::eyeglass_mask(
          s.rendered.face->eye_left, s.rendered.face->eye_right, img.height(), img.width(), MaskStyle::thin));
    }
    n_pos += static_cast<std::size_t>(std::count(li.labels.begin(), li.labels.end(), 1));
    n_neg += static_cast<std::size_t>(std::count(li.labels.begin(), li.labels.end(), 0));
    train.push_back(std::move(li));
  };
  for (const auto& s : dataset.faces) {
    if (s.train && dataset.detector_trains_on(s.identity_index)) add(s);
  }
  for (const auto& s : dataset.negatives) {
    if (s.train) add(s);
  }
  if (n_neg == 0) throw TrainingError("training data has no negative (background) windows");
  if (n_pos == 0) throw TrainingError("training data has no positive (face) windows");

  auto model = std::make_shared<ReferenceDetector>();
  auto& net = model->net();
  net.initialize(mix_seed(options.seed, 0xde7));
  nn::Adam adam(net.parameters(), options.learning_rate);
  Rng rng(mix_seed(options.seed, 0x5a));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double last_loss = 0.0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (epoch == (options.epochs * 7) / 10) adam.set_learning_rate(options.learning_rate * 0.3);
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::size_t pos = 0;
      std::size_t neg = 0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& l = train[order[i]].labels;
        pos += static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
        neg += static_cast<std::size_t>(std::count(l.begin(), l.end(), 0));
      }
      const double w_pos = pos ? 0.5 / static_cast<double>(pos) : 0.0;
      const double w_neg = neg ? 0.5 / static_cast<double>(neg) : 0.0;
      auto grads = net.zero_gradients();
      for (std::size_t i = start; i < end; ++i) {
        const auto& item = train[order[i]];
        nn::ConvNet::Trace trace;
        Tensor3 x = *item.pixels;
        const bool occluded = item.frame && rng.uniform() < options.occluder_probability;
        if (occluded) {
          x = apply_noise(ImageTensor(x), masks::random_patch(item.frame, rng.index(1ull << 62))).pixels();
        }
        for (auto& v : x.data()) v -= 0.5;
        Tensor3 z = net.forward(x, &trace);
        Tensor3 dz(z.height(), z.width(), 1);
        auto zv = z.data();
        auto dv = dz.data();
        for (std::size_t k = 0; k < item.labels.size(); ++k) {
          const auto label = item.labels[k];
          if (label < 0 || (occluded && label == 1)) continue;
          const double w = label == 1 ? w_pos : w_neg;
          const double y = label == 1 ? 1.0 : 0.0;
          epoch_loss += w * (softplus(zv[k]) - y * zv[k]);
          const double p = 1.0 / (1.0 + std::exp(-zv[k]));
          dv[k] = w * (p - y);
        }
        net.backward(trace, dz, &grads, false);
      }
      adam.step(net.parameters(), grads);
    }
    last_loss = epoch_loss;
  }
  net.round_to_float();

  TrainedDetector out{model, evaluate_detector(*model, dataset, options.tau)};
  out.report.epochs = options.epochs;
  out.report.final_loss = last_loss;
  return out;
}

}  // namespace mofa::detector

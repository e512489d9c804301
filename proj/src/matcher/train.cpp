#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mofa/core/errors.hpp"
#include "mofa/core/random.hpp"
#include "mofa/matcher.hpp"

namespace mofa::matcher {

namespace {

struct Forward {
  nn::ConvNet::Trace trace;
  std::vector<double> raw;
  double norm = 0.0;
  std::vector<double> unit;
};

Forward forward(const nn::ConvNet& net, Tensor3 crop) {
  Forward f;
  for (auto& v : crop.data()) v -= 0.5;
  Tensor3 z = net.forward(crop, &f.trace);
  f.raw.assign(z.data().begin(), z.data().end());
  for (double v : f.raw) f.norm += v * v;
  f.norm = std::max(std::sqrt(f.norm), 1e-12);
  f.unit = f.raw;
  for (double& v : f.unit) v /= f.norm;
  return f;
}

double rate(std::size_t k, std::size_t n) {
  return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0;
}

}  // namespace

Tensor3 annotated_crop(const MatcherModel& model, const synth::Sample& sample, Point jitter) {
  if (!sample.rendered.face) throw DomainError("sample has no face annotation");
  const auto& img = sample.rendered.image;
  Point c = sample.rendered.face->center;
  c.x += jitter.x;
  c.y += jitter.y;
  Box box = centered_box(c, model.crop_box_side(), img.width(), img.height());
  return crop_face(img.pixels(), box, model.crop_size());
}

Gallery enroll(const MatcherModel& model, const synth::Dataset& dataset, double p,
               MatcherTrainReport* report) {
  const int n_ids = static_cast<int>(dataset.identity_ids.size());
  std::vector<Embedding> embeddings;
  embeddings.reserve(dataset.faces.size());
  for (const auto& s : dataset.faces) embeddings.push_back(model.run(annotated_crop(model, s)).embedding);

  Gallery g;
  g.p = p;
  for (int id = 0; id < n_ids; ++id) {
    std::vector<double> mean(static_cast<std::size_t>(model.embedding_dim()), 0.0);
    int n = 0;
    for (auto idx : dataset.faces_of(id)) {
      if (!dataset.faces[idx].train) continue;
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += embeddings[idx][k];
      ++n;
    }
    if (n == 0) throw TrainingError("identity " + dataset.identity_ids[id] + " has no training images");
    auto e = Embedding::normalized(std::move(mean));
    std::vector<double> stored(e.values().begin(), e.values().end());
    for (double& v : stored) v = static_cast<double>(static_cast<float>(v));
    g.entries.emplace(dataset.identity_ids[id], Embedding::from_unit(std::move(stored)));
  }

  std::vector<double> genuine;
  std::vector<double> impostor;
  for (std::size_t i = 0; i < dataset.faces.size(); ++i) {
    const auto& s = dataset.faces[i];
    if (s.train) continue;
    for (int id = 0; id < n_ids; ++id) {
      const double d = distance(g.at(dataset.identity_ids[id]), embeddings[i], p);
      (id == s.identity_index ? genuine : impostor).push_back(d);
    }
  }
  if (genuine.empty()) throw TrainingError("no held-out probes to calibrate the gallery threshold");
  Calibration cal = calibrate_threshold(genuine, impostor);
  g.theta = cal.theta;

  if (report) {
    report->gallery_calibration = cal;
    const auto accepted = std::count_if(genuine.begin(), genuine.end(), [&](double d) { return d <= g.theta; });
    const auto rejected = std::count_if(impostor.begin(), impostor.end(), [&](double d) { return d > g.theta; });
    report->genuine_accept_rate = rate(static_cast<std::size_t>(accepted), genuine.size());
    report->impostor_reject_rate = rate(static_cast<std::size_t>(rejected), impostor.size());

    std::vector<double> pair_genuine;
    std::vector<double> pair_impostor;
    auto heldout = [&](std::size_t a, std::size_t b) { return !dataset.faces[a].train || !dataset.faces[b].train; };
    for (auto [a, b] : dataset.genuine_pairs()) {
      if (heldout(a, b)) pair_genuine.push_back(distance(embeddings[a], embeddings[b], p));
    }
    for (auto [a, b] : dataset.impostor_pairs()) {
      if (heldout(a, b)) pair_impostor.push_back(distance(embeddings[a], embeddings[b], p));
    }
    report->genuine_pairs = pair_genuine.size();
    report->impostor_pairs = pair_impostor.size();
    report->pair_eer = calibrate_threshold(pair_genuine, pair_impostor).eer;
  }
  return g;
}

TrainedMatcher train_matcher(const synth::Dataset& dataset, const MatcherTrainOptions& options) {
  if (options.epochs < 0) throw TrainingError("epochs must be nonnegative");
  if (options.identities_per_batch < 2 || options.images_per_identity < 2) {
    throw TrainingError("a triplet batch needs at least 2 identities with 2 images each");
  }

  std::vector<std::vector<std::size_t>> pools;
  std::size_t n_train = 0;
  for (int id = 0; id < static_cast<int>(dataset.identity_ids.size()); ++id) {
    std::vector<std::size_t> pool;
    for (auto idx : dataset.faces_of(id)) {
      if (dataset.faces[idx].train) pool.push_back(idx);
    }
    n_train += pool.size();
    if (pool.size() >= 2) pools.push_back(std::move(pool));
  }
  if (pools.size() < 2) throw TrainingError("need at least 2 identities with 2 training images");

  auto model = std::make_shared<ReferenceMatcher>();
  auto& net = model->net();
  net.initialize(mix_seed(options.seed, 0xe3b));
  nn::Adam adam(net.parameters(), options.learning_rate);
  Rng rng(mix_seed(options.seed, 0x7a));

  const std::size_t ids_per_batch = std::min<std::size_t>(options.identities_per_batch, pools.size());
  const std::size_t per_id = static_cast<std::size_t>(options.images_per_identity);
  const std::size_t batch = ids_per_batch * per_id;
  const std::size_t steps = std::max<std::size_t>(1, (n_train + batch - 1) / batch);

  double last_loss = 0.0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (epoch == (options.epochs * 7) / 10) adam.set_learning_rate(options.learning_rate * 0.3);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::size_t> ids(pools.size());
      std::iota(ids.begin(), ids.end(), 0);
      for (std::size_t i = 0; i < ids_per_batch; ++i) std::swap(ids[i], ids[i + rng.index(ids.size() - i)]);

      std::vector<Forward> fw;
      std::vector<std::size_t> label;
      for (std::size_t i = 0; i < ids_per_batch; ++i) {
        auto pool = pools[ids[i]];
        for (std::size_t k = 0; k < per_id; ++k) {
          std::size_t pick;
          if (k < pool.size()) {
            std::swap(pool[k], pool[k + rng.index(pool.size() - k)]);
            pick = pool[k];
          } else {
            pick = pool[rng.index(pool.size())];
          }
          Point jitter{rng.uniform(-options.center_jitter, options.center_jitter),
                       rng.uniform(-options.center_jitter, options.center_jitter)};
          fw.push_back(forward(net, annotated_crop(*model, dataset.faces[pick], jitter)));
          label.push_back(i);
        }
      }

      const std::size_t n = fw.size();
      std::vector<double> dist(n * n, 0.0);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
          dist[a * n + b] = dist[b * n + a] = distance(fw[a].unit, fw[b].unit, options.p);
        }
      }
      std::vector<std::vector<double>> d_unit(n, std::vector<double>(fw[0].unit.size(), 0.0));
      auto accumulate = [&](std::size_t anchor, std::size_t other, double sign) {
        // d dist(anchor, other) flows to both ends.
        auto g = distance_gradient(fw[anchor].unit, fw[other].unit, options.p);
        for (std::size_t k = 0; k < g.size(); ++k) {
          d_unit[other][k] += sign * g[k];
          d_unit[anchor][k] -= sign * g[k];
        }
      };
      double loss = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        std::size_t hardest_pos = a;
        std::size_t hardest_neg = a;
        double d_pos = -1.0;
        double d_neg = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < n; ++b) {
          if (b == a) continue;
          const double d = dist[a * n + b];
          if (label[b] == label[a]) {
            if (d > d_pos) d_pos = d, hardest_pos = b;
          } else if (d < d_neg) {
            d_neg = d, hardest_neg = b;
          }
        }
        const double hinge = options.margin + d_pos - d_neg;
        if (hardest_pos == a || hardest_neg == a || hinge <= 0.0) continue;
        loss += hinge / static_cast<double>(n);
        accumulate(a, hardest_pos, 1.0 / static_cast<double>(n));
        accumulate(a, hardest_neg, -1.0 / static_cast<double>(n));
      }
      epoch_loss += loss;

      auto grads = net.zero_gradients();
      for (std::size_t i = 0; i < n; ++i) {
        const auto& f = fw[i];
        double dot = 0.0;
        for (std::size_t k = 0; k < f.unit.size(); ++k) dot += f.unit[k] * d_unit[i][k];
        Tensor3 dz(1, 1, static_cast<int>(f.unit.size()));
        auto dzv = dz.data();
        for (std::size_t k = 0; k < f.unit.size(); ++k) dzv[k] = (d_unit[i][k] - f.unit[k] * dot) / f.norm;
        net.backward(f.trace, dz, &grads, false);
      }
      adam.step(net.parameters(), grads);
    }
    last_loss = epoch_loss / static_cast<double>(steps);
  }
  net.round_to_float();

  TrainedMatcher out;
  out.model = model;
  out.report.epochs = options.epochs;
  out.report.final_loss = last_loss;
  out.gallery = enroll(*model, dataset, options.p, &out.report);
  return out;
}

}  // namespace mofa::matcher

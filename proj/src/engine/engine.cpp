#include "mofa/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "mofa/core/errors.hpp"
#include "mofa/masks.hpp"

namespace mofa::engine {

namespace {

Tensor3 compose(const ImageTensor& source, const Tensor3& delta) {
  Tensor3 x = source.pixels();
  auto xv = x.data();
  auto dv = delta.data();
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = std::clamp(xv[i] + dv[i], 0.0, 1.0);
  return x;
}

// Rounds each entry to float32, stepping one ulp towards zero where rounding
// would push source + delta out of [0,1].
Tensor3 round_to_float(const ImageTensor& source, Tensor3 t) {
  auto tv = t.data();
  auto sv = source.pixels().data();
  for (std::size_t i = 0; i < tv.size(); ++i) {
    float f = static_cast<float>(tv[i]);
    while (sv[i] + f > 1.0) f = std::nextafter(f, -1.0f);
    while (sv[i] + f < 0.0) f = std::nextafter(f, 1.0f);
    tv[i] = f;
  }
  return t;
}

void check_models(const detector::DetectorModel& detector, const matcher::MatcherModel& matcher) {
  if (!detector.supports_gradients()) throw CapabilityError("detector does not provide gradients");
  if (!matcher.supports_gradients()) throw CapabilityError("matcher does not provide gradients");
}

}  // namespace

Tensor3 project_to_pixel_range(const ImageTensor& source, Tensor3 delta) {
  if (delta.shape() != source.shape()) throw DomainError("noise shape differs from image shape");
  auto dv = delta.data();
  auto sv = source.pixels().data();
  for (std::size_t i = 0; i < dv.size(); ++i) {
    if (dv[i] != 0.0) dv[i] = std::clamp(sv[i] + dv[i], 0.0, 1.0) - sv[i];
  }
  return delta;
}

AdversarialNoise pgd_step(const AdversarialNoise& delta, const Tensor3& grad, double step_size,
                          const ImageTensor& source, int iteration) {
  if (grad.shape() != delta.delta().shape()) throw DomainError("gradient shape differs from noise shape");
  const PatchMask& mask = delta.support();
  Tensor3 next = delta.delta();
  const int channels = next.channels();
  for (int y = 0; y < next.height(); ++y) {
    for (int x = 0; x < next.width(); ++x) {
      const bool on = mask.contains(y, x);
      for (int c = 0; c < channels; ++c) {
        const double g = grad(y, x, c);
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient at iteration " + std::to_string(iteration));
        }
        if (!on) {
          next(y, x, c) = 0.0;
          continue;
        }
        const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        const double s = source(y, x, c);
        next(y, x, c) = std::clamp(s + next(y, x, c) - step_size * sign, 0.0, 1.0) - s;
      }
    }
  }
  return AdversarialNoise(std::move(next), delta.support_ptr());
}

matcher::Embedding embed_detected(const detector::DetectorModel& detector,
                                  const matcher::MatcherModel& matcher, const ImageTensor& image,
                                  double tau) {
  auto map = detector::probability_map(detector, image);
  auto active = detector::active_windows(map, tau);
  Box box = detector::face_box_from_detection(map, active, matcher.crop_box_side(), image.width(),
                                              image.height());
  return matcher.run(matcher::crop_face(image.pixels(), box, matcher.crop_size())).embedding;
}

AttackRun generate(const detector::DetectorModel& detector, const matcher::MatcherModel& matcher,
                   const AttackSource& source, const AttackReference& other, const AttackConfig& config,
                   const IterationHook& hook) {
  config.validate();
  check_models(detector, matcher);
  if (other.embedding.dim() != static_cast<std::size_t>(matcher.embedding_dim())) {
    throw ConfigError("reference embedding has dimension " + std::to_string(other.embedding.dim()) +
                      ", matcher produces " + std::to_string(matcher.embedding_dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  const ImageTensor& src = source.image;
  const double tau = config.detect_threshold_tau;
  const bool evasive = losses::uses_evasive_detection(config.mode);
  const bool impersonate = losses::uses_impersonation(config.mode);

  AttackRun run;
  run.config = config;
  run.source_ref = source.ref;
  run.source_identity = source.identity;
  run.image_index = source.image_index;
  run.other_ref = other.ref.empty() ? other.identity : other.ref;
  run.seed = config.seed;
  run.source = src;
  run.mask = std::make_shared<const PatchMask>(
      masks::eyeglass_mask(source.eye_left, source.eye_right, src.height(), src.width(), config.mask_size));

  const auto clean_map = detector::probability_map(detector, src);
  run.active = detector::active_windows(clean_map, tau);
  run.crop_box = detector::face_box_from_detection(clean_map, run.active, matcher.crop_box_side(),
                                                   src.width(), src.height());

  const auto init = masks::random_patch(run.mask, config.seed, src.channels());
  run.initial_noise =
      AdversarialNoise(round_to_float(src, project_to_pixel_range(src, init.delta())), run.mask);

  AdversarialNoise delta = run.initial_noise;
  AdversarialNoise best = delta;
  double best_total = 0.0;
  const auto target = other.embedding.values();
  for (int it = 0; it < config.iterations; ++it) {
    if (hook) hook(it, delta);
    const Tensor3 x = compose(src, delta.delta());
    auto det = detector.run(x);
    Grid d_probs;
    const double det_term =
        evasive ? losses::det_loss_evasive(det.map, run.active, config.margin_k, config.exponent_s, &d_probs)
                : losses::det_loss_detectable(det.map, run.active, config.margin_k, config.exponent_s,
                                              &d_probs);
    const Tensor3 crop = matcher::crop_face(x, run.crop_box, matcher.crop_size());
    auto m = matcher.run(crop);
    std::vector<double> d_embedding;
    const double matcher_term =
        impersonate ? losses::imper_loss(target, m.embedding.values(), config.p_norm, &d_embedding)
                    : losses::evasion_loss(target, m.embedding.values(), config.p_norm, &d_embedding);
    const auto terms = losses::total_loss(config.mode, det_term, matcher_term, config.alpha,
                                          config.matcher_weight);
    if (!std::isfinite(terms.total)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(it));
    }
    run.trace.push_back(terms);
    if (it == 0 || terms.total < best_total) {
      best_total = terms.total;
      best = delta;
      run.best_iteration = it;
    }

    Tensor3 grad(src.height(), src.width(), src.channels());
    if (config.alpha != 0.0) {
      for (auto& g : d_probs.data()) g *= config.alpha;
      grad = det.pullback(d_probs);
    }
    if (config.matcher_weight != 0.0) {
      for (auto& g : d_embedding) g *= config.matcher_weight;
      const Tensor3 d_crop = m.pullback(d_embedding);
      const Tensor3 d_image = matcher::crop_face_backward(x.shape(), run.crop_box, matcher.crop_size(), d_crop);
      auto gv = grad.data();
      auto mv = d_image.data();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += mv[i];
    }
    delta = pgd_step(delta, grad, config.step_size, src, it);
  }
  if (hook) hook(config.iterations, delta);

  run.noise = AdversarialNoise(round_to_float(src, best.delta()), run.mask);
  run.adversarial = apply_noise(src, run.noise);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

AttackRun generate(const detector::DetectorModel& detector, const matcher::MatcherModel& matcher,
                   const AttackSource& source, const ImageTensor& other, const AttackConfig& config) {
  config.validate();
  AttackReference ref;
  ref.identity = config.mode == AttackMode::di ? config.target : config.registered;
  ref.embedding = embed_detected(detector, matcher, other, config.detect_threshold_tau);
  return generate(detector, matcher, source, ref, config);
}

std::vector<AttackRun> generate_batch(const detector::DetectorModel& detector,
                                      const matcher::MatcherModel& matcher,
                                      const std::vector<AttackJob>& jobs, const AttackConfig& config,
                                      int workers) {
  if (jobs.empty()) throw ConfigError("generate_batch needs at least one source/other pair");
  config.validate();
  check_models(detector, matcher);
  const std::size_t repeats = static_cast<std::size_t>(config.repeats);
  const std::size_t total = jobs.size() * repeats;
  std::vector<AttackRun> runs(total);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const auto& job = jobs[i / repeats];
      const int r = static_cast<int>(i % repeats);
      AttackConfig c = config;
      c.seed = config.seed + static_cast<std::uint64_t>(r);
      try {
        runs[i] = generate(detector, matcher, job.source, job.other, c);
      } catch (const std::exception& e) {
        AttackRun failed;
        failed.config = c;
        failed.source_ref = job.source.ref;
        failed.source_identity = job.source.identity;
        failed.image_index = job.source.image_index;
        failed.other_ref = job.other.ref.empty() ? job.other.identity : job.other.ref;
        failed.seed = c.seed;
        failed.source = job.source.image;
        failed.error = e.what();
        runs[i] = std::move(failed);
      }
      runs[i].repeat = r;
    }
  };

  const std::size_t n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, total);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return runs;
}

}  // namespace mofa::engine

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mofa/core/types.hpp"
#include "mofa/detector.hpp"
#include "mofa/losses.hpp"
#include "mofa/matcher.hpp"

namespace mofa::engine {

/// One clean face to attack, with the eye landmarks that anchor the patch.
struct AttackSource {
  ImageTensor image;
  Point eye_left;
  Point eye_right;
  /// Free-form label, e.g. "id003/7".
  std::string ref;
  std::string identity;
  int image_index = 0;
};

/// Identity on the other side of the matcher loss: the target (DI) or the
/// registered enrolment of the true identity (DE, UE).
struct AttackReference {
  std::string identity;
  matcher::Embedding embedding;
  std::string ref;
};

struct AttackRun {
  AttackConfig config;
  std::string source_ref;
  std::string source_identity;
  int image_index = 0;
  std::string other_ref;
  std::uint64_t seed = 0;
  int repeat = 0;

  ImageTensor source;
  std::shared_ptr<const PatchMask> mask;
  detector::ActiveWindowMask active;
  Box crop_box;

  AdversarialNoise initial_noise;
  AdversarialNoise noise;
  ImageTensor adversarial;

  std::vector<losses::LossBreakdown> trace;
  /// Index into `trace` of the returned iterate; -1 when no iteration ran.
  int best_iteration = -1;
  double wall_seconds = 0.0;
  /// Non-empty when generate() failed inside generate_batch().
  std::string error;

  bool ok() const { return error.empty(); }
};

/// delta' = delta - step_size * sign(grad), zeroed off the mask, then moved so
/// that source + delta' lies in [0,1]. Throws NumericError on a non-finite
/// gradient, DomainError on a shape mismatch.
AdversarialNoise pgd_step(const AdversarialNoise& delta, const Tensor3& grad, double step_size,
                          const ImageTensor& source, int iteration = 0);

/// Moves delta so that source + delta lies in [0,1].
Tensor3 project_to_pixel_range(const ImageTensor& source, Tensor3 delta);

/// Embedding of a face as the attack sees it: detect, crop the box around
/// the active windows, embed.
matcher::Embedding embed_detected(const detector::DetectorModel& detector,
                                  const matcher::MatcherModel& matcher, const ImageTensor& image,
                                  double tau);

/// Sees the noise of every iterate: iterations 0..N-1 before their loss is
/// evaluated, then N for the noise after the last step.
using IterationHook = std::function<void(int iteration, const AdversarialNoise& delta)>;

/// Masked signed-gradient descent on alpha * detection + matcher_weight *
/// matcher loss for the configured mode. The active windows and the matcher
/// crop are fixed from the clean source. Returns the evaluated iterate with
/// the lowest total, with its noise rounded to float32.
AttackRun generate(const detector::DetectorModel& detector, const matcher::MatcherModel& matcher,
                   const AttackSource& source, const AttackReference& other, const AttackConfig& config,
                   const IterationHook& hook = {});

/// Same, with the other identity given as an image that is detected and
/// embedded first.
AttackRun generate(const detector::DetectorModel& detector, const matcher::MatcherModel& matcher,
                   const AttackSource& source, const ImageTensor& other, const AttackConfig& config);

struct AttackJob {
  AttackSource source;
  AttackReference other;
};

/// config.repeats runs per job with seeds config.seed + r, ordered job-major.
/// Per-run failures land in AttackRun::error. Throws ConfigError on an empty
/// job list.
std::vector<AttackRun> generate_batch(const detector::DetectorModel& detector,
                                      const matcher::MatcherModel& matcher,
                                      const std::vector<AttackJob>& jobs, const AttackConfig& config,
                                      int workers = 1);

/// Run directory layout: manifest.json, source.png, adv.png, clean_patch.png,
/// mask.png, noise.f32, init_noise.f32 (each array with a .hdr).
void write_run(const AttackRun& run, const std::filesystem::path& dir, const nlohmann::json& extra = {});
AttackRun read_run(const std::filesystem::path& dir);
nlohmann::json run_manifest(const AttackRun& run);

nlohmann::json config_to_json(const AttackConfig& config);
AttackConfig config_from_json(const nlohmann::json& j);

}  // namespace mofa::engine

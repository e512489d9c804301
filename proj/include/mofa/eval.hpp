#pragma once

#include <string>
#include <vector>

#include "mofa/core/types.hpp"
#include "mofa/detector.hpp"
#include "mofa/engine.hpp"
#include "mofa/matcher.hpp"

namespace mofa::eval {

struct DetectionProbability {
  double value = 0.0;
  /// Set when no window was active and the grid maximum was used instead.
  bool fallback = false;
};

/// Mean of Y over the active windows of `active` (derived from the clean
/// image), or the grid maximum when none is active.
DetectionProbability mean_detection_probability(const detector::DetectorModel& detector,
                                                const ImageTensor& image,
                                                const detector::ActiveWindowMask& active);

struct Success {
  bool detector_ok = false;
  bool matcher_ok = false;
  bool overall = false;
  double max_prob = 0.0;
  double distance = 0.0;
};

/// DI: detected and within theta of the target's enrolment.
/// DE: detected and farther than theta from the source's enrolment.
/// UE: not detected and farther than theta from the source's enrolment.
/// The matcher sees the run's frozen crop box. Throws LookupError when the
/// gallery lacks the identity.
Success attack_success(const engine::AttackRun& run, const detector::DetectorModel& detector,
                       const matcher::MatcherModel& matcher, const matcher::Gallery& gallery);

/// Identity compared against by attack_success() for this run's mode.
const std::string& reference_identity(const engine::AttackRun& run);

struct RunMetrics {
  std::string source_id;
  int image_index = 0;
  int repeat = 0;
  bool failed = false;
  DetectionProbability ci;
  DetectionProbability cp;
  DetectionProbability ap;
  Success success;
};

RunMetrics measure_run(const engine::AttackRun& run, const detector::DetectorModel& detector,
                       const matcher::MatcherModel& matcher, const matcher::Gallery& gallery);

struct EvalRow {
  std::string source_id;
  AttackMode mode = AttackMode::di;
  double mean_prob_ci = 0.0;
  double mean_prob_cp = 0.0;
  double std_prob_cp = 0.0;
  double mean_prob_ap = 0.0;
  double std_prob_ap = 0.0;
  /// ISR for DI, ESR for DE/UE.
  double matcher_sr = 0.0;
  double detector_sr = 0.0;
  double oasr = 0.0;
  int repeats = 0;
  int images = 0;
  int runs = 0;
  int failed_runs = 0;
  /// Runs whose clean image had no active window.
  int fallback_runs = 0;
  /// Success rates per repeat (pooled over images) and per image (pooled over repeats).
  std::vector<double> matcher_sr_per_repeat;
  std::vector<double> oasr_per_repeat;
  std::vector<double> matcher_sr_per_image;
  std::vector<double> oasr_per_image;
};

/// Probabilities: per-repeat means over images, then mean and population
/// std across repeats. Rates: fractions over all repeats x images. Throws
/// DomainError for an empty run list or mixed source identities.
EvalRow evaluate_identity(const std::vector<RunMetrics>& runs, AttackMode mode);

/// Groups runs by source identity (first-seen order) and evaluates each.
std::vector<EvalRow> evaluate_runs(const std::vector<RunMetrics>& runs, AttackMode mode);

enum class Component { detector, matcher };
enum class Objective { evasion, impersonation };

Component parse_component(std::string_view text);
Objective parse_objective(std::string_view text);
std::string_view to_string(Component c);
std::string_view to_string(Objective o);

/// Mode and loss weights of the single-component attack: matcher baselines
/// zero alpha, detector baselines zero the matcher weight.
AttackConfig baseline_config(Component component, Objective objective, AttackConfig base);

struct BaselineResult {
  Component component = Component::matcher;
  Objective objective = Objective::impersonation;
  AttackMode mode = AttackMode::di;
  /// Success on the attacked component.
  double single_asr = 0.0;
  /// Success on the untouched component.
  double transfer_rate = 0.0;
  double overall_asr = 0.0;
  int runs = 0;
};

BaselineResult summarize_baseline(Component component, Objective objective,
                                  const std::vector<RunMetrics>& runs);

BaselineResult vanilla_baseline(Component component, Objective objective,
                                const std::vector<engine::AttackJob>& jobs, const AttackConfig& config,
                                const detector::DetectorModel& detector, const matcher::MatcherModel& matcher,
                                const matcher::Gallery& gallery, int workers = 1,
                                std::vector<engine::AttackRun>* runs_out = nullptr);

enum class ReportFormat { csv, markdown };

ReportFormat parse_report_format(std::string_view text);

/// Fixed-point with `decimals` digits.
std::string format_fixed(double value, int decimals);
/// "0.87 ± 0.030".
std::string format_mean_std(double mean, double std);
/// "1" or "0" for whole numbers, otherwise two decimals.
std::string format_rate(double rate);

/// One table per attack mode present (DI, DE, UE order), one row per source
/// identity, with the CI/CP/AP legend.
std::string render_report(const std::vector<EvalRow>& rows, ReportFormat format);

struct BaselineComparison {
  BaselineResult baseline;
  /// OASR of the multi-objective attack on the same pairs.
  double multi_objective_oasr = 0.0;
};

std::string render_baseline_report(const std::vector<BaselineComparison>& rows, ReportFormat format);

}  // namespace mofa::eval

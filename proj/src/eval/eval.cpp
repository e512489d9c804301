#include "mofa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mofa/core/errors.hpp"

namespace mofa::eval {

namespace {

double fraction(int k, int n) { return n ? static_cast<double>(k) / n : 0.0; }

struct Tally {
  int hits = 0;
  int overall = 0;
  int n = 0;
};

}  // namespace

DetectionProbability mean_detection_probability(const detector::DetectorModel& detector,
                                                const ImageTensor& image,
                                                const detector::ActiveWindowMask& active) {
  const auto map = detector::probability_map(detector, image);
  if (map.probs.rows() != active.rows || map.probs.cols() != active.cols) {
    throw DomainError("active window mask does not match the detector grid");
  }
  auto p = map.probs.data();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!active.active[i]) continue;
    sum += p[i];
    ++n;
  }
  if (n == 0) return {*std::max_element(p.begin(), p.end()), true};
  return {sum / static_cast<double>(n), false};
}

const std::string& reference_identity(const engine::AttackRun& run) {
  return run.config.mode == AttackMode::di ? run.config.target : run.config.registered;
}

Success attack_success(const engine::AttackRun& run, const detector::DetectorModel& detector,
                       const matcher::MatcherModel& matcher, const matcher::Gallery& gallery) {
  if (!run.ok()) throw DomainError("run failed: " + run.error);
  const auto& reference = gallery.at(reference_identity(run));
  Success s;
  const auto detection = detector::detect(detector, run.adversarial, run.config.detect_threshold_tau);
  s.max_prob = detection.max_prob;
  const auto crop = matcher::crop_face(run.adversarial.pixels(), run.crop_box, matcher.crop_size());
  s.distance = matcher::distance(reference, matcher.run(crop).embedding, gallery.p);
  const bool match = s.distance <= gallery.theta;
  switch (run.config.mode) {
    case AttackMode::di:
      s.detector_ok = detection.detected;
      s.matcher_ok = match;
      break;
    case AttackMode::de:
      s.detector_ok = detection.detected;
      s.matcher_ok = !match;
      break;
    case AttackMode::ue:
      s.detector_ok = !detection.detected;
      s.matcher_ok = !match;
      break;
  }
  s.overall = s.detector_ok && s.matcher_ok;
  return s;
}

RunMetrics measure_run(const engine::AttackRun& run, const detector::DetectorModel& detector,
                       const matcher::MatcherModel& matcher, const matcher::Gallery& gallery) {
  RunMetrics m;
  m.source_id = run.source_identity.empty() ? run.source_ref : run.source_identity;
  m.image_index = run.image_index;
  m.repeat = run.repeat;
  if (!run.ok()) {
    m.failed = true;
    return m;
  }
  m.ci = mean_detection_probability(detector, run.source, run.active);
  m.cp = mean_detection_probability(detector, apply_noise(run.source, run.initial_noise), run.active);
  m.ap = mean_detection_probability(detector, run.adversarial, run.active);
  m.success = attack_success(run, detector, matcher, gallery);
  return m;
}

EvalRow evaluate_identity(const std::vector<RunMetrics>& runs, AttackMode mode) {
  if (runs.empty()) throw DomainError("cannot evaluate an identity without runs");
  EvalRow row;
  row.source_id = runs.front().source_id;
  row.mode = mode;

  std::map<int, std::vector<const RunMetrics*>> by_repeat;
  std::map<int, Tally> per_image;
  std::map<int, Tally> per_repeat;
  int matcher_hits = 0;
  int detector_hits = 0;
  int overall_hits = 0;
  double ci_sum = 0.0;
  int ci_n = 0;
  for (const auto& r : runs) {
    if (r.source_id != row.source_id) throw DomainError("runs mix source identities");
    ++row.runs;
    auto& img = per_image[r.image_index];
    auto& rep = per_repeat[r.repeat];
    ++img.n;
    ++rep.n;
    if (r.failed) {
      ++row.failed_runs;
      continue;
    }
    by_repeat[r.repeat].push_back(&r);
    if (r.ci.fallback) ++row.fallback_runs;
    ci_sum += r.ci.value;
    ++ci_n;
    matcher_hits += r.success.matcher_ok;
    detector_hits += r.success.detector_ok;
    overall_hits += r.success.overall;
    img.hits += r.success.matcher_ok;
    img.overall += r.success.overall;
    rep.hits += r.success.matcher_ok;
    rep.overall += r.success.overall;
  }
  row.repeats = static_cast<int>(per_repeat.size());
  row.images = static_cast<int>(per_image.size());
  row.mean_prob_ci = ci_n ? ci_sum / ci_n : 0.0;
  row.matcher_sr = fraction(matcher_hits, row.runs);
  row.detector_sr = fraction(detector_hits, row.runs);
  row.oasr = fraction(overall_hits, row.runs);
  for (const auto& [_, t] : per_repeat) {
    row.matcher_sr_per_repeat.push_back(fraction(t.hits, t.n));
    row.oasr_per_repeat.push_back(fraction(t.overall, t.n));
  }
  for (const auto& [_, t] : per_image) {
    row.matcher_sr_per_image.push_back(fraction(t.hits, t.n));
    row.oasr_per_image.push_back(fraction(t.overall, t.n));
  }

  std::vector<double> cp;
  std::vector<double> ap;
  for (const auto& [_, rs] : by_repeat) {
    double cp_sum = 0.0;
    double ap_sum = 0.0;
    for (const auto* r : rs) {
      cp_sum += r->cp.value;
      ap_sum += r->ap.value;
    }
    cp.push_back(cp_sum / static_cast<double>(rs.size()));
    ap.push_back(ap_sum / static_cast<double>(rs.size()));
  }
  auto mean_std = [](const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size()));
  };
  mean_std(cp, row.mean_prob_cp, row.std_prob_cp);
  mean_std(ap, row.mean_prob_ap, row.std_prob_ap);
  return row;
}

std::vector<EvalRow> evaluate_runs(const std::vector<RunMetrics>& runs, AttackMode mode) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<RunMetrics>> groups;
  for (const auto& r : runs) {
    if (!groups.count(r.source_id)) order.push_back(r.source_id);
    groups[r.source_id].push_back(r);
  }
  std::vector<EvalRow> rows;
  for (const auto& id : order) rows.push_back(evaluate_identity(groups[id], mode));
  return rows;
}

Component parse_component(std::string_view text) {
  if (text == "detector") return Component::detector;
  if (text == "matcher") return Component::matcher;
  throw ConfigError("unknown component '" + std::string(text) + "' (expected detector or matcher)");
}

Objective parse_objective(std::string_view text) {
  if (text == "evasion") return Objective::evasion;
  if (text == "impersonation") return Objective::impersonation;
  throw ConfigError("unknown objective '" + std::string(text) + "' (expected evasion or impersonation)");
}

std::string_view to_string(Component c) { return c == Component::detector ? "detector" : "matcher"; }
std::string_view to_string(Objective o) { return o == Objective::evasion ? "evasion" : "impersonation"; }

AttackConfig baseline_config(Component component, Objective objective, AttackConfig base) {
  AttackMode mode;
  if (component == Component::matcher) {
    mode = objective == Objective::impersonation ? AttackMode::di : AttackMode::de;
  } else {
    mode = objective == Objective::evasion ? AttackMode::ue : AttackMode::di;
  }
  if (base.mode != mode) {
    AttackConfig d = AttackConfig::defaults_for(mode);
    base.margin_k = d.margin_k;
    base.mask_size = d.mask_size;
    base.mode = mode;
  }
  if (component == Component::matcher) {
    base.alpha = 0.0;
    base.matcher_weight = 1.0;
  } else {
    base.matcher_weight = 0.0;
    if (base.alpha == 0.0) base.alpha = 1.0;
  }
  return base;
}

BaselineResult summarize_baseline(Component component, Objective objective,
                                  const std::vector<RunMetrics>& runs) {
  BaselineResult b;
  b.component = component;
  b.objective = objective;
  b.mode = baseline_config(component, objective, AttackConfig::defaults_for(AttackMode::di)).mode;
  int single = 0;
  int transfer = 0;
  int overall = 0;
  for (const auto& r : runs) {
    ++b.runs;
    if (r.failed) continue;
    const bool on_detector = r.success.detector_ok;
    const bool on_matcher = r.success.matcher_ok;
    single += component == Component::detector ? on_detector : on_matcher;
    transfer += component == Component::detector ? on_matcher : on_detector;
    overall += r.success.overall;
  }
  b.single_asr = fraction(single, b.runs);
  b.transfer_rate = fraction(transfer, b.runs);
  b.overall_asr = fraction(overall, b.runs);
  return b;
}

BaselineResult vanilla_baseline(Component component, Objective objective,
                                const std::vector<engine::AttackJob>& jobs, const AttackConfig& config,
                                const detector::DetectorModel& detector, const matcher::MatcherModel& matcher,
                                const matcher::Gallery& gallery, int workers,
                                std::vector<engine::AttackRun>* runs_out) {
  const AttackConfig c = baseline_config(component, objective, config);
  auto runs = engine::generate_batch(detector, matcher, jobs, c, workers);
  std::vector<RunMetrics> metrics;
  for (const auto& r : runs) metrics.push_back(measure_run(r, detector, matcher, gallery));
  if (runs_out) *runs_out = std::move(runs);
  return summarize_baseline(component, objective, metrics);
}

}  // namespace mofa::eval

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mofa/config_file.hpp"
#include "mofa/core/errors.hpp"
#include "mofa/core/hash.hpp"
#include "mofa/detector.hpp"
#include "mofa/engine.hpp"
#include "mofa/eval.hpp"
#include "mofa/matcher.hpp"
#include "mofa/synth.hpp"
#include "mofa/version.hpp"

namespace mofa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kConfigKeys = {
    "alpha",      "exponent_s", "margin_k", "detect_threshold_tau", "p_norm",         "iterations", "step_size",
    "seed",       "repeats",    "mask_size", "matcher_weight",      "target",         "registered"};

std::string utc_now(const char* format) {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, format, &tm);
  return buf;
}

std::string iso_now() { return utc_now("%Y-%m-%dT%H:%M:%SZ"); }

/// New timestamped directory under `root`; never reuses an existing one.
fs::path new_run_dir(const fs::path& root) {
  fs::create_directories(root);
  const std::string stamp = utc_now("%Y%m%dT%H%M%SZ");
  fs::path dir = root / stamp;
  for (int n = 2; fs::exists(dir); ++n) dir = root / (stamp + "-" + std::to_string(n));
  fs::create_directory(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void refuse_non_empty(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError(dir.string() + " exists and is not empty (use --force)");
    fs::remove_all(dir);
  }
}

json eval_row_json(const eval::EvalRow& r) {
  return {{"mode", std::string(to_string(r.mode))},
          {"source", r.source_id},
          {"ci", r.mean_prob_ci},
          {"ci_cp_mean", r.mean_prob_cp},
          {"ci_cp_std", r.std_prob_cp},
          {"ci_ap_mean", r.mean_prob_ap},
          {"ci_ap_std", r.std_prob_ap},
          {"matcher_sr", r.matcher_sr},
          {"detector_sr", r.detector_sr},
          {"oasr", r.oasr},
          {"runs", r.runs},
          {"failed_runs", r.failed_runs},
          {"fallback_runs", r.fallback_runs},
          {"repeats", r.repeats},
          {"images", r.images},
          {"matcher_sr_per_repeat", r.matcher_sr_per_repeat},
          {"oasr_per_repeat", r.oasr_per_repeat},
          {"matcher_sr_per_image", r.matcher_sr_per_image},
          {"oasr_per_image", r.oasr_per_image}};
}

std::vector<eval::EvalRow> evaluate_by_mode(const std::vector<eval::RunMetrics>& metrics,
                                            const std::vector<AttackMode>& modes) {
  std::vector<eval::EvalRow> rows;
  for (AttackMode mode : {AttackMode::di, AttackMode::de, AttackMode::ue}) {
    std::vector<eval::RunMetrics> subset;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      if (modes[i] == mode) subset.push_back(metrics[i]);
    }
    if (subset.empty()) continue;
    for (auto& row : eval::evaluate_runs(subset, mode)) rows.push_back(std::move(row));
  }
  return rows;
}

void write_reports(const fs::path& dir, const std::vector<eval::EvalRow>& rows) {
  write_text(dir / "report.csv", eval::render_report(rows, eval::ReportFormat::csv));
  write_text(dir / "report.md", eval::render_report(rows, eval::ReportFormat::markdown));
  json breakdown = json::array();
  for (const auto& r : rows) breakdown.push_back(eval_row_json(r));
  write_json_file(dir / "breakdown.json", breakdown);
}

std::string run_dir_name(const engine::AttackRun& run) {
  return "img" + std::to_string(run.image_index) + "_rep" + std::to_string(run.repeat);
}

// Paths and content hashes of everything an attack reads.
struct Inputs {
  fs::path detector;
  fs::path matcher;
  fs::path gallery;
  fs::path data;

  json to_json() const {
    return {{"detector", {{"path", detector.string()}, {"sha256", sha256_tree(detector)}}},
            {"matcher", {{"path", matcher.string()}, {"sha256", sha256_tree(matcher)}}},
            {"gallery", {{"path", gallery.string()}, {"sha256", sha256_tree(gallery.parent_path())}}},
            {"data", {{"path", data.string()}, {"sha256", sha256_tree(data)}}}};
  }

  static Inputs from_manifest(const json& m) {
    Inputs in;
    in.detector = m.at("detector").at("path").get<std::string>();
    in.matcher = m.at("matcher").at("path").get<std::string>();
    in.gallery = m.at("gallery").at("path").get<std::string>();
    in.data = m.at("data").at("path").get<std::string>();
    const json now = in.to_json();
    for (const char* key : {"detector", "matcher", "gallery", "data"}) {
      if (now.at(key).at("sha256") != m.at(key).at("sha256")) {
        throw CorruptionError(std::string(key) + " at " + now.at(key).at("path").get<std::string>() +
                              " changed since the manifest was written");
      }
    }
    return in;
  }
};

struct Loaded {
  std::shared_ptr<detector::ReferenceDetector> detector;
  std::shared_ptr<matcher::ReferenceMatcher> matcher;
  matcher::Gallery gallery;
  synth::Dataset data;
};

Loaded load_inputs(const Inputs& in) {
  Loaded l;
  l.detector = detector::load_detector(in.detector);
  l.matcher = matcher::load_matcher(in.matcher);
  l.gallery = matcher::load_gallery(in.gallery);
  l.data = synth::import_dataset(in.data);
  return l;
}

/// Attack jobs for the first `images` images (all when <= 0) of `source`,
/// against the gallery enrolment of `other`.
std::vector<engine::AttackJob> make_jobs(const Loaded& l, const std::string& source, const std::string& other,
                                         int images) {
  const auto& ids = l.data.identity_ids;
  const auto it = std::find(ids.begin(), ids.end(), source);
  if (it == ids.end()) throw LookupError("unknown source identity '" + source + "'");
  if (!l.gallery.contains(other)) throw LookupError("identity '" + other + "' is not enrolled in the gallery");
  const auto faces = l.data.faces_of(static_cast<int>(it - ids.begin()));
  const std::size_t n = images > 0 ? std::min<std::size_t>(static_cast<std::size_t>(images), faces.size())
                                   : faces.size();
  std::vector<engine::AttackJob> jobs;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = l.data.faces[faces[k]];
    if (!s.rendered.face) throw FormatError("image " + std::to_string(s.image_index) + " of " + source +
                                            " has no landmarks");
    engine::AttackJob job;
    job.source = {s.rendered.image, s.rendered.face->eye_left, s.rendered.face->eye_right,
                  source + "/" + std::to_string(s.image_index), source, s.image_index};
    job.other = {other, l.gallery.at(other), other};
    jobs.push_back(std::move(job));
  }
  return jobs;
}

/// Writes every run under `dir` and returns the evaluation rows.
std::vector<eval::EvalRow> persist_runs(const std::vector<engine::AttackRun>& runs, const Loaded& l,
                                        const fs::path& dir, int* failed) {
  std::vector<eval::RunMetrics> metrics;
  std::vector<AttackMode> modes;
  for (const auto& run : runs) {
    engine::write_run(run, dir / run_dir_name(run));
    if (!run.ok()) ++*failed;
    metrics.push_back(eval::measure_run(run, *l.detector, *l.matcher, l.gallery));
    modes.push_back(run.config.mode);
  }
  return evaluate_by_mode(metrics, modes);
}

struct Emitter {
  std::ostream& out;
  bool as_json = false;

  void emit(const json& summary, const std::string& text) const {
    if (as_json) out << summary.dump() << "\n";
    else out << text;
  }
};

std::string other_field(AttackMode mode) { return mode == AttackMode::di ? "target" : "registered"; }

struct AttackPlan {
  AttackConfig config;
  Inputs inputs;
  std::string source;
  int images = 0;
  int workers = 1;
  fs::path out;

  std::string other() const { return config.mode == AttackMode::di ? config.target : config.registered; }
};

int execute_attack(const AttackPlan& plan, const Emitter& emitter, const std::optional<fs::path>& rerun_of) {
  const std::string created = iso_now();
  const Loaded l = load_inputs(plan.inputs);
  const auto jobs = make_jobs(l, plan.source, plan.other(), plan.images);
  const auto runs = engine::generate_batch(*l.detector, *l.matcher, jobs, plan.config, plan.workers);

  const fs::path dir = new_run_dir(plan.out);
  int failed = 0;
  const auto rows = persist_runs(runs, l, dir / "runs", &failed);
  write_reports(dir, rows);
  write_text(dir / "config.txt", format_config(plan.config));

  json run_list = json::array();
  for (const auto& r : runs) run_list.push_back("runs/" + run_dir_name(r));
  json summary = rows.empty() ? json::object() : eval_row_json(rows.front());
  summary["failed_runs"] = failed;
  json manifest = {{"tool", "mofa"},
                   {"version", kVersion},
                   {"command", "attack"},
                   {"created_utc", created},
                   {"finished_utc", iso_now()},
                   {"config", engine::config_to_json(plan.config)},
                   {"source", plan.source},
                   {"other", plan.other()},
                   {"reference", "gallery"},
                   {"images", plan.images},
                   {"workers", plan.workers},
                   {"out", plan.out.string()},
                   {"dataset", {{"seed", l.data.options.seed},
                                {"n_identities", l.data.options.n_identities},
                                {"images_per_identity", l.data.options.images_per_identity}}},
                   {"runs", run_list},
                   {"summary", summary}};
  manifest.update(plan.inputs.to_json());
  if (rerun_of) manifest["rerun_of"] = rerun_of->string();
  write_json_file(dir / "manifest.json", manifest);

  json printed = {{"ok", failed == 0}, {"command", "attack"}, {"run_dir", dir.string()}, {"summary", summary}};
  std::ostringstream text;
  text << "wrote " << runs.size() << " runs to " << dir.string() << "\n";
  text << eval::render_report(rows, eval::ReportFormat::markdown);
  if (failed) text << failed << " run(s) failed; see their manifest.json\n";
  emitter.emit(printed, text.str());
  return failed ? kExitRuntime : kExitOk;
}

struct BaselinePlan {
  eval::Component component = eval::Component::matcher;
  eval::Objective objective = eval::Objective::impersonation;
  AttackPlan attack;
};

int execute_baseline(const BaselinePlan& plan, const Emitter& emitter, const std::optional<fs::path>& rerun_of) {
  const std::string created = iso_now();
  const AttackPlan& a = plan.attack;
  const Loaded l = load_inputs(a.inputs);
  const auto jobs = make_jobs(l, a.source, a.other(), a.images);

  std::vector<engine::AttackRun> vanilla_runs;
  auto result = eval::vanilla_baseline(plan.component, plan.objective, jobs, a.config, *l.detector, *l.matcher,
                                       l.gallery, a.workers, &vanilla_runs);
  const auto multi_runs = engine::generate_batch(*l.detector, *l.matcher, jobs, a.config, a.workers);

  const fs::path dir = new_run_dir(a.out);
  int failed = 0;
  persist_runs(vanilla_runs, l, dir / "runs" / "vanilla", &failed);
  const auto multi_rows = persist_runs(multi_runs, l, dir / "runs" / "multi", &failed);
  eval::BaselineComparison cmp{result, multi_rows.empty() ? 0.0 : multi_rows.front().oasr};
  write_text(dir / "baseline.csv", eval::render_baseline_report({cmp}, eval::ReportFormat::csv));
  write_text(dir / "baseline.md", eval::render_baseline_report({cmp}, eval::ReportFormat::markdown));
  write_text(dir / "config.txt", format_config(a.config));

  json summary = {{"component", std::string(eval::to_string(plan.component))},
                  {"objective", std::string(eval::to_string(plan.objective))},
                  {"mode", std::string(to_string(result.mode))},
                  {"single_asr", result.single_asr},
                  {"transfer_rate", result.transfer_rate},
                  {"overall_asr", result.overall_asr},
                  {"multi_objective_oasr", cmp.multi_objective_oasr},
                  {"runs", result.runs},
                  {"failed_runs", failed}};
  json manifest = {{"tool", "mofa"},
                   {"version", kVersion},
                   {"command", "baseline"},
                   {"created_utc", created},
                   {"finished_utc", iso_now()},
                   {"component", summary["component"]},
                   {"objective", summary["objective"]},
                   {"config", engine::config_to_json(a.config)},
                   {"vanilla_config", engine::config_to_json(
                                          eval::baseline_config(plan.component, plan.objective, a.config))},
                   {"source", a.source},
                   {"other", a.other()},
                   {"reference", "gallery"},
                   {"images", a.images},
                   {"workers", a.workers},
                   {"out", a.out.string()},
                   {"dataset", {{"seed", l.data.options.seed},
                                {"n_identities", l.data.options.n_identities},
                                {"images_per_identity", l.data.options.images_per_identity}}},
                   {"summary", summary}};
  manifest.update(a.inputs.to_json());
  if (rerun_of) manifest["rerun_of"] = rerun_of->string();
  write_json_file(dir / "manifest.json", manifest);

  json printed = {{"ok", failed == 0}, {"command", "baseline"}, {"run_dir", dir.string()}, {"summary", summary}};
  std::ostringstream text;
  text << "wrote baseline to " << dir.string() << "\n";
  text << eval::render_baseline_report({cmp}, eval::ReportFormat::markdown);
  emitter.emit(printed, text.str());
  return failed ? kExitRuntime : kExitOk;
}

fs::path manifest_file(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

// Options shared by attack and baseline.
struct AttackFlags {
  std::string config_file;
  std::string detector;
  std::string matcher;
  std::string gallery;
  std::string data;
  std::string source;
  std::string other;
  std::string out;
  std::string manifest;
  int images = 0;
  std::optional<int> workers;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "Attack config file (key = value lines)");
    cmd->add_option("--detector", detector, "Detector checkpoint directory");
    cmd->add_option("--matcher", matcher, "Matcher checkpoint directory");
    cmd->add_option("--gallery", gallery, "gallery.json (default: <matcher>/gallery/gallery.json)");
    cmd->add_option("--data", data, "Dataset directory written by synth");
    cmd->add_option("--source", source, "Source identity id");
    cmd->add_option("--other", other, "Target identity (di) or registered identity (de, ue)");
    cmd->add_option("--out", out, "Root directory for timestamped run directories");
    cmd->add_option("--images", images, "Attack only the first N images of the source (default: all)");
    cmd->add_option("--workers", workers, "Parallel attack runs")->check(CLI::PositiveNumber);
    cmd->add_option("--manifest", manifest, "Rerun from a manifest.json (or the run directory holding it)");
    for (const auto& key : kConfigKeys) {
      options[key] = cmd->add_option("--" + key, values[key], "Overrides the config file value");
    }
  }

  KeyValues overrides() const {
    KeyValues kv;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) kv[key] = values.at(key);
    }
    return kv;
  }

  void require(const char* name, const std::string& value) const {
    if (value.empty()) throw ConfigError(std::string("--") + name + " is required");
  }

  AttackPlan plan(std::optional<AttackMode> mode) const {
    KeyValues file = config_file.empty() ? KeyValues{} : read_config_file(config_file);
    KeyValues over = overrides();
    std::optional<AttackMode> resolved = mode;
    if (!resolved) {
      if (auto it = file.find("mode"); it != file.end()) resolved = parse_attack_mode(it->second);
    }
    if (!resolved) throw ConfigError("attack mode not set (use --mode or a mode line in the config file)");
    if (!other.empty()) over[other_field(*resolved)] = other;
    AttackPlan p;
    p.config = resolve_config(file, over, resolved);
    require("detector", detector);
    require("matcher", matcher);
    require("data", data);
    require("source", source);
    require("out", out);
    p.inputs.detector = detector;
    p.inputs.matcher = matcher;
    p.inputs.gallery = gallery.empty() ? fs::path(matcher) / "gallery" / "gallery.json" : fs::path(gallery);
    p.inputs.data = data;
    p.source = source;
    p.images = images;
    p.workers = workers.value_or(1);
    p.out = out;
    return p;
  }

  AttackPlan plan_from_manifest(const json& m) const {
    AttackPlan p;
    try {
      p.config = engine::config_from_json(m.at("config"));
      p.config.validate();
      p.inputs = Inputs::from_manifest(m);
      p.source = m.at("source").get<std::string>();
      p.images = m.at("images").get<int>();
      p.workers = workers.value_or(m.value("workers", 1));
      p.out = out.empty() ? fs::path(m.at("out").get<std::string>()) : fs::path(out);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("manifest is missing a field: ") + e.what());
    }
    return p;
  }
};

int cmd_synth(int identities, int images_per, int negatives, std::uint64_t seed, const std::string& out,
              bool force, const Emitter& emitter) {
  if (out.empty()) throw ConfigError("--out is required");
  synth::DatasetOptions o;
  o.n_identities = identities;
  o.images_per_identity = images_per;
  o.negatives = negatives;
  o.seed = seed;
  try {
    refuse_non_empty(out, force);
    const auto ds = synth::make_dataset(o);
    synth::export_dataset(ds, out, force);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  const std::string hash = sha256_tree(out);
  json summary = {{"ok", true},
                  {"command", "synth"},
                  {"out", out},
                  {"identities", identities},
                  {"images", identities * images_per},
                  {"negatives", negatives},
                  {"seed", seed},
                  {"sha256", hash}};
  emitter.emit(summary, "wrote " + std::to_string(identities * images_per) + " face images and " +
                            std::to_string(negatives) + " background images to " + out + "\nsha256 " + hash +
                            "\n");
  return kExitOk;
}

int cmd_train(const std::string& component, const std::string& data, const std::string& out,
              std::optional<int> epochs, std::uint64_t seed, bool force, const Emitter& emitter) {
  if (data.empty() || out.empty()) throw ConfigError("--data and --out are required");
  if (component != "detector" && component != "matcher") {
    throw ConfigError("unknown component '" + component + "' (expected detector or matcher)");
  }
  refuse_non_empty(out, force);
  const auto ds = synth::import_dataset(data);
  json metrics;
  std::ostringstream text;
  if (component == "detector") {
    detector::DetectorTrainOptions opt;
    opt.seed = seed;
    if (epochs) opt.epochs = *epochs;
    const auto trained = detector::train_detector(ds, opt);
    detector::save_detector(*trained.model, out);
    const auto& r = trained.report;
    metrics = {{"epochs", r.epochs},
               {"final_loss", r.final_loss},
               {"window_accuracy", r.window_accuracy},
               {"face_detection_rate", r.face_detection_rate},
               {"background_rejection_rate", r.background_rejection_rate},
               {"heldout_faces", r.heldout_faces},
               {"heldout_backgrounds", r.heldout_backgrounds},
               {"tau", opt.tau}};
    text << "detector: face detection rate " << r.face_detection_rate << ", background rejection "
         << r.background_rejection_rate << "\n";
  } else {
    matcher::MatcherTrainOptions opt;
    opt.seed = seed;
    if (epochs) opt.epochs = *epochs;
    const auto trained = matcher::train_matcher(ds, opt);
    matcher::save_matcher(*trained.model, out);
    matcher::save_gallery(trained.gallery, fs::path(out) / "gallery" / "gallery.json");
    const auto& r = trained.report;
    metrics = {{"epochs", r.epochs},
               {"final_loss", r.final_loss},
               {"pair_eer", r.pair_eer},
               {"genuine_pairs", r.genuine_pairs},
               {"impostor_pairs", r.impostor_pairs},
               {"gallery_eer", r.gallery_calibration.eer},
               {"theta", trained.gallery.theta},
               {"genuine_accept_rate", r.genuine_accept_rate},
               {"impostor_reject_rate", r.impostor_reject_rate}};
    text << "matcher: pair EER " << r.pair_eer << ", theta " << trained.gallery.theta << "\n";
  }
  json record = {{"tool", "mofa"},
                 {"version", kVersion},
                 {"command", "train"},
                 {"component", component},
                 {"seed", seed},
                 {"data", {{"path", data}, {"sha256", sha256_tree(data)}}},
                 {"metrics", metrics}};
  write_json_file(fs::path(out) / "metrics.json", record);
  text << "wrote " << out << "\n";
  emitter.emit({{"ok", true}, {"command", "train"}, {"component", component}, {"out", out}, {"metrics", metrics}},
               text.str());
  return kExitOk;
}

bool is_run_dir(const fs::path& dir) {
  const fs::path m = dir / "manifest.json";
  if (!fs::is_regular_file(m)) return false;
  return read_json_file(m).contains("source_ref");
}

std::vector<fs::path> collect_run_dirs(const std::vector<std::string>& roots) {
  std::set<fs::path> found;
  for (const auto& root : roots) {
    if (!fs::is_directory(root)) throw ConfigError("--runs " + root + " is not a directory");
    if (is_run_dir(root)) found.insert(root);
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_directory() && is_run_dir(entry.path())) found.insert(entry.path());
    }
  }
  return {found.begin(), found.end()};
}

/// Detector or matcher checkpoint recorded by the batch manifest above a run.
std::optional<std::string> recorded_checkpoint(const fs::path& run_dir, const char* key) {
  fs::path p = run_dir;
  for (int up = 0; up < 4 && p.has_parent_path() && p != p.parent_path(); ++up) {
    p = p.parent_path();
    const fs::path m = p / "manifest.json";
    if (!fs::is_regular_file(m)) continue;
    const json j = read_json_file(m);
    if (j.contains(key)) return j.at(key).at("path").get<std::string>();
  }
  return std::nullopt;
}

std::string resolve_checkpoint(const std::string& flag, const std::vector<fs::path>& runs, const char* key) {
  if (!flag.empty()) return flag;
  std::optional<std::string> chosen;
  for (const auto& r : runs) {
    auto c = recorded_checkpoint(r, key);
    if (!c) throw ConfigError(std::string("no ") + key + " recorded for " + r.string() + "; pass --" + key);
    if (chosen && *chosen != *c) {
      throw ConfigError(std::string("runs were made with different ") + key + " checkpoints; pass --" + key);
    }
    chosen = c;
  }
  return *chosen;
}

int cmd_evaluate(const std::vector<std::string>& roots, const std::string& gallery_path, const std::string& out,
                 const std::string& detector_flag, const std::string& matcher_flag, const Emitter& emitter) {
  if (gallery_path.empty() || out.empty()) throw ConfigError("--gallery and --out are required");
  const fs::path out_path(out);
  const std::string ext = out_path.extension().string();
  const eval::ReportFormat format = eval::parse_report_format(ext.empty() ? "" : ext.substr(1));
  const auto dirs = collect_run_dirs(roots);
  if (dirs.empty()) throw ConfigError("no run directories found under --runs");
  const auto det = detector::load_detector(resolve_checkpoint(detector_flag, dirs, "detector"));
  const auto mat = matcher::load_matcher(resolve_checkpoint(matcher_flag, dirs, "matcher"));
  const auto gallery = matcher::load_gallery(gallery_path);

  std::vector<eval::RunMetrics> metrics;
  std::vector<AttackMode> modes;
  for (const auto& d : dirs) {
    const auto run = engine::read_run(d);
    metrics.push_back(eval::measure_run(run, *det, *mat, gallery));
    modes.push_back(run.config.mode);
  }
  const auto rows = evaluate_by_mode(metrics, modes);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text(out_path, eval::render_report(rows, format));
  json breakdown = json::array();
  for (const auto& r : rows) breakdown.push_back(eval_row_json(r));
  fs::path breakdown_path = out_path;
  breakdown_path.replace_extension(".breakdown.json");
  write_json_file(breakdown_path, breakdown);
  emitter.emit({{"ok", true}, {"command", "evaluate"}, {"out", out}, {"runs", dirs.size()}, {"rows", breakdown}},
               "evaluated " + std::to_string(dirs.size()) + " runs into " + out + "\n");
  return kExitOk;
}

int dispatch(CLI::App& app, const std::vector<const char*>& argv, std::ostream& out, std::ostream& err,
             bool& as_json);

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("mofa");
  CLI::App app("Multi-objective adversarial patch attacks on a toy face detection and matching pipeline", "mofa");
  bool as_json = false;
  try {
    return dispatch(app, argv, out, err, as_json);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  } catch (const std::exception& e) {
    const bool config = dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const LookupError*>(&e);
    const int code = config ? kExitConfig : kExitRuntime;
    err << "error: " << e.what() << "\n";
    if (as_json) out << json{{"ok", false}, {"exit_code", code}, {"error", e.what()}}.dump() << "\n";
    return code;
  }
}

namespace {

int dispatch(CLI::App& app, const std::vector<const char*>& argv, std::ostream& out, std::ostream& err,
             bool& as_json) {
  app.set_version_flag("--version", std::string(kVersion));
  app.add_flag("--json", as_json, "Print a JSON summary on stdout");
  app.require_subcommand(1);
  app.fallthrough();

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic face dataset");
  int identities = 5;
  int images_per = 5;
  int negatives = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool force = false;
  synth_cmd->add_option("--identities", identities, "Number of identities")->capture_default_str();
  synth_cmd->add_option("--images-per", images_per, "Images per identity")->capture_default_str();
  synth_cmd->add_option("--negatives", negatives, "Background-only images for detector training")
      ->capture_default_str();
  synth_cmd->add_option("--seed", seed, "Dataset seed")->capture_default_str();
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_flag("--force", force, "Replace a non-empty output directory");

  auto* train_cmd = app.add_subcommand("train", "Train the reference detector or matcher");
  std::string component;
  std::string data;
  std::optional<int> epochs;
  std::uint64_t train_seed = 0;
  train_cmd->add_option("--component", component, "detector or matcher")->required();
  train_cmd->add_option("--data", data, "Dataset directory")->required();
  train_cmd->add_option("--out", out_dir, "Checkpoint directory")->required();
  train_cmd->add_option("--epochs", epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", train_seed, "Training seed")->capture_default_str();
  train_cmd->add_flag("--force", force, "Replace a non-empty checkpoint directory");

  auto* attack_cmd = app.add_subcommand("attack", "Generate adversarial patches for one source identity");
  AttackFlags attack;
  std::string mode_text;
  attack_cmd->add_option("--mode", mode_text, "di, de or ue (overrides the config file)");
  attack.add_to(attack_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Render the results report for attack runs");
  std::vector<std::string> run_roots;
  std::string gallery;
  std::string report_out;
  std::string det_ckpt;
  std::string mat_ckpt;
  eval_cmd->add_option("--runs", run_roots, "Run directories (searched recursively)")->required();
  eval_cmd->add_option("--gallery", gallery, "gallery.json")->required();
  eval_cmd->add_option("--out", report_out, "report.csv or report.md")->required();
  eval_cmd->add_option("--detector", det_ckpt, "Detector checkpoint (default: from the run manifests)");
  eval_cmd->add_option("--matcher", mat_ckpt, "Matcher checkpoint (default: from the run manifests)");

  auto* base_cmd = app.add_subcommand("baseline", "Single-component attack against the multi-objective one");
  AttackFlags base;
  std::string base_component;
  std::string base_objective;
  base_cmd->add_option("--component", base_component, "detector or matcher");
  base_cmd->add_option("--objective", base_objective, "evasion or impersonation");
  base.add_to(base_cmd);

  app.parse(static_cast<int>(argv.size()), argv.data());
  const Emitter emitter{out, as_json};
  (void)err;

  if (synth_cmd->parsed()) return cmd_synth(identities, images_per, negatives, seed, out_dir, force, emitter);
  if (train_cmd->parsed()) return cmd_train(component, data, out_dir, epochs, train_seed, force, emitter);
  if (eval_cmd->parsed()) return cmd_evaluate(run_roots, gallery, report_out, det_ckpt, mat_ckpt, emitter);
  if (attack_cmd->parsed()) {
    if (!attack.manifest.empty()) {
      const fs::path mpath = manifest_file(attack.manifest);
      const json m = read_json_file(mpath);
      if (m.value("command", "") != "attack") throw ConfigError(mpath.string() + " is not an attack manifest");
      return execute_attack(attack.plan_from_manifest(m), emitter, mpath);
    }
    std::optional<AttackMode> mode;
    if (!mode_text.empty()) mode = parse_attack_mode(mode_text);
    return execute_attack(attack.plan(mode), emitter, std::nullopt);
  }
  if (base_cmd->parsed()) {
    BaselinePlan plan;
    if (!base.manifest.empty()) {
      const fs::path mpath = manifest_file(base.manifest);
      const json m = read_json_file(mpath);
      if (m.value("command", "") != "baseline") throw ConfigError(mpath.string() + " is not a baseline manifest");
      plan.component = eval::parse_component(m.value("component", ""));
      plan.objective = eval::parse_objective(m.value("objective", ""));
      plan.attack = base.plan_from_manifest(m);
      return execute_baseline(plan, emitter, mpath);
    }
    if (base_component.empty() || base_objective.empty()) {
      throw ConfigError("--component and --objective are required");
    }
    plan.component = eval::parse_component(base_component);
    plan.objective = eval::parse_objective(base_objective);
    const AttackMode mode = eval::baseline_config(plan.component, plan.objective, AttackConfig{}).mode;
    plan.attack = base.plan(mode);
    return execute_baseline(plan, emitter, std::nullopt);
  }
  return kExitConfig;
}

}  // namespace

}  // namespace mofa::cli

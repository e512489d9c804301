#include <fstream>

#include "mofa/core/array_io.hpp"
#include "mofa/core/errors.hpp"
#include "mofa/core/image_io.hpp"
#include "mofa/engine.hpp"
#include "mofa/masks.hpp"
#include "mofa/version.hpp"

namespace mofa::engine {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json point_json(Point p) { return json::array({p.x, p.y}); }
Point json_point(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

json config_to_json(const AttackConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"alpha", c.alpha},
          {"exponent_s", c.exponent_s},
          {"margin_k", c.margin_k},
          {"detect_threshold_tau", c.detect_threshold_tau},
          {"p_norm", c.p_norm},
          {"iterations", c.iterations},
          {"step_size", c.step_size},
          {"seed", c.seed},
          {"repeats", c.repeats},
          {"mask_size", std::string(to_string(c.mask_size))},
          {"matcher_weight", c.matcher_weight},
          {"target", c.target},
          {"registered", c.registered}};
}

AttackConfig config_from_json(const json& j) {
  try {
    AttackConfig c = AttackConfig::defaults_for(parse_attack_mode(j.at("mode").get<std::string>()));
    c.alpha = j.value("alpha", c.alpha);
    c.exponent_s = j.value("exponent_s", c.exponent_s);
    c.margin_k = j.value("margin_k", c.margin_k);
    c.detect_threshold_tau = j.value("detect_threshold_tau", c.detect_threshold_tau);
    c.p_norm = j.value("p_norm", c.p_norm);
    c.iterations = j.value("iterations", c.iterations);
    c.step_size = j.value("step_size", c.step_size);
    c.seed = j.value("seed", c.seed);
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("mask_size")) c.mask_size = parse_mask_style(j.at("mask_size").get<std::string>());
    c.matcher_weight = j.value("matcher_weight", c.matcher_weight);
    c.target = j.value("target", c.target);
    c.registered = j.value("registered", c.registered);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed attack config: ") + e.what());
  }
}

json run_manifest(const AttackRun& run) {
  json trace = {{"detection_term", json::array()}, {"matcher_term", json::array()}, {"total", json::array()}};
  for (const auto& t : run.trace) {
    trace["detection_term"].push_back(t.detection_term);
    trace["matcher_term"].push_back(t.matcher_term);
    trace["total"].push_back(t.total);
  }
  json m = {{"tool", "mofa"},
            {"version", kVersion},
            {"config", config_to_json(run.config)},
            {"source_ref", run.source_ref},
            {"source_identity", run.source_identity},
            {"image_index", run.image_index},
            {"other_ref", run.other_ref},
            {"seed", run.seed},
            {"repeat", run.repeat},
            {"best_iteration", run.best_iteration},
            {"wall_seconds", run.wall_seconds},
            {"trace", trace}};
  if (!run.ok()) {
    m["error"] = run.error;
    return m;
  }
  m["mask"] = {{"style", std::string(to_string(run.mask->style()))},
               {"eye_left", point_json(run.mask->eye_left())},
               {"eye_right", point_json(run.mask->eye_right())},
               {"area", run.mask->area()}};
  m["crop_box"] = {run.crop_box.x0, run.crop_box.y0, run.crop_box.width, run.crop_box.height};
  m["active_windows"] = {{"rows", run.active.rows},
                         {"cols", run.active.cols},
                         {"tau", run.active.tau},
                         {"active", run.active.active}};
  if (!run.trace.empty()) {
    m["initial_total"] = run.trace.front().total;
    m["best_total"] = run.trace[static_cast<std::size_t>(run.best_iteration)].total;
  }
  return m;
}

void write_run(const AttackRun& run, const fs::path& dir, const json& extra) {
  fs::create_directories(dir);
  json m = run_manifest(run);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  if (run.ok()) {
    save_image(run.source, dir / "source.png");
    save_image(run.adversarial, dir / "adv.png");
    save_image(apply_noise(run.source, run.initial_noise), dir / "clean_patch.png");
    save_mask_png(*run.mask, dir / "mask.png");
    save_array(to_array(run.noise.delta()), dir / "noise.f32");
    save_array(to_array(run.initial_noise.delta()), dir / "init_noise.f32");
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << "\n";
}

AttackRun read_run(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + dir.string());
  AttackRun run;
  try {
    const json m = json::parse(in);
    run.config = config_from_json(m.at("config"));
    run.source_ref = m.at("source_ref").get<std::string>();
    run.source_identity = m.value("source_identity", "");
    run.image_index = m.value("image_index", 0);
    run.other_ref = m.at("other_ref").get<std::string>();
    run.seed = m.at("seed").get<std::uint64_t>();
    run.repeat = m.value("repeat", 0);
    run.best_iteration = m.value("best_iteration", -1);
    run.wall_seconds = m.value("wall_seconds", 0.0);
    const auto& trace = m.at("trace");
    for (std::size_t i = 0; i < trace.at("total").size(); ++i) {
      losses::LossBreakdown b;
      b.detection_term = trace.at("detection_term").at(i).get<double>();
      b.matcher_term = trace.at("matcher_term").at(i).get<double>();
      b.total = trace.at("total").at(i).get<double>();
      b.alpha = run.config.alpha;
      b.matcher_weight = run.config.matcher_weight;
      run.trace.push_back(b);
    }
    if (m.contains("error")) {
      run.error = m.at("error").get<std::string>();
      return run;
    }
    run.source = load_image(dir / "source.png");
    const auto& mk = m.at("mask");
    run.mask = std::make_shared<const PatchMask>(
        masks::eyeglass_mask(json_point(mk.at("eye_left")), json_point(mk.at("eye_right")),
                             run.source.height(), run.source.width(),
                             parse_mask_style(mk.at("style").get<std::string>())));
    const auto& box = m.at("crop_box");
    run.crop_box = {box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(),
                    box.at(3).get<double>()};
    const auto& aw = m.at("active_windows");
    run.active.rows = aw.at("rows").get<int>();
    run.active.cols = aw.at("cols").get<int>();
    run.active.tau = aw.at("tau").get<double>();
    run.active.active = aw.at("active").get<std::vector<std::uint8_t>>();
    run.noise = AdversarialNoise(to_tensor3(load_array(dir / "noise.f32")), run.mask);
    run.initial_noise = AdversarialNoise(to_tensor3(load_array(dir / "init_noise.f32")), run.mask);
    run.adversarial = apply_noise(run.source, run.noise);
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw CorruptionError("run " + dir.string() + " is inconsistent: " + e.what());
  }
  return run;
}

}  // namespace mofa::engine

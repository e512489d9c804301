#include "mofa/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "mofa/core/errors.hpp"
#include "mofa/core/image_io.hpp"
#include "mofa/core/random.hpp"

namespace mofa::synth {

namespace {

using Color = std::array<double, 3>;

constexpr int kSupersample = 3;
constexpr double kFaceMargin = 2.0;
constexpr double kMaxCenterJitter = 10.0;
constexpr std::uint64_t kNegativeStream = 0xbac6'0000ull;

Color lerp(const Color& a, const Color& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

Color palette(const std::vector<Color>& stops, double t) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
  auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  return lerp(stops[i], stops[i + 1], t - static_cast<double>(i));
}

double sample(Rng& rng, Range r) { return rng.uniform(r.lo, r.hi); }

struct Wave {
  double fx, fy, phase;
  Color weight;
};

struct Blob {
  Point center;
  double rx, ry;
  Color color;
};

/// Smooth two-wave texture plus a few distractor blobs.
struct Background {
  Color base;
  std::array<Wave, 2> waves;
  std::vector<Blob> blobs;

  static Background draw(Rng& rng, Canvas canvas) {
    Background bg;
    for (auto& c : bg.base) c = rng.uniform(0.15, 0.85);
    for (auto& w : bg.waves) {
      double freq = rng.uniform(0.04, 0.25);
      double angle = rng.uniform(0.0, std::numbers::pi);
      w.fx = freq * std::cos(angle);
      w.fy = freq * std::sin(angle);
      w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (auto& c : w.weight) c = rng.uniform(-0.15, 0.15);
    }
    int n_blobs = static_cast<int>(rng.index(3));
    for (int i = 0; i < n_blobs; ++i) {
      Blob b;
      b.center = {rng.uniform(0.0, canvas.width), rng.uniform(0.0, canvas.height)};
      b.rx = rng.uniform(2.0, 7.0);
      b.ry = rng.uniform(2.0, 7.0);
      for (auto& c : b.color) c = rng.uniform(0.0, 1.0);
      bg.blobs.push_back(b);
    }
    return bg;
  }

  Color at(double x, double y) const {
    Color c = base;
    for (const auto& w : waves) {
      double s = std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
      for (int k = 0; k < 3; ++k) c[k] += w.weight[k] * s;
    }
    for (const auto& b : blobs) {
      double dx = (x - b.center.x) / b.rx;
      double dy = (y - b.center.y) / b.ry;
      if (dx * dx + dy * dy <= 1.0) c = b.color;
    }
    return c;
  }
};

struct FaceLayout {
  Point center;
  double semi_x, semi_y;
  Point eye_left, eye_right;
  double eye_radius;
  double mouth_y, mouth_half_width, mouth_bend;
  Color skin, hair, iris;
};

Color face_color(const FaceLayout& f, double x, double y, const Color& fallback) {
  double dx = (x - f.center.x) / f.semi_x;
  double dy = (y - f.center.y) / f.semi_y;
  if (dx * dx + dy * dy > 1.0) return fallback;
  if (y < f.center.y - 0.55 * f.semi_y) return f.hair;

  for (const Point& eye : {f.eye_left, f.eye_right}) {
    double d = std::hypot(x - eye.x, y - eye.y);
    if (d <= f.eye_radius) return f.iris;
    if (d <= f.eye_radius + 0.8) return {0.95, 0.95, 0.93};
    // brow
    double brow_y = eye.y - f.eye_radius - 1.8;
    if (std::abs(y - brow_y) <= 0.6 && std::abs(x - eye.x) <= f.eye_radius + 1.2) return f.hair;
  }

  double u = (x - f.center.x) / f.mouth_half_width;
  if (std::abs(u) <= 1.0) {
    double arc_y = f.mouth_y + f.mouth_bend * (1.0 - u * u);
    if (std::abs(y - arc_y) <= 0.6) return {0.55, 0.12, 0.14};
  }
  return f.skin;
}

ImageTensor finish(Tensor3 pixels, double brightness, Rng& rng) {
  for (auto& v : pixels.data()) v = std::clamp(v * brightness + 0.01 * rng.normal(), 0.0, 1.0);
  return ImageTensor(quantize_8bit(pixels));
}

template <typename ColorAt>
Tensor3 rasterize(Canvas canvas, ColorAt&& color_at) {
  Tensor3 px(canvas.height, canvas.width, 3);
  const double step = 1.0 / kSupersample;
  for (int y = 0; y < canvas.height; ++y) {
    for (int x = 0; x < canvas.width; ++x) {
      Color acc{0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          Color c = color_at(x + (sx + 0.5) * step, y + (sy + 0.5) * step);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      }
      for (int k = 0; k < 3; ++k) px(y, x, k) = acc[k] / (kSupersample * kSupersample);
    }
  }
  return px;
}

void check_canvas(Canvas canvas) {
  if (canvas.height < 32 || canvas.width < 32) {
    throw DomainError("canvas must be at least 32x32");
  }
}

nlohmann::json point_json(Point p) { return {p.x, p.y}; }
Point json_point(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

nlohmann::json spec_json(const IdentitySpec& s) {
  return {{"seed", s.seed},
          {"face_half_width", s.face_half_width},
          {"face_half_height", s.face_half_height},
          {"eye_spacing", s.eye_spacing},
          {"eye_radius", s.eye_radius},
          {"mouth_curvature", s.mouth_curvature},
          {"mouth_width", s.mouth_width},
          {"skin_tone", s.skin_tone},
          {"hair_tone", s.hair_tone},
          {"iris_tone", s.iris_tone}};
}

IdentitySpec json_spec(const nlohmann::json& j) {
  IdentitySpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.face_half_width = j.at("face_half_width").get<double>();
  s.face_half_height = j.at("face_half_height").get<double>();
  s.eye_spacing = j.at("eye_spacing").get<double>();
  s.eye_radius = j.at("eye_radius").get<double>();
  s.mouth_curvature = j.at("mouth_curvature").get<double>();
  s.mouth_width = j.at("mouth_width").get<double>();
  s.skin_tone = j.at("skin_tone").get<double>();
  s.hair_tone = j.at("hair_tone").get<double>();
  s.iris_tone = j.at("iris_tone").get<double>();
  return s;
}

nlohmann::json sample_json(const Sample& s) {
  nlohmann::json j = {{"file", std::to_string(s.image_index) + ".png"},
                      {"index", s.image_index},
                      {"jitter_seed", s.jitter_seed},
                      {"train", s.train}};
  if (s.rendered.face) {
    const auto& f = *s.rendered.face;
    j["face"] = {{"face_box", {f.face_box.x0, f.face_box.y0, f.face_box.width, f.face_box.height}},
                 {"center", point_json(f.center)},
                 {"semi_axes", {f.semi_x, f.semi_y}},
                 {"eye_left", point_json(f.eye_left)},
                 {"eye_right", point_json(f.eye_right)},
                 {"chin", point_json(f.chin)}};
  } else {
    j["face"] = nullptr;
  }
  return j;
}

std::optional<FaceAnnotation> json_face(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  FaceAnnotation f;
  const auto& b = j.at("face_box");
  f.face_box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                b.at(3).get<double>()};
  f.center = json_point(j.at("center"));
  f.semi_x = j.at("semi_axes").at(0).get<double>();
  f.semi_y = j.at("semi_axes").at(1).get<double>();
  f.eye_left = json_point(j.at("eye_left"));
  f.eye_right = json_point(j.at("eye_right"));
  f.chin = json_point(j.at("chin"));
  return f;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

bool IdentitySpec::in_range() const {
  auto in = [](double v, Range r) { return v >= r.lo && v <= r.hi; };
  return in(face_half_width, ranges::face_half_width) &&
         in(face_half_height, ranges::face_half_height) && in(eye_spacing, ranges::eye_spacing) &&
         in(eye_radius, ranges::eye_radius) && in(mouth_curvature, ranges::mouth_curvature) &&
         in(mouth_width, ranges::mouth_width) && in(skin_tone, ranges::unit) &&
         in(hair_tone, ranges::unit) && in(iris_tone, ranges::unit);
}

IdentitySpec generate_identity(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1d));
  IdentitySpec s;
  s.seed = seed;
  s.face_half_width = sample(rng, ranges::face_half_width);
  s.face_half_height = sample(rng, ranges::face_half_height);
  s.eye_spacing = sample(rng, ranges::eye_spacing);
  s.eye_radius = sample(rng, ranges::eye_radius);
  s.mouth_curvature = sample(rng, ranges::mouth_curvature);
  s.mouth_width = sample(rng, ranges::mouth_width);
  s.skin_tone = sample(rng, ranges::unit);
  s.hair_tone = sample(rng, ranges::unit);
  s.iris_tone = sample(rng, ranges::unit);
  return s;
}

RenderedImage render(const IdentitySpec& spec, std::uint64_t jitter_seed, Canvas canvas) {
  check_canvas(canvas);
  Rng rng(mix_seed(jitter_seed, 0x7e));
  const double scale = rng.uniform(0.95, 1.05);
  const double brightness = rng.uniform(0.9, 1.1);

  FaceLayout f;
  f.semi_x = spec.face_half_width * scale;
  f.semi_y = spec.face_half_height * scale;
  const double room_x = canvas.width / 2.0 - f.semi_x - kFaceMargin;
  const double room_y = canvas.height / 2.0 - f.semi_y - kFaceMargin;
  if (room_x < 0.0 || room_y < 0.0) {
    throw RenderError("canvas " + std::to_string(canvas.width) + "x" +
                      std::to_string(canvas.height) + " cannot hold the jittered face");
  }
  const double jx = std::min(room_x, kMaxCenterJitter);
  const double jy = std::min(room_y, kMaxCenterJitter);
  f.center = {canvas.width / 2.0 + rng.uniform(-jx, jx), canvas.height / 2.0 + rng.uniform(-jy, jy)};

  const double half_spacing = spec.eye_spacing * scale / 2.0;
  const double eye_y = f.center.y - 0.15 * f.semi_y;
  f.eye_left = {f.center.x - half_spacing, eye_y};
  f.eye_right = {f.center.x + half_spacing, eye_y};
  f.eye_radius = spec.eye_radius * scale;
  f.mouth_y = f.center.y + 0.5 * f.semi_y;
  f.mouth_half_width = spec.mouth_width * scale / 2.0;
  f.mouth_bend = 1.5 * spec.mouth_curvature;
  f.skin = lerp({0.96, 0.80, 0.69}, {0.42, 0.28, 0.20}, spec.skin_tone);
  f.hair = palette({{0.08, 0.06, 0.05}, {0.45, 0.25, 0.10}, {0.85, 0.70, 0.35}, {0.60, 0.15, 0.08},
                    {0.75, 0.75, 0.75}},
                   spec.hair_tone);
  f.iris = palette({{0.20, 0.12, 0.06}, {0.25, 0.45, 0.20}, {0.20, 0.35, 0.65}}, spec.iris_tone);

  const Background bg = Background::draw(rng, canvas);
  Tensor3 px = rasterize(canvas, [&](double x, double y) { return face_color(f, x, y, bg.at(x, y)); });

  FaceAnnotation ann;
  ann.center = f.center;
  ann.semi_x = f.semi_x;
  ann.semi_y = f.semi_y;
  ann.face_box = {f.center.x - f.semi_x, f.center.y - f.semi_y, 2.0 * f.semi_x, 2.0 * f.semi_y};
  ann.eye_left = f.eye_left;
  ann.eye_right = f.eye_right;
  ann.chin = {f.center.x, f.center.y + f.semi_y};
  return {finish(std::move(px), brightness, rng), ann};
}

RenderedImage render_background(std::uint64_t jitter_seed, Canvas canvas) {
  check_canvas(canvas);
  Rng rng(mix_seed(jitter_seed, 0xb9));
  const double brightness = rng.uniform(0.9, 1.1);
  const Background bg = Background::draw(rng, canvas);
  Tensor3 px = rasterize(canvas, [&](double x, double y) { return bg.at(x, y); });
  return {finish(std::move(px), brightness, rng), std::nullopt};
}

std::string identity_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "id%03d", index);
  return buf;
}

std::uint64_t identity_seed(std::uint64_t dataset_seed, int identity_index) {
  return mix_seed(dataset_seed, 0x1d, static_cast<std::uint64_t>(identity_index));
}

std::uint64_t image_seed(std::uint64_t dataset_seed, int identity_index, int image_index) {
  return mix_seed(mix_seed(dataset_seed, 0x13, static_cast<std::uint64_t>(identity_index)),
                  static_cast<std::uint64_t>(image_index));
}

bool Dataset::detector_trains_on(int identity_index) const {
  return std::find(detector_holdout.begin(), detector_holdout.end(), identity_index) ==
         detector_holdout.end();
}

std::vector<std::pair<std::size_t, std::size_t>> Dataset::genuine_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < faces.size(); ++a) {
    for (std::size_t b = a + 1; b < faces.size(); ++b) {
      if (faces[a].identity_index == faces[b].identity_index) out.emplace_back(a, b);
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Dataset::impostor_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < faces.size(); ++a) {
    for (std::size_t b = a + 1; b < faces.size(); ++b) {
      if (faces[a].identity_index != faces[b].identity_index) out.emplace_back(a, b);
    }
  }
  return out;
}

std::vector<std::size_t> Dataset::faces_of(int identity_index) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (faces[i].identity_index == identity_index) out.push_back(i);
  }
  return out;
}

Dataset make_dataset(const DatasetOptions& options) {
  if (options.n_identities < 2) throw DomainError("a dataset needs at least 2 identities");
  if (options.images_per_identity < 2) {
    throw DomainError("each identity needs at least 2 images to form genuine pairs");
  }
  if (options.negatives < 0) throw DomainError("negative image count must be nonnegative");
  check_canvas(options.canvas);

  Dataset ds;
  ds.options = options;
  const int n_test =
      std::clamp(static_cast<int>(std::lround(options.images_per_identity * options.test_fraction)),
                 options.test_fraction > 0.0 ? 1 : 0, options.images_per_identity - 1);
  for (int i = 0; i < options.n_identities; ++i) {
    ds.identities.push_back(generate_identity(identity_seed(options.seed, i)));
    ds.identity_ids.push_back(identity_name(i));
    for (int j = 0; j < options.images_per_identity; ++j) {
      Sample s;
      s.identity_id = ds.identity_ids.back();
      s.identity_index = i;
      s.image_index = j;
      s.jitter_seed = image_seed(options.seed, i, j);
      s.train = j < options.images_per_identity - n_test;
      s.rendered = render(ds.identities.back(), s.jitter_seed, options.canvas);
      ds.faces.push_back(std::move(s));
    }
  }
  const int n_neg_test = static_cast<int>(std::floor(options.negatives * options.test_fraction));
  for (int k = 0; k < options.negatives; ++k) {
    Sample s;
    s.image_index = k;
    s.jitter_seed = mix_seed(options.seed, kNegativeStream, static_cast<std::uint64_t>(k));
    s.train = k < options.negatives - n_neg_test;
    s.rendered = render_background(s.jitter_seed, options.canvas);
    ds.negatives.push_back(std::move(s));
  }
  const int n_holdout =
      static_cast<int>(std::floor(options.n_identities * options.detector_holdout_fraction));
  for (int i = options.n_identities - n_holdout; i < options.n_identities; ++i) {
    ds.detector_holdout.push_back(i);
  }
  return ds;
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& root, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) throw IoError(root.string() + " exists and is not empty (use --force)");
    fs::remove_all(root);
  }
  fs::create_directories(root);
  const auto& o = dataset.options;
  write_json({{"n_identities", o.n_identities},
              {"images_per_identity", o.images_per_identity},
              {"canvas", {o.canvas.height, o.canvas.width}},
              {"seed", o.seed},
              {"negatives", o.negatives},
              {"test_fraction", o.test_fraction},
              {"detector_holdout_fraction", o.detector_holdout_fraction},
              {"identity_ids", dataset.identity_ids},
              {"detector_holdout", dataset.detector_holdout}},
             root / "dataset.json");

  for (std::size_t i = 0; i < dataset.identities.size(); ++i) {
    fs::path dir = root / dataset.identity_ids[i];
    fs::create_directories(dir);
    nlohmann::json images = nlohmann::json::array();
    for (auto idx : dataset.faces_of(static_cast<int>(i))) {
      const auto& s = dataset.faces[idx];
      save_image(s.rendered.image, dir / (std::to_string(s.image_index) + ".png"));
      images.push_back(sample_json(s));
    }
    write_json({{"identity", dataset.identity_ids[i]},
                {"identity_index", i},
                {"spec", spec_json(dataset.identities[i])},
                {"images", images}},
               dir / "landmarks.json");
  }
  if (!dataset.negatives.empty()) {
    fs::path dir = root / "_background";
    fs::create_directories(dir);
    nlohmann::json images = nlohmann::json::array();
    for (const auto& s : dataset.negatives) {
      save_image(s.rendered.image, dir / (std::to_string(s.image_index) + ".png"));
      images.push_back(sample_json(s));
    }
    write_json({{"identity", nullptr}, {"images", images}}, dir / "landmarks.json");
  }
}

Dataset import_dataset(const std::filesystem::path& root) {
  auto meta = read_json(root / "dataset.json");
  Dataset ds;
  try {
    auto& o = ds.options;
    o.n_identities = meta.at("n_identities").get<int>();
    o.images_per_identity = meta.at("images_per_identity").get<int>();
    o.canvas = {meta.at("canvas").at(0).get<int>(), meta.at("canvas").at(1).get<int>()};
    o.seed = meta.at("seed").get<std::uint64_t>();
    o.negatives = meta.at("negatives").get<int>();
    o.test_fraction = meta.at("test_fraction").get<double>();
    o.detector_holdout_fraction = meta.at("detector_holdout_fraction").get<double>();
    ds.identity_ids = meta.at("identity_ids").get<std::vector<std::string>>();
    ds.detector_holdout = meta.at("detector_holdout").get<std::vector<int>>();

    for (std::size_t i = 0; i < ds.identity_ids.size(); ++i) {
      auto dir = root / ds.identity_ids[i];
      auto lm = read_json(dir / "landmarks.json");
      ds.identities.push_back(json_spec(lm.at("spec")));
      for (const auto& img : lm.at("images")) {
        Sample s;
        s.identity_id = ds.identity_ids[i];
        s.identity_index = static_cast<int>(i);
        s.image_index = img.at("index").get<int>();
        s.jitter_seed = img.at("jitter_seed").get<std::uint64_t>();
        s.train = img.at("train").get<bool>();
        s.rendered.image = load_image(dir / img.at("file").get<std::string>());
        s.rendered.face = json_face(img.at("face"));
        ds.faces.push_back(std::move(s));
      }
    }
    if (o.negatives > 0) {
      auto dir = root / "_background";
      auto lm = read_json(dir / "landmarks.json");
      for (const auto& img : lm.at("images")) {
        Sample s;
        s.image_index = img.at("index").get<int>();
        s.jitter_seed = img.at("jitter_seed").get<std::uint64_t>();
        s.train = img.at("train").get<bool>();
        s.rendered.image = load_image(dir / img.at("file").get<std::string>());
        ds.negatives.push_back(std::move(s));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset at " + root.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace mofa::synth

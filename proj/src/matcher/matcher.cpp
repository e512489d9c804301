#include "mofa/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mofa/core/errors.hpp"
#include "mofa/nn/checkpoint.hpp"

namespace mofa::matcher {

Embedding Embedding::normalized(std::vector<double> raw) {
  double sq = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw DomainError("embedding has a non-finite component");
    sq += v * v;
  }
  if (sq <= 0.0) throw DomainError("cannot normalise a zero embedding");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : raw) v *= inv;
  Embedding e;
  e.values_ = std::move(raw);
  return e;
}

Embedding Embedding::from_unit(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("embedding has a non-finite component");
    sq += v * v;
  }
  if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) throw DomainError("embedding is not unit length");
  Embedding e;
  e.values_ = std::move(values);
  return e;
}

double distance(std::span<const double> a, std::span<const double> b, double p) {
  if (a.size() != b.size()) {
    throw DomainError("embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  if (!(p > 0.0)) throw DomainError("norm order p must be positive");
  double acc = 0.0;
  if (p == 2.0) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
  }
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(acc, 1.0 / p);
}

double distance(const Embedding& a, const Embedding& b, double p) {
  return distance(a.values(), b.values(), p);
}

std::vector<double> distance_gradient(std::span<const double> a, std::span<const double> b,
                                      double p) {
  const double d = distance(a, b, p);
  std::vector<double> g(b.size(), 0.0);
  if (d == 0.0) return g;
  const double scale = std::pow(d, 1.0 - p);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b[i] - a[i];
    if (x == 0.0) continue;
    g[i] = (x > 0.0 ? 1.0 : -1.0) * std::pow(std::abs(x), p - 1.0) * scale;
  }
  return g;
}

ReferenceMatcher::ReferenceMatcher() : ReferenceMatcher(Architecture{}) {}

ReferenceMatcher::ReferenceMatcher(Architecture arch)
    : arch_(arch),
      net_(3, {{arch.channels1, 4, 2, true},
               {arch.channels2, 3, 2, true},
               {arch.channels3, 3, 2, true},
               {arch.embedding_dim, 3, 1, false}}) {
  Shape3 out = net_.output_shape({arch.crop_size, arch.crop_size, 3});
  if (out.height != 1 || out.width != 1) {
    throw DomainError("crop size " + std::to_string(arch.crop_size) +
                      " does not reduce to a single embedding");
  }
}

MatcherPass ReferenceMatcher::run(const Tensor3& crop) const {
  if (crop.height() != arch_.crop_size || crop.width() != arch_.crop_size || crop.channels() != 3) {
    throw DomainError("matcher expects a " + std::to_string(arch_.crop_size) + "x" +
                      std::to_string(arch_.crop_size) + "x3 crop");
  }
  auto trace = std::make_shared<nn::ConvNet::Trace>();
  Tensor3 x = crop;
  for (auto& v : x.data()) v -= 0.5;
  Tensor3 z = net_.forward(x, trace.get());
  std::vector<double> raw(z.data().begin(), z.data().end());
  double norm = 0.0;
  for (double v : raw) norm += v * v;
  norm = std::sqrt(norm);

  MatcherPass pass;
  pass.embedding = Embedding::normalized(raw);
  pass.pullback = [this, trace, e = pass.embedding, norm](std::span<const double> d_e) {
    if (d_e.size() != e.dim()) throw DomainError("embedding gradient has the wrong size");
    double dot = 0.0;
    for (std::size_t i = 0; i < d_e.size(); ++i) dot += e[i] * d_e[i];
    Tensor3 dz(1, 1, static_cast<int>(e.dim()));
    auto dzv = dz.data();
    for (std::size_t i = 0; i < d_e.size(); ++i) dzv[i] = (d_e[i] - e[i] * dot) / norm;
    return net_.backward(*trace, dz, nullptr, true);
  };
  return pass;
}

Embedding embed(const MatcherModel& model, const ImageTensor& crop) {
  if (crop.height() != model.crop_size() || crop.width() != model.crop_size()) {
    throw DomainError("crop is " + std::to_string(crop.width()) + "x" +
                      std::to_string(crop.height()) + ", matcher expects " +
                      std::to_string(model.crop_size()));
  }
  return model.run(crop.pixels()).embedding;
}

namespace {

struct Tap {
  int y0, y1, x0, x1;
  double wy, wx;
};

void check_box(const Shape3& shape, const Box& box, int out_size) {
  if (out_size <= 0) throw DomainError("crop output size must be positive");
  if (!(box.width > 0.0) || !(box.height > 0.0)) throw DomainError("degenerate crop box");
  constexpr double kSlack = 1e-9;
  if (box.x0 < -kSlack || box.y0 < -kSlack || box.x1() > shape.width + kSlack ||
      box.y1() > shape.height + kSlack) {
    throw DomainError("crop box lies outside the image");
  }
}

template <typename Visit>
void for_each_tap(const Shape3& shape, const Box& box, int out_size, Visit&& visit) {
  const double sy = box.height / out_size;
  const double sx = box.width / out_size;
  for (int i = 0; i < out_size; ++i) {
    double fy = std::clamp(box.y0 + (i + 0.5) * sy - 0.5, 0.0, shape.height - 1.0);
    int y0 = static_cast<int>(std::floor(fy));
    int y1 = std::min(y0 + 1, shape.height - 1);
    for (int j = 0; j < out_size; ++j) {
      double fx = std::clamp(box.x0 + (j + 0.5) * sx - 0.5, 0.0, shape.width - 1.0);
      int x0 = static_cast<int>(std::floor(fx));
      int x1 = std::min(x0 + 1, shape.width - 1);
      visit(i, j, Tap{y0, y1, x0, x1, fy - y0, fx - x0});
    }
  }
}

}  // namespace

Tensor3 crop_face(const Tensor3& image, const Box& box, int out_size) {
  check_box(image.shape(), box, out_size);
  Tensor3 out(out_size, out_size, image.channels());
  for_each_tap(image.shape(), box, out_size, [&](int i, int j, const Tap& t) {
    for (int c = 0; c < image.channels(); ++c) {
      double top = image(t.y0, t.x0, c) * (1.0 - t.wx) + image(t.y0, t.x1, c) * t.wx;
      double bottom = image(t.y1, t.x0, c) * (1.0 - t.wx) + image(t.y1, t.x1, c) * t.wx;
      out(i, j, c) = top * (1.0 - t.wy) + bottom * t.wy;
    }
  });
  return out;
}

ImageTensor crop_face(const ImageTensor& image, const Box& box, int out_size) {
  Tensor3 out = crop_face(image.pixels(), box, out_size);
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return ImageTensor(std::move(out));
}

Tensor3 crop_face_backward(const Shape3& image_shape, const Box& box, int out_size,
                           const Tensor3& d_crop) {
  check_box(image_shape, box, out_size);
  if (d_crop.height() != out_size || d_crop.width() != out_size ||
      d_crop.channels() != image_shape.channels) {
    throw DomainError("crop gradient has the wrong shape");
  }
  Tensor3 d_image(image_shape.height, image_shape.width, image_shape.channels);
  for_each_tap(image_shape, box, out_size, [&](int i, int j, const Tap& t) {
    for (int c = 0; c < image_shape.channels; ++c) {
      const double g = d_crop(i, j, c);
      d_image(t.y0, t.x0, c) += g * (1.0 - t.wy) * (1.0 - t.wx);
      d_image(t.y0, t.x1, c) += g * (1.0 - t.wy) * t.wx;
      d_image(t.y1, t.x0, c) += g * t.wy * (1.0 - t.wx);
      d_image(t.y1, t.x1, c) += g * t.wy * t.wx;
    }
  });
  return d_image;
}

Box centered_box(Point center, double side, int image_width, int image_height) {
  side = std::min({side, static_cast<double>(image_width), static_cast<double>(image_height)});
  return {std::clamp(center.x - side / 2.0, 0.0, image_width - side),
          std::clamp(center.y - side / 2.0, 0.0, image_height - side), side, side};
}

const Embedding& Gallery::at(const std::string& id) const {
  auto it = entries.find(id);
  if (it == entries.end()) throw LookupError("identity '" + id + "' is not enrolled");
  return it->second;
}

Verification verify(const Gallery& gallery, const Embedding& probe, const std::string& claimed_id) {
  const double d = distance(gallery.at(claimed_id), probe, gallery.p);
  return {d <= gallery.theta, d};
}

Calibration calibrate_threshold(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw DomainError("threshold calibration needs genuine and impostor distances");
  }
  std::vector<double> g(genuine.begin(), genuine.end());
  std::vector<double> im(impostor.begin(), impostor.end());
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> values;
  values.reserve(g.size() + im.size());
  std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(values));
  values.erase(std::unique(values.begin(), values.end()), values.end());

  const double n_g = static_cast<double>(g.size());
  const double n_i = static_cast<double>(im.size());
  // Interval -1 is (-inf, v0): everything rejected.
  long best = -1;
  double best_frr = 1.0;
  double best_far = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    const double t = values[j];
    const double frr = static_cast<double>(g.end() - std::upper_bound(g.begin(), g.end(), t)) / n_g;
    const double far = static_cast<double>(std::upper_bound(im.begin(), im.end(), t) - im.begin()) / n_i;
    const double gap = std::abs(frr - far);
    const double best_gap = std::abs(best_frr - best_far);
    if (gap < best_gap || (gap == best_gap && frr + far < best_frr + best_far)) {
      best = static_cast<long>(j);
      best_frr = frr;
      best_far = far;
    }
  }
  Calibration c;
  c.false_reject = best_frr;
  c.false_accept = best_far;
  c.eer = 0.5 * (best_frr + best_far);
  c.degenerate = c.eer >= 0.5;
  if (best < 0) {
    c.theta = std::nextafter(values.front(), -std::numeric_limits<double>::infinity());
  } else if (static_cast<std::size_t>(best) + 1 == values.size()) {
    c.theta = values.back();
  } else {
    c.theta = 0.5 * (values[best] + values[best + 1]);
  }
  return c;
}

void save_matcher(const ReferenceMatcher& model, const std::filesystem::path& dir) {
  const auto& a = model.architecture();
  nn::save_net(model.net(),
               {{"kind", "reference_matcher"},
                {"crop_size", a.crop_size},
                {"embedding_dim", a.embedding_dim},
                {"crop_box_side", a.crop_box_side},
                {"input_offset", -0.5},
                {"output", "l2_normalize"},
                {"channels", {a.channels1, a.channels2, a.channels3}}},
               dir);
}

std::shared_ptr<ReferenceMatcher> load_matcher(const std::filesystem::path& dir) {
  auto [net, arch] = nn::load_net(dir);
  if (arch.value("kind", "") != "reference_matcher") {
    throw FormatError(dir.string() + " is not a reference matcher checkpoint");
  }
  ReferenceMatcher::Architecture a;
  a.crop_size = arch.at("crop_size").get<int>();
  a.embedding_dim = arch.at("embedding_dim").get<int>();
  a.crop_box_side = arch.at("crop_box_side").get<double>();
  const auto& ch = arch.at("channels");
  a.channels1 = ch.at(0).get<int>();
  a.channels2 = ch.at(1).get<int>();
  a.channels3 = ch.at(2).get<int>();
  auto model = std::make_shared<ReferenceMatcher>(a);
  if (model->net().parameter_count() != net.parameter_count()) {
    throw CorruptionError("matcher checkpoint does not match its architecture");
  }
  model->net() = std::move(net);
  return model;
}

}  // namespace mofa::matcher

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mofa/core/errors.hpp"
#include "mofa/matcher.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace mofa;
using namespace mofa::matcher;

namespace {

ReferenceMatcher random_matcher(std::uint64_t seed) {
  ReferenceMatcher m;
  m.net().initialize(seed);
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

synth::Dataset small_dataset() {
  synth::DatasetOptions o;
  o.n_identities = 6;
  o.images_per_identity = 5;
  o.seed = 31;
  return synth::make_dataset(o);
}

// FRR and FAR of the rule match <=> d <= theta, counted directly.
std::pair<double, double> error_rates(const std::vector<double>& genuine, const std::vector<double>& impostor,
                                      double theta) {
  double fr = 0;
  double fa = 0;
  for (double d : genuine) fr += d > theta;
  for (double d : impostor) fa += d <= theta;
  return {fr / genuine.size(), fa / impostor.size()};
}

}  // namespace

TEST_SUITE("matcher") {

TEST_CASE("distance examples") {
  std::vector<double> e(8, 0.0);
  e[0] = 1.0;
  std::vector<double> f(8, 0.0);
  f[1] = 1.0;
  CHECK(distance(e, e, 2.0) == 0.0);
  CHECK(distance(e, f, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(distance(e, std::vector<double>(7), 2.0), DomainError);
  CHECK_THROWS_AS(distance(e, f, 0.0), DomainError);
}

TEST_CASE("distance equals brute-force p-norm") {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    const double p = trial % 3 == 0 ? 2.0 : rng.uniform(0.5, 4.0);
    const auto a = oracle::random_vector(rng, n);
    const auto b = oracle::random_vector(rng, n);
    worst = std::max(worst, std::fabs(distance(a, b, p) - oracle::pnorm_distance(a, b, p)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("metric axioms on random embeddings") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = rng.uniform(1.0, 4.0);
    const auto a = oracle::random_unit(rng, 16);
    const auto b = oracle::random_unit(rng, 16);
    const auto c = oracle::random_unit(rng, 16);
    CHECK(distance(a, b, p) == distance(b, a, p));
    CHECK(distance(a, a, p) == 0.0);
    CHECK(distance(a, b, p) > 0.0);
    CHECK(distance(a, c, p) <= distance(a, b, p) + distance(b, c, p) + 1e-12);
  }
}

TEST_CASE("distance gradient matches central differences") {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double p = trial % 2 ? 2.0 : rng.uniform(1.2, 3.5);
    const auto a = oracle::random_vector(rng, 12);
    const auto b = oracle::random_vector(rng, 12);
    const auto g = distance_gradient(a, b, p);
    const std::size_t i = rng.index(12);
    auto f = [&](const std::vector<double>& x) { return oracle::pnorm_distance(a, x, p); };
    // Components below 1e-4 are compared absolutely.
    worst = std::max(worst, oracle::relative_error(g[i], oracle::central_difference(f, b, i, 1e-6), 1e-4));
  }
  CHECK(worst < 1e-5);
  const auto a = oracle::random_vector(rng, 5);
  for (double v : distance_gradient(a, a, 2.0)) CHECK(v == 0.0);
}

TEST_CASE("embeddings") {
  SUBCASE("normalisation") {
    const auto e = Embedding::normalized({3.0, 4.0});
    CHECK(e[0] == doctest::Approx(0.6));
    CHECK(e[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(Embedding::normalized({0.0, 0.0}), DomainError);
    CHECK_THROWS_AS(Embedding::from_unit({1.0, 1.0}), DomainError);
    CHECK_NOTHROW(Embedding::from_unit({0.6, 0.8}));
  }
  SUBCASE("reference matcher output is unit norm and deterministic") {
    const auto m = random_matcher(4);
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      const ImageTensor crop(oracle::random_tensor(rng, 32, 32, 3));
      const auto e = embed(m, crop);
      REQUIRE(e.dim() == 32);
      CHECK(std::sqrt(dot(e.values(), e.values())) == doctest::Approx(1.0).epsilon(1e-12));
      if (i < 5) CHECK(embed(m, crop) == e);
    }
    CHECK_THROWS_AS(embed(m, ImageTensor(Tensor3(30, 32, 3))), DomainError);
  }
}

TEST_CASE("crop_face") {
  Rng rng(5);
  SUBCASE("full box at native size is the identity") {
    const Tensor3 img = oracle::random_tensor(rng, 20, 20, 3);
    CHECK(crop_face(img, {0, 0, 20, 20}, 20) == img);
  }
  SUBCASE("downscaling a constant image stays constant") {
    const Tensor3 img(64, 64, 3, 0.37);
    const Tensor3 crop = crop_face(img, {0, 0, 64, 64}, 32);
    for (double v : crop.data()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
  }
  SUBCASE("bad boxes") {
    const Tensor3 img(20, 20, 3, 0.5);
    CHECK_THROWS_AS(crop_face(img, {0, 0, 0, 5}, 8), DomainError);
    CHECK_THROWS_AS(crop_face(img, {10, 10, 12, 12}, 8), DomainError);
  }
  SUBCASE("backward is the adjoint of the forward resampling") {
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor3 img = oracle::random_tensor(rng, 40, 44, 3, -1, 1);
      const double side = rng.uniform(8, 30);
      const Box box{rng.uniform(0, 44 - side), rng.uniform(0, 40 - side), side, side};
      const int out = 4 + static_cast<int>(rng.index(30));
      const Tensor3 probe = oracle::random_tensor(rng, out, out, 3, -1, 1);
      const double lhs = dot(crop_face(img, box, out).data(), probe.data());
      const double rhs = dot(img.data(), crop_face_backward(img.shape(), box, out, probe).data());
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
  SUBCASE("centered box is shifted inside the image") {
    CHECK(centered_box({5, 60}, 28, 64, 64) == Box{0, 36, 28, 28});
    CHECK(centered_box({32, 32}, 28, 64, 64) == Box{18, 18, 28, 28});
  }
}

TEST_CASE("composite pixels -> crop -> embed -> distance gradient") {
  const auto m = random_matcher(6);
  Rng rng(6);
  const Tensor3 image = oracle::random_tensor(rng, 64, 64, 3, 0.1, 0.9);
  const Box box{17.3, 12.6, 28, 28};
  const auto reference = oracle::random_unit(rng, 32);
  auto scalar = [&](const std::vector<double>& px) {
    const auto e = m.run(crop_face(Tensor3(image.shape(), px), box, 32)).embedding;
    return oracle::pnorm_distance(reference, {e.values().begin(), e.values().end()}, 2.0);
  };
  const auto pass = m.run(crop_face(image, box, 32));
  const auto d_embedding = distance_gradient(reference, pass.embedding.values(), 2.0);
  const Tensor3 grad = crop_face_backward(image.shape(), box, 32, pass.pullback(d_embedding));
  double worst = 0.0;
  int checked = 0;
  while (checked < 100) {
    const std::size_t i = rng.index(image.size());
    const int y = static_cast<int>(i / (64 * 3));
    const int x = static_cast<int>(i / 3 % 64);
    if (!box.contains({x + 0.5, y + 0.5})) continue;
    worst = std::max(worst, oracle::relative_error(grad.data()[i],
                                                   oracle::central_difference(scalar, image.values(), i, 1e-5)));
    ++checked;
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("verification rule is inclusive") {
  Gallery g;
  g.entries["a"] = Embedding::normalized({1.0, 0.0});
  g.theta = std::sqrt(2.0);
  g.p = 2.0;
  const auto same = verify(g, Embedding::normalized({1.0, 0.0}), "a");
  CHECK(same.match);
  CHECK(same.dist == 0.0);
  const auto boundary = verify(g, Embedding::normalized({0.0, 1.0}), "a");
  CHECK(boundary.dist == g.theta);
  CHECK(boundary.match);
  g.theta = std::nextafter(g.theta, 0.0);
  CHECK_FALSE(verify(g, Embedding::normalized({0.0, 1.0}), "a").match);
  CHECK_THROWS_AS(verify(g, Embedding::normalized({0.0, 1.0}), "b"), LookupError);
}

TEST_CASE("threshold calibration") {
  SUBCASE("separated") {
    const auto c = calibrate_threshold(std::vector<double>{0.1, 0.2}, std::vector<double>{0.9, 1.0});
    CHECK(c.theta > 0.2);
    CHECK(c.theta < 0.9);
    CHECK(c.eer == 0.0);
    CHECK_FALSE(c.degenerate);
  }
  SUBCASE("identical distributions are degenerate") {
    const auto c = calibrate_threshold(std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{0.5, 0.5});
    CHECK(c.eer == 0.5);
    CHECK(c.degenerate);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{}, std::vector<double>{1.0}), DomainError);
  }
  SUBCASE("matches an exhaustive threshold search") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> genuine(1 + rng.index(30));
      std::vector<double> impostor(1 + rng.index(30));
      const double shift = rng.uniform(0, 1);
      for (auto& d : genuine) d = std::round(rng.uniform(0, 1) * 20) / 20;
      for (auto& d : impostor) d = std::round(rng.uniform(shift, 1 + shift) * 20) / 20;
      const auto c = calibrate_threshold(genuine, impostor);
      // Every distinct rule is realised by a threshold at an observed value
      // or below all of them.
      std::vector<double> candidates = genuine;
      candidates.insert(candidates.end(), impostor.begin(), impostor.end());
      candidates.push_back(-1.0);
      double best_gap = 2.0;
      for (double t : candidates) {
        const auto [fr, fa] = error_rates(genuine, impostor, t);
        best_gap = std::min(best_gap, std::fabs(fr - fa));
      }
      const auto [fr, fa] = error_rates(genuine, impostor, c.theta);
      CHECK(fr == doctest::Approx(c.false_reject));
      CHECK(fa == doctest::Approx(c.false_accept));
      CHECK(std::fabs(fr - fa) == doctest::Approx(best_gap));
      CHECK(c.eer == doctest::Approx((fr + fa) / 2));
    }
  }
}

TEST_CASE("gallery persistence") {
  Gallery g;
  Rng rng(8);
  for (const char* id : {"id000", "id001", "id002"}) {
    auto v = oracle::random_unit(rng, 32);
    for (auto& x : v) x = static_cast<float>(x);
    g.entries[id] = Embedding::normalized(v);
    std::vector<double> rounded(g.entries[id].values().begin(), g.entries[id].values().end());
    for (auto& x : rounded) x = static_cast<float>(x);
    g.entries[id] = Embedding::from_unit(rounded);
  }
  g.theta = 0.42;
  g.p = 2.0;
  TempDir dir("gal");
  save_gallery(g, dir / "g" / "gallery.json");
  const auto back = load_gallery(dir / "g" / "gallery.json");
  CHECK(back.theta == g.theta);
  CHECK(back.p == g.p);
  REQUIRE(back.entries.size() == 3);
  for (const auto& [id, e] : g.entries) CHECK(back.at(id) == e);
  CHECK_THROWS_AS(back.at("id009"), LookupError);
}

TEST_CASE("matcher training") {
  const auto ds = small_dataset();
  MatcherTrainOptions o;
  o.epochs = 1;
  o.seed = 5;
  SUBCASE("deterministic in its seed") {
    const auto a = train_matcher(ds, o);
    const auto b = train_matcher(ds, o);
    CHECK(a.model->net().parameters() == b.model->net().parameters());
    CHECK(a.gallery.theta == b.gallery.theta);
  }
  SUBCASE("checkpoint round trip") {
    const auto a = train_matcher(ds, o);
    TempDir dir("mat");
    save_matcher(*a.model, dir / "m");
    const auto back = load_matcher(dir / "m");
    const Tensor3 crop = annotated_crop(*a.model, ds.faces[0]);
    CHECK(back->run(crop).embedding == a.model->run(crop).embedding);
  }
  SUBCASE("gallery has one unit entry per identity") {
    const auto a = train_matcher(ds, o);
    CHECK(a.gallery.entries.size() == 6);
    for (const auto& [id, e] : a.gallery.entries) {
      CHECK(std::sqrt(dot(e.values(), e.values())) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

}  // TEST_SUITE

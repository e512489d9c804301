#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mofa/config_file.hpp"
#include "mofa/core/array_io.hpp"
#include "mofa/core/errors.hpp"
#include "mofa/core/hash.hpp"
#include "mofa/core/image_io.hpp"
#include "mofa/core/types.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace mofa;

TEST_SUITE("core") {

TEST_CASE("image tensor rejects out-of-range values and tiny images") {
  CHECK_NOTHROW(ImageTensor(Tensor3(12, 12, 3, 0.5)));
  CHECK_THROWS_AS(ImageTensor(Tensor3(11, 12, 3, 0.5)), DomainError);
  CHECK_THROWS_AS(ImageTensor(Tensor3(12, 11, 3, 0.5)), DomainError);
  Tensor3 t(16, 16, 3, 0.5);
  t(3, 4, 1) = 1.0000001;
  CHECK_THROWS_AS(ImageTensor{t}, DomainError);
  t(3, 4, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ImageTensor{t}, DomainError);
  t(3, 4, 1) = -1e-12;
  CHECK_THROWS_AS(ImageTensor{t}, DomainError);
}

TEST_CASE("noise must vanish off its mask") {
  auto mask = std::make_shared<PatchMask>(16, 16, MaskStyle::thin);
  mask->set(5, 5);
  Tensor3 delta(16, 16, 3);
  delta(5, 5, 0) = 0.3;
  CHECK_NOTHROW(AdversarialNoise(delta, mask));
  delta(6, 5, 2) = 0.1;
  CHECK_THROWS_AS(AdversarialNoise(delta, mask), DomainError);
  CHECK_THROWS_AS(AdversarialNoise(Tensor3(16, 15, 3), mask), DomainError);
}

TEST_CASE("apply_noise stays in range and only changes masked pixels") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 12 + static_cast<int>(rng.index(20));
    const int w = 12 + static_cast<int>(rng.index(20));
    ImageTensor image(oracle::random_tensor(rng, h, w, 3));
    auto mask = std::make_shared<PatchMask>(h, w, MaskStyle::large);
    Tensor3 delta(h, w, 3);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (rng.uniform() < 0.3) {
          mask->set(y, x);
          for (int c = 0; c < 3; ++c) delta(y, x, c) = rng.uniform(-1.5, 1.5);
        }
      }
    }
    const ImageTensor out = apply_noise(image, AdversarialNoise(delta, mask));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          CHECK(out(y, x, c) >= 0.0);
          CHECK(out(y, x, c) <= 1.0);
          if (!mask->contains(y, x)) CHECK(out(y, x, c) == image(y, x, c));
        }
      }
    }
  }
}

TEST_CASE("identity validation") {
  Identity empty{"x", {}};
  CHECK_THROWS_AS(empty.validate(), DomainError);
  Identity mixed{"x", {ImageTensor(Tensor3(12, 12, 3)), ImageTensor(Tensor3(12, 12, 1))}};
  CHECK_THROWS_AS(mixed.validate(), DomainError);
}

TEST_CASE("png round trip") {
  TempDir dir("png");
  SUBCASE("black and white") {
    save_image(ImageTensor(Tensor3(16, 16, 3, 0.0)), dir / "black.png");
    save_image(ImageTensor(Tensor3(16, 16, 3, 1.0)), dir / "white.png");
    const auto black = load_image(dir / "black.png");
    const auto white = load_image(dir / "white.png");
    CHECK(black.shape() == Shape3{16, 16, 3});
    for (double v : black.pixels().data()) CHECK(v == 0.0);
    for (double v : white.pixels().data()) CHECK(v == 1.0);
  }
  SUBCASE("random images lose at most one level") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      const ImageTensor img(oracle::random_tensor(rng, 12 + static_cast<int>(rng.index(10)),
                                                  12 + static_cast<int>(rng.index(10)), 3));
      save_image(img, dir / "r.png");
      const auto back = load_image(dir / "r.png");
      REQUIRE(back.shape() == img.shape());
      double worst = 0.0;
      for (std::size_t k = 0; k < img.pixels().size(); ++k) {
        worst = std::max(worst, std::fabs(back.pixels().data()[k] - img.pixels().data()[k]));
      }
      CHECK(worst <= 1.0 / 255.0);
    }
  }
  SUBCASE("quantized images round trip exactly") {
    Rng rng(6);
    const Tensor3 q = quantize_8bit(oracle::random_tensor(rng, 20, 14, 3));
    save_image(ImageTensor(q), dir / "q.png");
    CHECK(load_image(dir / "q.png").pixels() == q);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError); }
}

TEST_CASE("array persistence") {
  TempDir dir("arr");
  SUBCASE("scalar") {
    NdArray scalar{{}, {0.0f}};
    save_array(scalar, dir / "s.f32");
    CHECK(load_array(dir / "s.f32") == scalar);
  }
  SUBCASE("random arrays are bit-identical after a round trip") {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
      NdArray a;
      const int rank = static_cast<int>(rng.index(4)) + 1;
      for (int r = 0; r < rank; ++r) a.shape.push_back(1 + rng.index(5));
      a.values.resize(NdArray::element_count(a.shape));
      for (auto& v : a.values) v = static_cast<float>(rng.uniform(-1e6, 1e6));
      save_array(a, dir / "a.f32");
      const NdArray b = load_array(dir / "a.f32");
      CHECK(b.shape == a.shape);
      REQUIRE(b.values.size() == a.values.size());
      CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0);
    }
  }
  SUBCASE("3x4x3 tensor") {
    Rng rng(3);
    const Tensor3 t = oracle::random_tensor(rng, 3, 4, 3);
    const NdArray a = to_array(t);
    save_array(a, dir / "t.f32");
    CHECK(load_array(dir / "t.f32") == a);
    CHECK(to_tensor3(a).shape() == t.shape());
  }
  SUBCASE("truncated payload is corruption") {
    NdArray a{{10}, std::vector<float>(10, 1.0f)};
    save_array(a, dir / "c.f32");
    std::filesystem::resize_file(dir / "c.f32", 9 * sizeof(float));
    CHECK_THROWS_AS(load_array(dir / "c.f32"), CorruptionError);
  }
  SUBCASE("header must declare float32") {
    NdArray a{{2}, {1.0f, 2.0f}};
    save_array(a, dir / "d.f32");
    std::ofstream(header_path(dir / "d.f32")) << "shape=2\ndtype=float64\norder=row-major\n";
    CHECK_THROWS_AS(load_array(dir / "d.f32"), CorruptionError);
  }
}

TEST_CASE("sha256 of known inputs") {
  const std::string abc = "abc";
  CHECK(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir a("ha");
  TempDir b("hb");
  for (const auto* d : {&a, &b}) {
    std::filesystem::create_directories(d->path() / "sub");
    std::ofstream(d->path() / "x.txt") << "one";
    std::ofstream(d->path() / "sub" / "y.txt") << "two";
  }
  CHECK(sha256_tree(a.path()) == sha256_tree(b.path()));
  std::ofstream(b.path() / "sub" / "y.txt") << "three";
  CHECK(sha256_tree(a.path()) != sha256_tree(b.path()));
}

TEST_CASE("attack config defaults and validation") {
  const auto di = AttackConfig::defaults_for(AttackMode::di);
  const auto ue = AttackConfig::defaults_for(AttackMode::ue);
  CHECK(di.margin_k == 0.95);
  CHECK(di.mask_size == MaskStyle::large);
  CHECK(ue.margin_k == 0.30);
  CHECK(ue.mask_size == MaskStyle::thin);
  CHECK(di.exponent_s == 3.0);
  CHECK(di.detect_threshold_tau == 0.6);
  CHECK(di.p_norm == 2.0);
  CHECK(di.iterations == 500);
  CHECK(di.repeats == 3);

  AttackConfig c = di;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // DI without a target
  c.target = "id001";
  CHECK_NOTHROW(c.validate());
  auto broken = [&](auto edit) {
    AttackConfig x = c;
    edit(x);
    CHECK_THROWS_AS(x.validate(), ConfigError);
  };
  broken([](AttackConfig& x) { x.alpha = -1; });
  broken([](AttackConfig& x) { x.exponent_s = 0; });
  broken([](AttackConfig& x) { x.margin_k = 1.5; });
  broken([](AttackConfig& x) { x.detect_threshold_tau = 1.0; });
  broken([](AttackConfig& x) { x.detect_threshold_tau = 0.0; });
  broken([](AttackConfig& x) { x.p_norm = 0; });
  broken([](AttackConfig& x) { x.step_size = 0; });
  broken([](AttackConfig& x) { x.repeats = 0; });
  broken([](AttackConfig& x) { x.iterations = -1; });

  AttackConfig de = AttackConfig::defaults_for(AttackMode::de);
  CHECK_THROWS_AS(de.validate(), ConfigError);
  de.registered = "id000";
  CHECK_NOTHROW(de.validate());
}

TEST_CASE("mode and mask names") {
  CHECK(parse_attack_mode("DI") == AttackMode::di);
  CHECK(parse_attack_mode("ue") == AttackMode::ue);
  CHECK_THROWS_AS(parse_attack_mode("xx"), ConfigError);
  CHECK(parse_mask_style("thin") == MaskStyle::thin);
  CHECK_THROWS_AS(parse_mask_style("medium"), ConfigError);
  for (AttackMode m : {AttackMode::di, AttackMode::de, AttackMode::ue}) CHECK(parse_attack_mode(to_string(m)) == m);
}

TEST_CASE("config text format") {
  SUBCASE("comments, blanks and overrides") {
    const auto file = parse_config_text("# attack\nmode = di\n\ntarget = id004   # the victim\nalpha=2.5\n");
    CHECK(file.size() == 3);
    const auto c = resolve_config(file, {{"alpha", "0.5"}});
    CHECK(c.mode == AttackMode::di);
    CHECK(c.target == "id004");
    CHECK(c.alpha == 0.5);
    CHECK(c.margin_k == 0.95);
  }
  SUBCASE("mode argument wins and brings its defaults") {
    const auto c = resolve_config(parse_config_text("mode = di\nregistered = id002\n"), {}, AttackMode::ue);
    CHECK(c.mode == AttackMode::ue);
    CHECK(c.margin_k == 0.30);
    CHECK(c.mask_size == MaskStyle::thin);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_config_text("alpha 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("speed = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("alpha = 1\nalpha = 2\n"), ConfigError);
    CHECK_THROWS_AS(resolve_config(parse_config_text("alpha = 1\n"), {}), ConfigError);
    CHECK_THROWS_AS(resolve_config(parse_config_text("mode = di\ntarget = a\nalpha = fast\n"), {}), ConfigError);
    CHECK_THROWS_AS(resolve_config(parse_config_text("mode = di\ntarget = a\niterations = 2.5\n"), {}),
                    ConfigError);
    CHECK_THROWS_AS(resolve_config(parse_config_text("mode = de\n"), {}), ConfigError);
  }
  SUBCASE("format round-trips every field exactly") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      AttackConfig c = AttackConfig::defaults_for(static_cast<AttackMode>(rng.index(3)));
      c.alpha = rng.uniform(0, 10);
      c.exponent_s = rng.uniform(0.5, 4);
      c.margin_k = rng.uniform();
      c.detect_threshold_tau = rng.uniform(0.01, 0.99);
      c.p_norm = rng.uniform(0.5, 3);
      c.iterations = static_cast<int>(rng.index(1000));
      c.step_size = rng.uniform(1e-4, 0.1);
      c.seed = rng.index(1ull << 62);
      c.repeats = 1 + static_cast<int>(rng.index(5));
      c.mask_size = rng.uniform() < 0.5 ? MaskStyle::thin : MaskStyle::large;
      c.matcher_weight = rng.uniform();
      c.target = "id007";
      c.registered = "id003";
      const AttackConfig back = resolve_config(parse_config_text(format_config(c)), {});
      CHECK(back.mode == c.mode);
      CHECK(back.alpha == c.alpha);
      CHECK(back.exponent_s == c.exponent_s);
      CHECK(back.margin_k == c.margin_k);
      CHECK(back.detect_threshold_tau == c.detect_threshold_tau);
      CHECK(back.p_norm == c.p_norm);
      CHECK(back.iterations == c.iterations);
      CHECK(back.step_size == c.step_size);
      CHECK(back.seed == c.seed);
      CHECK(back.repeats == c.repeats);
      CHECK(back.mask_size == c.mask_size);
      CHECK(back.matcher_weight == c.matcher_weight);
      CHECK(back.target == c.target);
      CHECK(back.registered == c.registered);
    }
  }
}

}  // TEST_SUITE

#include <doctest.h>

#include <queue>

#include "mofa/core/errors.hpp"
#include "mofa/masks.hpp"
#include "mofa/synth.hpp"

using namespace mofa;
using namespace mofa::masks;

namespace {

int components_8(const PatchMask& m) {
  std::vector<int> seen(m.bits().size(), 0);
  int count = 0;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const auto idx = static_cast<std::size_t>(y * m.width() + x);
      if (!m.contains(y, x) || seen[idx]) continue;
      ++count;
      std::queue<std::pair<int, int>> todo;
      todo.push({y, x});
      seen[idx] = 1;
      while (!todo.empty()) {
        const auto [cy, cx] = todo.front();
        todo.pop();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy;
            const int nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= m.height() || nx >= m.width() || !m.contains(ny, nx)) continue;
            const auto n = static_cast<std::size_t>(ny * m.width() + nx);
            if (!seen[n]) {
              seen[n] = 1;
              todo.push({ny, nx});
            }
          }
        }
      }
    }
  }
  return count;
}

std::size_t count_set(const PatchMask& m) {
  std::size_t n = 0;
  for (auto b : m.bits()) n += b;
  return n;
}

}  // namespace

TEST_SUITE("masks") {

TEST_CASE("large frames cover at least three times the thin area") {
  const Point left{27, 30};
  const Point right{37, 30};
  const auto thin = eyeglass_mask(left, right, 64, 64, MaskStyle::thin);
  const auto large = eyeglass_mask(left, right, 64, 64, MaskStyle::large);
  CHECK(thin.area() == count_set(thin));
  CHECK(large.area() == count_set(large));
  CHECK(static_cast<double>(large.area()) / static_cast<double>(thin.area()) >= 3.0);
}

TEST_CASE("area ratio holds across eye spacings and sub-pixel offsets") {
  for (double spacing = 8.0; spacing <= 11.0; spacing += 0.25) {
    for (double ox = 0.0; ox < 1.0; ox += 0.25) {
      for (double oy = 0.0; oy < 1.0; oy += 0.25) {
        const Point left{32 - spacing / 2 + ox, 28 + oy};
        const Point right{32 + spacing / 2 + ox, 28 + oy};
        const auto thin = eyeglass_mask(left, right, 64, 64, MaskStyle::thin);
        const auto large = eyeglass_mask(left, right, 64, 64, MaskStyle::large);
        CAPTURE(spacing);
        CHECK(static_cast<double>(large.area()) / static_cast<double>(thin.area()) >= 3.0);
      }
    }
  }
}

TEST_CASE("masks on rendered faces") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = synth::render(synth::generate_identity(seed), seed * 7 + 1, {});
    REQUIRE(r.face.has_value());
    const auto& f = *r.face;
    const double mouth_line = (0.5 * (f.eye_left.y + f.eye_right.y) + f.chin.y) / 2.0;
    const auto thin = eyeglass_mask(f.eye_left, f.eye_right, 64, 64, MaskStyle::thin);
    const auto large = eyeglass_mask(f.eye_left, f.eye_right, 64, 64, MaskStyle::large);
    CHECK(thin.area() < large.area());
    for (const auto* m : {&thin, &large}) {
      CHECK(m->height() == 64);
      CHECK(m->width() == 64);
      for (auto b : m->bits()) CHECK((b == 0 || b == 1));
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (m->contains(y, x)) CHECK(y + 0.5 < mouth_line);
        }
      }
      CHECK(components_8(*m) == 1);
      // Temple bars run to both image edges at eye height.
      CHECK(m->contains(static_cast<int>(f.eye_left.y), 0));
      CHECK(m->contains(static_cast<int>(f.eye_right.y), 63));
    }
    CHECK(eyeglass_mask(f.eye_left, f.eye_right, 64, 64, MaskStyle::thin) == thin);
  }
}

TEST_CASE("eye order does not matter") {
  CHECK(eyeglass_mask({27, 30}, {37, 31}, 64, 64, MaskStyle::thin) ==
        eyeglass_mask({37, 31}, {27, 30}, 64, 64, MaskStyle::thin));
}

TEST_CASE("geometry errors") {
  CHECK_THROWS_AS(eyeglass_mask({-1, 30}, {37, 30}, 64, 64, MaskStyle::thin), GeometryError);
  CHECK_THROWS_AS(eyeglass_mask({27, 30}, {37, 64}, 64, 64, MaskStyle::thin), GeometryError);
  CHECK_THROWS_AS(eyeglass_mask({30, 30}, {37, 30}, 64, 64, MaskStyle::large), GeometryError);
  CHECK_NOTHROW(eyeglass_mask({29, 30}, {37, 30}, 64, 64, MaskStyle::large));
}

TEST_CASE("frame geometry") {
  const auto thin = frame_geometry(MaskStyle::thin);
  const auto large = frame_geometry(MaskStyle::large);
  CHECK_FALSE(thin.filled_rims);
  CHECK(large.filled_rims);
  CHECK(thin.rim_thickness >= 1.0);
  CHECK(thin.rim_thickness <= 2.0);
  CHECK(thin.bridge_height == 2.0);
  CHECK(large.bridge_height == 6.0);
}

TEST_CASE("random patch") {
  SUBCASE("empty mask gives zero noise") {
    auto empty = std::make_shared<const PatchMask>(20, 20, MaskStyle::thin);
    const auto noise = random_patch(empty, 3);
    for (double v : noise.delta().data()) CHECK(v == 0.0);
  }
  SUBCASE("support equals the mask for 100 seeds") {
    auto mask = std::make_shared<const PatchMask>(eyeglass_mask({27, 30}, {37, 30}, 64, 64, MaskStyle::large));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto noise = random_patch(mask, seed);
      int mismatches = 0;
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          for (int c = 0; c < 3; ++c) {
            const double v = noise.delta()(y, x, c);
            if ((v != 0.0) != mask->contains(y, x)) ++mismatches;
            if (v < -0.5 || v >= 0.5) ++mismatches;
          }
        }
      }
      CHECK(mismatches == 0);
    }
  }
  SUBCASE("deterministic in the seed") {
    auto mask = std::make_shared<const PatchMask>(eyeglass_mask({27, 30}, {37, 30}, 64, 64, MaskStyle::thin));
    CHECK(random_patch(mask, 9).delta() == random_patch(mask, 9).delta());
    CHECK_FALSE(random_patch(mask, 9).delta() == random_patch(mask, 10).delta());
  }
}

}  // TEST_SUITE

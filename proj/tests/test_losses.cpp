#include <doctest.h>

#include <cfloat>
#include <cmath>

#include "mofa/core/errors.hpp"
#include "mofa/losses.hpp"
#include "support/oracles.hpp"

using namespace mofa;
using namespace mofa::losses;

namespace {

oracle::GridCase grid_case(std::vector<std::vector<double>> probs, std::vector<std::vector<int>> active) {
  oracle::GridCase g;
  g.rows = static_cast<int>(probs.size());
  g.cols = static_cast<int>(probs.front().size());
  g.probs = std::move(probs);
  g.active = std::move(active);
  return g;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("detectable loss examples") {
  const auto none = grid_case({{0.3, 0.9}, {0.1, 0.5}}, {{0, 0}, {0, 0}});
  for (double s : {1.0, 2.0, 3.0, 2.5}) {
    CHECK(det_loss_detectable(none.grid(), none.mask(), 0.95, s) == 0.0);
    CHECK(det_loss_evasive(none.grid(), none.mask(), 0.3, s) == 0.0);
  }
  const auto single = grid_case({{0.4}}, {{1}});
  CHECK(det_loss_detectable(single.grid(), single.mask(), 1.0, 1.0) == doctest::Approx(0.6).epsilon(1e-15));
  const auto diag = grid_case({{0.5, 0.9}, {0.2, 0.7}}, {{1, 0}, {0, 1}});
  CHECK(det_loss_detectable(diag.grid(), diag.mask(), 0.95, 2.0) == doctest::Approx(0.265).epsilon(1e-14));
}

TEST_CASE("evasive loss examples") {
  const auto single = grid_case({{0.9}}, {{1}});
  CHECK(det_loss_evasive(single.grid(), single.mask(), 0.3, 1.0) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("grid losses equal the double-loop oracle") {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = oracle::random_grid(rng);
    const double s = 1.0 + static_cast<double>(rng.index(3));
    const double k = std::array<double, 4>{0.0, 0.3, 0.95, 1.0}[rng.index(4)];
    worst = std::max(worst, std::fabs(det_loss_detectable(g.grid(), g.mask(), k, s) -
                                      oracle::detectable(g.probs, g.active, k, s)));
    worst = std::max(worst,
                     std::fabs(det_loss_evasive(g.grid(), g.mask(), k, s) - oracle::evasive(g.probs, g.active, k, s)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("fractional exponents use the signed power") {
  const auto g = grid_case({{0.99, 0.2}}, {{1, 1}});
  const double expected = -std::pow(0.04, 1.5) + std::pow(0.75, 1.5);
  CHECK(det_loss_detectable(g.grid(), g.mask(), 0.95, 1.5) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(grid_power(-0.25, 0.5) == doctest::Approx(-0.5));
  CHECK(grid_power(-0.5, 3.0) == -0.125);
  CHECK(grid_power(-0.5, 2.0) == 0.25);
}

TEST_CASE("odd exponents: evasive is the negated detectable loss") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = oracle::random_grid(rng);
    const double k = rng.uniform();
    for (double s : {1.0, 3.0}) {
      CHECK(det_loss_evasive(g.grid(), g.mask(), k, s) ==
            doctest::Approx(-det_loss_detectable(g.grid(), g.mask(), k, s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("inactive windows do not affect the grid losses") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = oracle::random_grid(rng);
    const double k = rng.uniform();
    const double s = 1.0 + static_cast<double>(rng.index(3));
    const double det = det_loss_detectable(g.grid(), g.mask(), k, s);
    const double eva = det_loss_evasive(g.grid(), g.mask(), k, s);
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        if (!g.active[r][c]) g.probs[r][c] = rng.uniform();
      }
    }
    CHECK(det_loss_detectable(g.grid(), g.mask(), k, s) == det);
    CHECK(det_loss_evasive(g.grid(), g.mask(), k, s) == eva);
  }
}

TEST_CASE("grid loss gradients match central differences") {
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_grid(rng);
    const double k = rng.uniform();
    const double s = trial % 4 == 3 ? rng.uniform(1.0, 3.0) : 1.0 + static_cast<double>(rng.index(3));
    const bool evasive = trial % 2 == 1;
    Grid d;
    evasive ? det_loss_evasive(g.grid(), g.mask(), k, s, &d) : det_loss_detectable(g.grid(), g.mask(), k, s, &d);
    const Grid probs = g.grid();
    std::vector<double> flat(probs.data().begin(), probs.data().end());
    const std::size_t i = rng.index(flat.size());
    auto f = [&](const std::vector<double>& x) {
      oracle::GridCase h = g;
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) h.probs[r][c] = x[static_cast<std::size_t>(r * g.cols + c)];
      }
      return evasive ? oracle::evasive(h.probs, h.active, k, s) : oracle::detectable(h.probs, h.active, k, s);
    };
    const double numeric = oracle::central_difference(f, flat, i, 1e-6);
    // Inactive windows have exactly zero gradient.
    if (!g.active[i / g.cols][i % g.cols]) CHECK(d.data()[i] == 0.0);
    worst = std::max(worst, oracle::relative_error(d.data()[i], numeric, 1e-6));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("grid loss argument checks") {
  const auto g = grid_case({{0.4, 0.5}}, {{1, 1}});
  const auto other = grid_case({{0.4}, {0.5}}, {{1}, {1}});
  CHECK_THROWS_AS(det_loss_detectable(g.grid(), other.mask(), 0.9, 3), DomainError);
  CHECK_THROWS_AS(det_loss_evasive(g.grid(), g.mask(), 0.9, 0), DomainError);
}

TEST_CASE("matcher losses") {
  std::vector<double> e(16, 0.0);
  e[0] = 1.0;
  std::vector<double> f(16, 0.0);
  f[3] = 1.0;
  CHECK(imper_loss(e, e, 2.0) == 0.0);
  CHECK(imper_loss(e, f, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(evasion_loss(e, e, 2.0) == 0.0);
  CHECK(evasion_loss(e, f, 2.0) == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-15));

  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = trial % 2 ? 2.0 : rng.uniform(1.0, 4.0);
    const auto a = oracle::random_unit(rng, 32);
    const auto b = oracle::random_unit(rng, 32);
    worst = std::max(worst, std::fabs(imper_loss(a, b, p) - oracle::pnorm_distance(a, b, p)));
    if (trial < 100) CHECK(evasion_loss(a, b, p) == -imper_loss(a, b, p));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("matcher loss gradients match central differences") {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double p = trial % 2 ? 2.0 : rng.uniform(1.2, 3.0);
    const auto target = oracle::random_unit(rng, 16);
    const auto source = oracle::random_unit(rng, 16);
    const bool evasion = trial % 3 == 0;
    std::vector<double> d;
    evasion ? evasion_loss(target, source, p, &d) : imper_loss(target, source, p, &d);
    const std::size_t i = rng.index(16);
    auto f = [&](const std::vector<double>& x) {
      const double dist = oracle::pnorm_distance(target, x, p);
      return evasion ? -dist : dist;
    };
    worst = std::max(worst, oracle::relative_error(d[i], oracle::central_difference(f, source, i, 1e-6)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("total loss") {
  CHECK(total_loss(AttackMode::di, 0.7, 1.2, 0.0).total == 1.2);
  const auto b = total_loss(AttackMode::di, 0.265, std::sqrt(2.0), 1.0);
  CHECK(b.total == doctest::Approx(0.265 + std::sqrt(2.0)).epsilon(1e-15));
  CHECK(b.detection_term == 0.265);
  CHECK(b.alpha == 1.0);
  CHECK(total_loss(AttackMode::di, 0.0, 0.0, 3.0).total == 0.0);
  CHECK(total_loss(AttackMode::ue, 0.4, -0.5, 2.0, 0.0).total == 0.8);

  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = rng.uniform(0, 10);
    const double det = rng.uniform(-5, 5);
    const double mat = rng.uniform(-2, 2);
    const auto mode = static_cast<AttackMode>(rng.index(3));
    const double diff = total_loss(mode, det, mat, alpha).total - total_loss(mode, det, mat, 0.0).total;
    // Equal up to the rounding of the two sums.
    CHECK(std::fabs(diff - alpha * det) <= 4 * DBL_EPSILON * (std::fabs(alpha * det) + std::fabs(mat)));
  }
}

TEST_CASE("mode wiring") {
  CHECK_FALSE(uses_evasive_detection(AttackMode::di));
  CHECK_FALSE(uses_evasive_detection(AttackMode::de));
  CHECK(uses_evasive_detection(AttackMode::ue));
  CHECK(uses_impersonation(AttackMode::di));
  CHECK_FALSE(uses_impersonation(AttackMode::de));
  CHECK_FALSE(uses_impersonation(AttackMode::ue));
}

}  // TEST_SUITE

// Reference implementations written independently of the library, plus the
// random generators the property tests draw from.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mofa/core/random.hpp"
#include "mofa/core/tensor.hpp"
#include "mofa/detector.hpp"

namespace oracle {

inline double signed_pow(double x, double s) {
  if (s == std::floor(s)) return std::pow(x, s);
  return std::copysign(std::pow(std::fabs(x), s), x);
}

/// Sum over the grid of (K*A - A*Y)^s, one cell at a time.
inline double detectable(const std::vector<std::vector<double>>& probs,
                         const std::vector<std::vector<int>>& active, double margin, double s) {
  double total = 0.0;
  for (std::size_t r = 0; r < probs.size(); ++r) {
    for (std::size_t c = 0; c < probs[r].size(); ++c) {
      const double a = active[r][c];
      total += signed_pow(margin * a - a * probs[r][c], s);
    }
  }
  return total;
}

/// Sum over the grid of (A*Y - K*A)^s.
inline double evasive(const std::vector<std::vector<double>>& probs, const std::vector<std::vector<int>>& active,
                      double margin, double s) {
  double total = 0.0;
  for (std::size_t r = 0; r < probs.size(); ++r) {
    for (std::size_t c = 0; c < probs[r].size(); ++c) {
      const double a = active[r][c];
      total += signed_pow(a * probs[r][c] - margin * a, s);
    }
  }
  return total;
}

/// (sum |a_i - b_i|^p)^(1/p) by direct summation.
inline double pnorm_distance(const std::vector<double>& a, const std::vector<double>& b, double p) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::pow(std::fabs(a[i] - b[i]), p);
  return std::pow(sum, 1.0 / p);
}

/// Central difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

struct GridCase {
  int rows = 1;
  int cols = 1;
  std::vector<std::vector<double>> probs;
  std::vector<std::vector<int>> active;

  mofa::Grid grid() const {
    mofa::Grid g(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) g(r, c) = probs[r][c];
    }
    return g;
  }

  mofa::detector::ActiveWindowMask mask() const {
    mofa::detector::ActiveWindowMask m;
    m.rows = rows;
    m.cols = cols;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m.active.push_back(static_cast<std::uint8_t>(active[r][c]));
    }
    return m;
  }
};

/// Random grid up to max_side x max_side with probabilities in [0,1] and
/// roughly half the windows active.
inline GridCase random_grid(mofa::Rng& rng, int max_side = 8) {
  GridCase g;
  g.rows = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_side)));
  g.cols = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_side)));
  g.probs.assign(g.rows, std::vector<double>(g.cols));
  g.active.assign(g.rows, std::vector<int>(g.cols));
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      g.probs[r][c] = rng.uniform();
      g.active[r][c] = rng.uniform() < 0.5 ? 1 : 0;
    }
  }
  return g;
}

inline std::vector<double> random_vector(mofa::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::vector<double> random_unit(mofa::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

inline mofa::Tensor3 random_tensor(mofa::Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
  mofa::Tensor3 t(h, w, c);
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle

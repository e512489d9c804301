#include "mofa/losses.hpp"

#include <cmath>

#include "mofa/core/errors.hpp"

namespace mofa::losses {

namespace {

bool integral(double s) { return std::floor(s) == s; }

void check_grid(const Grid& probs, const detector::ActiveWindowMask& active, double exponent_s) {
  if (probs.rows() != active.rows || probs.cols() != active.cols ||
      active.active.size() != probs.size()) {
    throw DomainError("probability grid is " + std::to_string(probs.rows()) + "x" +
                      std::to_string(probs.cols()) + " but the active mask is " +
                      std::to_string(active.rows) + "x" + std::to_string(active.cols));
  }
  if (!(exponent_s > 0.0)) throw DomainError("exponent s must be positive");
}

// Sum of sign * (K - Y)^s over active windows.
double grid_loss(const Grid& probs, const detector::ActiveWindowMask& active, double margin_k,
                 double exponent_s, double sign, Grid* d_probs) {
  check_grid(probs, active, exponent_s);
  if (d_probs) *d_probs = Grid(probs.rows(), probs.cols());
  auto y = probs.data();
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!active.active[i]) continue;
    const double base = sign * (margin_k - y[i]);
    total += grid_power(base, exponent_s);
    if (d_probs) d_probs->data()[i] = -sign * grid_power_derivative(base, exponent_s);
  }
  return total;
}

}  // namespace

double grid_power(double x, double s) {
  if (integral(s)) return std::pow(x, s);
  const double m = std::pow(std::abs(x), s);
  return x < 0.0 ? -m : m;
}

double grid_power_derivative(double x, double s) {
  if (s == 1.0) return 1.0;
  if (integral(s)) return s * std::pow(x, s - 1.0);
  if (x == 0.0) return 0.0;
  return s * std::pow(std::abs(x), s - 1.0);
}

double det_loss_detectable(const Grid& probs, const detector::ActiveWindowMask& active, double margin_k,
                           double exponent_s, Grid* d_probs) {
  return grid_loss(probs, active, margin_k, exponent_s, 1.0, d_probs);
}

double det_loss_detectable(const detector::DetectionMap& map, const detector::ActiveWindowMask& active,
                           double margin_k, double exponent_s, Grid* d_probs) {
  return det_loss_detectable(map.probs, active, margin_k, exponent_s, d_probs);
}

double det_loss_evasive(const Grid& probs, const detector::ActiveWindowMask& active, double margin_k,
                        double exponent_s, Grid* d_probs) {
  return grid_loss(probs, active, margin_k, exponent_s, -1.0, d_probs);
}

double det_loss_evasive(const detector::DetectionMap& map, const detector::ActiveWindowMask& active,
                        double margin_k, double exponent_s, Grid* d_probs) {
  return det_loss_evasive(map.probs, active, margin_k, exponent_s, d_probs);
}

double imper_loss(std::span<const double> f_target, std::span<const double> f_source, double p,
                  std::vector<double>* d_source) {
  const double d = matcher::distance(f_target, f_source, p);
  if (d_source) *d_source = matcher::distance_gradient(f_target, f_source, p);
  return d;
}

double imper_loss(const matcher::Embedding& f_target, const matcher::Embedding& f_source, double p) {
  return imper_loss(f_target.values(), f_source.values(), p);
}

double evasion_loss(std::span<const double> f_registered, std::span<const double> f_source, double p,
                    std::vector<double>* d_source) {
  const double d = imper_loss(f_registered, f_source, p, d_source);
  if (d_source) {
    for (double& g : *d_source) g = -g;
  }
  return -d;
}

double evasion_loss(const matcher::Embedding& f_registered, const matcher::Embedding& f_source, double p) {
  return evasion_loss(f_registered.values(), f_source.values(), p);
}

LossBreakdown total_loss(AttackMode, double detection_term, double matcher_term, double alpha,
                         double matcher_weight) {
  LossBreakdown b;
  b.detection_term = detection_term;
  b.matcher_term = matcher_term;
  b.alpha = alpha;
  b.matcher_weight = matcher_weight;
  b.total = alpha * detection_term + matcher_weight * matcher_term;
  return b;
}

bool uses_evasive_detection(AttackMode mode) { return mode == AttackMode::ue; }
bool uses_impersonation(AttackMode mode) { return mode == AttackMode::di; }

}  // namespace mofa::losses

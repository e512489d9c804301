#pragma once

#include <span>
#include <vector>

#include "mofa/core/types.hpp"
#include "mofa/detector.hpp"
#include "mofa/matcher.hpp"

namespace mofa::losses {

/// x^s for integral s; sign(x)|x|^s otherwise, so odd-like behaviour carries
/// over to fractional exponents.
double grid_power(double x, double s);
/// d grid_power(x, s) / dx.
double grid_power_derivative(double x, double s);

/// Sum over windows of (K*A - A*Y)^s. Inactive windows contribute exactly 0.
/// When `d_probs` is non-null it receives d loss / d Y. Throws DomainError on
/// a shape mismatch or s <= 0.
double det_loss_detectable(const Grid& probs, const detector::ActiveWindowMask& active, double margin_k,
                           double exponent_s, Grid* d_probs = nullptr);
double det_loss_detectable(const detector::DetectionMap& map, const detector::ActiveWindowMask& active,
                           double margin_k, double exponent_s, Grid* d_probs = nullptr);

/// Sum over windows of (A*Y - K*A)^s.
double det_loss_evasive(const Grid& probs, const detector::ActiveWindowMask& active, double margin_k,
                        double exponent_s, Grid* d_probs = nullptr);
double det_loss_evasive(const detector::DetectionMap& map, const detector::ActiveWindowMask& active,
                        double margin_k, double exponent_s, Grid* d_probs = nullptr);

/// ||f_target - f_source||_p. `d_source` receives the gradient w.r.t. f_source.
double imper_loss(std::span<const double> f_target, std::span<const double> f_source, double p,
                  std::vector<double>* d_source = nullptr);
double imper_loss(const matcher::Embedding& f_target, const matcher::Embedding& f_source, double p);

/// -||f_registered - f_source||_p.
double evasion_loss(std::span<const double> f_registered, std::span<const double> f_source, double p,
                    std::vector<double>* d_source = nullptr);
double evasion_loss(const matcher::Embedding& f_registered, const matcher::Embedding& f_source, double p);

struct LossBreakdown {
  double detection_term = 0.0;
  double matcher_term = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double matcher_weight = 1.0;
};

/// total = alpha * detection_term + matcher_weight * matcher_term. With the
/// default unit matcher weight this is exactly alpha * detection + matcher.
LossBreakdown total_loss(AttackMode mode, double detection_term, double matcher_term, double alpha,
                         double matcher_weight = 1.0);

/// True if the mode pairs with the evasive detection loss (UE).
bool uses_evasive_detection(AttackMode mode);
/// True if the mode pairs with the impersonation matcher loss (DI).
bool uses_impersonation(AttackMode mode);

}  // namespace mofa::losses

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace avgsde {

// Closed-form epsilon-exponents of the inf_h balances. Templated so that the
// same expressions can be evaluated in exact rational arithmetic.

/// h-exponent of the strong bound, 1 - d/p0.
template <class Real>
Real regularity_gamma(Real d, Real p0) {
  return Real(1) - d / p0;
}

/// h-exponent of the total-variation bound, 1/2 - d/(2 p0).
template <class Real>
Real regularity_beta_w(Real d, Real p0) {
  return Real(1) / Real(2) - d / (Real(2) * p0);
}

/// inf_h (h^{beta_w} + (h/eps)^{-alpha}) ~ eps^{alpha beta_w / (alpha + beta_w)}.
template <class Real>
Real weak_exponent_closed_form(Real alpha, Real beta_w) {
  return alpha * beta_w / (alpha + beta_w);
}

/// [inf_h ((h/eps)^{-2 alpha} + h^{gamma})]^{ell} ~ eps^{ell 2 alpha gamma / (2 alpha + gamma)}.
template <class Real>
Real strong_exponent_closed_form(Real alpha, Real gamma, Real ell) {
  return ell * Real(2) * alpha * gamma / (Real(2) * alpha + gamma);
}

/// Parameters of the rate formulas. `alpha` empty selects omega(t) = t^{-1} ln t.
struct RateParams {
  std::optional<double> alpha = 1.0;
  std::size_t d = 1;
  double p0 = std::numeric_limits<double>::infinity();
  double ell = 0.5;
  double delta = 0.0;

  bool log_mode() const { return !alpha.has_value(); }
  double gamma() const;
  double beta_w() const;
  /// Throws ArgumentError unless p0 > max(d, 2) (or infinite), ell in (0, 1],
  /// alpha > 0 and delta in [0, 1).
  void validate() const;
};

struct RateExponent {
  double value = 0.0;
  /// True when obtained from numeric minimization (log mode) instead of the closed form.
  bool numeric = false;
};

RateExponent weak_rate_exponent(const RateParams& rp);
RateExponent strong_rate_exponent(const RateParams& rp, bool mu_dependent);

enum class RateMode { weak, strong };

struct InfHResult {
  double h_star = 0.0;
  double value = 0.0;
  /// omega increased somewhere on the probed arguments h/eps.
  bool nonmonotone_omega = false;
};

/// Minimizes h^{gamma_exp} + omega(h/eps) (weak) or omega(h/eps)^2 + h^{gamma_exp}
/// (strong) over log h in [log(eps^2), 0]: coarse scan, then golden-section
/// refinement to relative tolerance 1e-8.
InfHResult inf_h_rate(const std::function<double(double)>& omega, double gamma_exp, double eps, RateMode mode);

/// Closed-form minimum of h^{beta} + (h/eps)^{-a}: (1 + beta/a) u^{-a} eps^{a beta/(a+beta)}
/// with u = (a/beta)^{1/(a+beta)}. Returns (h_star, value).
std::pair<double, double> power_law_balance(double a, double beta, double eps);

/// omega(t) = t^{-alpha}.
std::function<double(double)> power_law_omega(double alpha);
/// omega(t) = t^{-1} ln t (clamped at 0 for t <= 1).
std::function<double(double)> log_omega();

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
};

/// Ordinary least squares of ln(error) against ln(eps).
RateFit fit_rate(std::span<const std::pair<double, double>> points);

/// One row of the rate table.
struct RateRow {
  RateParams params;
  double gamma = 0.0;
  double beta_w = 0.0;
  RateExponent weak;
  RateExponent strong_mu_dependent;
  RateExponent strong_mu_independent;
  /// Empty, or "supremal, not attained" for the limiting p0 of the power kernel.
  std::string flag;
  std::vector<double> eps;
  std::vector<double> h_star_weak;
  std::vector<double> h_star_strong;
};

RateRow rate_row(const RateParams& rp, std::span<const double> eps_list);

/// Rows for the power-kernel drift with exponents (alpha1, alpha2): the
/// supplied p0 (must be below d/(alpha2 - 1)) followed by the limiting p0.
std::vector<RateRow> power_kernel_rate_rows(double alpha1, double alpha2, std::size_t d,
                                            std::optional<double> p0, double ell,
                                            std::span<const double> eps_list);

}  // namespace avgsde

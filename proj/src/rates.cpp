#include "avgsde/rates.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "avgsde/error.hpp"

namespace avgsde {

double RateParams::gamma() const { return regularity_gamma(static_cast<double>(d), p0); }
double RateParams::beta_w() const { return regularity_beta_w(static_cast<double>(d), p0); }

void RateParams::validate() const {
  if (d == 0) throw ArgumentError("RateParams: d must be positive");
  const double lower = std::max(static_cast<double>(d), 2.0);
  if (!(p0 > lower)) throw ArgumentError(fmt::format("RateParams: p0 = {} must exceed max(d, 2) = {}", p0, lower));
  if (!(ell > 0.0 && ell <= 1.0)) throw ArgumentError(fmt::format("RateParams: ell = {} must lie in (0, 1]", ell));
  if (alpha && !(*alpha > 0.0)) throw ArgumentError("RateParams: alpha must be positive");
  if (!(delta >= 0.0 && delta < 1.0)) throw ArgumentError("RateParams: delta must lie in [0, 1)");
}

std::function<double(double)> power_law_omega(double alpha) {
  return [alpha](double t) { return std::pow(t, -alpha); };
}

// max(1, ln t)/t: equal to t^{-1} ln t for t >= e, and kept a valid decreasing
// modulus below e where t^{-1} ln t would vanish.
std::function<double(double)> log_omega() {
  return [](double t) { return std::max(1.0, std::log(t)) / t; };
}

std::pair<double, double> power_law_balance(double a, double beta, double eps) {
  const double u = std::pow(a / beta, 1.0 / (a + beta));
  const double h_star = u * std::pow(eps, a / (a + beta));
  const double value = (1.0 + a / beta) * std::pow(u, -a) * std::pow(eps, a * beta / (a + beta));
  return {h_star, value};
}

InfHResult inf_h_rate(const std::function<double(double)>& omega, double gamma_exp, double eps, RateMode mode) {
  if (!(eps > 0.0)) throw ArgumentError("inf_h_rate: eps must be positive");
  if (!(gamma_exp > 0.0)) throw ArgumentError("inf_h_rate: h-exponent must be positive");
  const auto objective = [&](double log_h) {
    const double h = std::exp(log_h);
    const double w = omega(h / eps);
    return mode == RateMode::weak ? std::pow(h, gamma_exp) + w : w * w + std::pow(h, gamma_exp);
  };

  InfHResult out;
  const double lo = 2.0 * std::log(eps);
  const double hi = 0.0;
  if (!(lo < hi)) throw ArgumentError("inf_h_rate: eps must be below 1");

  // Coarse scan also serves as the monotonicity probe of omega: arguments h/eps
  // increase along the scan.
  constexpr std::size_t kScan = 400;
  std::vector<double> values(kScan + 1);
  double previous_omega = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 0; i <= kScan; ++i) {
    const double u = lo + (hi - lo) * static_cast<double>(i) / kScan;
    const double w = omega(std::exp(u) / eps);
    if (w > previous_omega * (1.0 + 1e-12)) out.nonmonotone_omega = true;
    previous_omega = w;
    values[i] = objective(u);
    if (values[i] < values[best]) best = i;
  }

  double a = lo + (hi - lo) * static_cast<double>(best == 0 ? 0 : best - 1) / kScan;
  double b = lo + (hi - lo) * static_cast<double>(std::min(best + 1, kScan)) / kScan;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  while (b - a > 1e-8 * std::max(1.0, std::abs(a))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  double u_star = 0.5 * (a + b);
  double f_star = objective(u_star);
  // The scan endpoints can beat the interior when the minimum sits on the boundary.
  for (double edge : {lo, hi})
    if (const double fe = objective(edge); fe < f_star) {
      f_star = fe;
      u_star = edge;
    }
  out.h_star = std::exp(u_star);
  out.value = f_star;
  return out;
}

namespace {

// Local slope d ln V / d ln eps of the numerically minimized balance.
double numeric_exponent(const std::function<double(double)>& omega, double gamma_exp, RateMode mode) {
  const double e1 = 1e-10;
  const double e2 = 1e-11;
  const double v1 = inf_h_rate(omega, gamma_exp, e1, mode).value;
  const double v2 = inf_h_rate(omega, gamma_exp, e2, mode).value;
  return std::log(v1 / v2) / std::log(e1 / e2);
}

}  // namespace

RateExponent weak_rate_exponent(const RateParams& rp) {
  rp.validate();
  if (rp.log_mode()) return {numeric_exponent(log_omega(), rp.beta_w(), RateMode::weak), true};
  return {weak_exponent_closed_form(*rp.alpha, rp.beta_w()), false};
}

RateExponent strong_rate_exponent(const RateParams& rp, bool mu_dependent) {
  rp.validate();
  const double gamma = mu_dependent ? rp.gamma() : 1.0 - rp.delta;
  if (rp.log_mode()) return {rp.ell * numeric_exponent(log_omega(), gamma, RateMode::strong), true};
  return {strong_exponent_closed_form(*rp.alpha, gamma, rp.ell), false};
}

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw ArgumentError("fit_rate: at least 3 points required");
  double sx = 0.0, sy = 0.0;
  for (const auto& [eps, err] : points) {
    if (!(eps > 0.0)) throw ArgumentError(fmt::format("fit_rate: eps = {} must be positive", eps));
    if (!(err > 0.0)) throw ArgumentError(fmt::format("fit_rate: error = {} must be positive", err));
    sx += std::log(eps);
    sy += std::log(err);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [eps, err] : points) {
    const double dx = std::log(eps) - mx;
    const double dy = std::log(err) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw ArgumentError("fit_rate: eps values must not all coincide");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (const auto& [eps, err] : points) {
    const double r = std::log(err) - (fit.intercept + fit.slope * std::log(eps));
    sse += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return fit;
}

RateRow rate_row(const RateParams& rp, std::span<const double> eps_list) {
  rp.validate();
  RateRow row;
  row.params = rp;
  row.gamma = rp.gamma();
  row.beta_w = rp.beta_w();
  row.weak = weak_rate_exponent(rp);
  row.strong_mu_dependent = strong_rate_exponent(rp, true);
  row.strong_mu_independent = strong_rate_exponent(rp, false);
  const auto omega = rp.log_mode() ? log_omega() : power_law_omega(*rp.alpha);
  for (double eps : eps_list) {
    row.eps.push_back(eps);
    row.h_star_weak.push_back(inf_h_rate(omega, row.beta_w, eps, RateMode::weak).h_star);
    row.h_star_strong.push_back(inf_h_rate(omega, row.gamma, eps, RateMode::strong).h_star);
  }
  return row;
}

std::vector<RateRow> power_kernel_rate_rows(double alpha1, double alpha2, std::size_t d, std::optional<double> p0,
                                            double ell, std::span<const double> eps_list) {
  if (!(alpha1 > 0.0)) throw ArgumentError("power kernel rates: alpha1 must be positive");
  const double limit = static_cast<double>(d) / (alpha2 - 1.0);
  RateParams rp;
  rp.d = d;
  rp.ell = ell;
  if (alpha1 == 1.0)
    rp.alpha.reset();
  else
    rp.alpha = std::min(alpha1, 1.0);

  std::vector<RateRow> rows;
  if (p0) {
    if (!(*p0 < limit))
      throw ArgumentError(fmt::format("power kernel rates: p0 = {} must be below d/(alpha2 - 1) = {}", *p0, limit));
    rp.p0 = *p0;
    rows.push_back(rate_row(rp, eps_list));
  }
  rp.p0 = limit;
  rows.push_back(rate_row(rp, eps_list));
  rows.back().flag = "supremal, not attained";
  return rows;
}

}  // namespace avgsde

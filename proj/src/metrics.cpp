#include "avgsde/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include <fmt/format.h>

#include "avgsde/error.hpp"

namespace avgsde {

ErrorSummary summarize(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("summarize: no values");
  ErrorSummary s;
  s.n_replicas = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.estimate = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.estimate) * (v - s.estimate);
    const double n = static_cast<double>(values.size());
    s.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Strong error

ErrorSummary strong_error_from_gaps(std::span<const double> sup_gaps, std::size_t n_replicas,
                                    std::size_t n_particles, double ell) {
  if (!(ell > 0.0 && ell < 1.0)) throw ArgumentError(fmt::format("strong_error: ell = {} must lie in (0, 1)", ell));
  if (n_replicas == 0 || n_particles == 0 || sup_gaps.size() != n_replicas * n_particles)
    throw ArgumentError("strong_error: empty ensemble");
  std::vector<double> per_replica(n_replicas, 0.0);
  for (std::size_t r = 0; r < n_replicas; ++r) {
    double acc = 0.0;
    for (std::size_t p = 0; p < n_particles; ++p) acc += std::pow(sup_gaps[r * n_particles + p], 2.0 * ell);
    per_replica[r] = acc / static_cast<double>(n_particles);
  }
  auto s = summarize(per_replica);
  s.meta["ell"] = ell;
  s.meta["n_particles"] = static_cast<double>(n_particles);
  return s;
}

ErrorSummary strong_error(const CoupledEnsemble& ens, double ell) {
  auto s = strong_error_from_gaps(ens.sup_gap, ens.n_replicas, ens.n_particles, ell);
  s.meta["dt"] = ens.dt;
  s.meta["steps"] = static_cast<double>(ens.steps);
  return s;
}

// ---------------------------------------------------------------------------
// Histogram total variation

namespace {

using CellKey = std::array<std::int64_t, 3>;

void check_samples(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  if (dim == 0) throw ArgumentError("tv: dimension must be positive");
  if (a.empty() || b.empty()) throw ArgumentError("tv: both sample sets must be nonempty");
  if (a.size() % dim != 0 || b.size() % dim != 0) throw ArgumentError("tv: sample length not a multiple of dim");
}

std::vector<CellKey> cell_keys(std::span<const double> x, std::size_t dim, double width) {
  const std::size_t n = x.size() / dim;
  std::vector<CellKey> keys(n, CellKey{0, 0, 0});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      const double c = std::floor(x[i * dim + k] / width);
      if (!std::isfinite(c)) throw ArgumentError("tv: non-finite sample");
      keys[i][k] = static_cast<std::int64_t>(c);
    }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// (1/2) sum |p_a - p_b| over two sorted key lists.
double half_l1(const std::vector<CellKey>& ka, const std::vector<CellKey>& kb) {
  const double na = static_cast<double>(ka.size());
  const double nb = static_cast<double>(kb.size());
  double total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < ka.size() || j < kb.size()) {
    CellKey cell;
    if (j == kb.size() || (i < ka.size() && ka[i] < kb[j]))
      cell = ka[i];
    else
      cell = kb[j];
    std::size_t ca = 0, cb = 0;
    while (i < ka.size() && ka[i] == cell) ++ca, ++i;
    while (j < kb.size() && kb[j] == cell) ++cb, ++j;
    total += std::abs(static_cast<double>(ca) / na - static_cast<double>(cb) / nb);
  }
  return 0.5 * total;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double resolve_width(std::span<const double> a, std::span<const double> b, std::size_t dim,
                     std::optional<double> bin_width) {
  if (bin_width) {
    if (!(*bin_width > 0.0) || !std::isfinite(*bin_width)) throw ArgumentError("tv: bin width must be positive");
    return *bin_width;
  }
  return freedman_diaconis_width(a, b, dim);
}

}  // namespace

double freedman_diaconis_width(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  check_samples(a, b, dim);
  const std::size_t n = (a.size() + b.size()) / dim;
  double width = 0.0;
  double spread = 0.0;
  std::vector<double> coord;
  coord.reserve(n);
  for (std::size_t k = 0; k < dim; ++k) {
    coord.clear();
    for (std::size_t i = k; i < a.size(); i += dim) coord.push_back(a[i]);
    for (std::size_t i = k; i < b.size(); i += dim) coord.push_back(b[i]);
    std::sort(coord.begin(), coord.end());
    const double iqr = quantile_sorted(coord, 0.75) - quantile_sorted(coord, 0.25);
    width = std::max(width, 2.0 * iqr * std::cbrt(1.0 / static_cast<double>(n)));
    spread = std::max(spread, coord.back() - coord.front());
  }
  if (width > 0.0) return width;
  // Degenerate quartiles: fall back to range / sqrt(n), or 1 for a point mass.
  return spread > 0.0 ? spread / std::sqrt(static_cast<double>(n)) : 1.0;
}

double tv_histogram(std::span<const double> a, std::span<const double> b, std::size_t dim,
                    std::optional<double> bin_width) {
  check_samples(a, b, dim);
  if (dim > 3)
    throw UnsupportedDimensionError(
        fmt::format("tv_histogram supports d <= 3 (got d = {}); use tv_lower_bound instead", dim));
  const double width = resolve_width(a, b, dim, bin_width);
  return half_l1(cell_keys(a, dim, width), cell_keys(b, dim, width));
}

double tv_histogram(const std::vector<State>& a, const std::vector<State>& b, std::optional<double> bin_width) {
  if (a.empty() || b.empty()) throw ArgumentError("tv: both sample sets must be nonempty");
  const std::size_t dim = a.front().size();
  std::vector<double> fa, fb;
  for (const auto& s : a) {
    if (s.size() != dim) throw ArgumentError("tv: inconsistent sample dimensions");
    fa.insert(fa.end(), s.begin(), s.end());
  }
  for (const auto& s : b) {
    if (s.size() != dim) throw ArgumentError("tv: inconsistent sample dimensions");
    fb.insert(fb.end(), s.begin(), s.end());
  }
  return tv_histogram(fa, fb, dim, bin_width);
}

TvEstimate tv_histogram_grouped(std::span<const double> a, std::span<const double> b, std::size_t dim,
                                std::size_t groups, std::optional<double> bin_width) {
  check_samples(a, b, dim);
  if (groups == 0) throw ArgumentError("tv: at least one group required");
  const std::size_t na = a.size() / dim;
  const std::size_t nb = b.size() / dim;
  if (na % groups != 0 || nb % groups != 0) throw ArgumentError("tv: samples do not split evenly into groups");
  TvEstimate out;
  out.bin_width = resolve_width(a, b, dim, bin_width);
  out.pooled_size = na + nb;
  out.value = tv_histogram(a, b, dim, out.bin_width);
  if (groups < 2) return out;

  const std::size_t ga = na / groups * dim;
  const std::size_t gb = nb / groups * dim;
  std::vector<double> leave_out(groups);
  std::vector<double> ra, rb;
  for (std::size_t g = 0; g < groups; ++g) {
    ra.assign(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(g * ga));
    ra.insert(ra.end(), a.begin() + static_cast<std::ptrdiff_t>((g + 1) * ga), a.end());
    rb.assign(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(g * gb));
    rb.insert(rb.end(), b.begin() + static_cast<std::ptrdiff_t>((g + 1) * gb), b.end());
    leave_out[g] = tv_histogram(ra, rb, dim, out.bin_width);
  }
  double mean = 0.0;
  for (double v : leave_out) mean += v;
  mean /= static_cast<double>(groups);
  double ss = 0.0;
  for (double v : leave_out) ss += (v - mean) * (v - mean);
  const double G = static_cast<double>(groups);
  out.std_error = std::sqrt((G - 1.0) / G * ss);
  return out;
}

double tv_lower_bound(std::span<const double> a, std::span<const double> b, std::size_t dim,
                      const std::vector<TestFunction>& family) {
  check_samples(a, b, dim);
  if (family.empty()) throw ArgumentError("tv_lower_bound: empty test-function family");
  const std::size_t na = a.size() / dim;
  const std::size_t nb = b.size() / dim;
  double best = 0.0;
  for (std::size_t f = 0; f < family.size(); ++f) {
    const auto mean_of = [&](std::span<const double> x, std::size_t n) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = family[f](x.subspan(i * dim, dim));
        if (!(std::abs(v) <= 1.0 + 1e-12))
          throw ArgumentError(fmt::format("tv_lower_bound: test function {} exceeds 1 in absolute value", f));
        s += v;
      }
      return s / static_cast<double>(n);
    };
    best = std::max(best, std::abs(mean_of(a, na) - mean_of(b, nb)));
  }
  return std::min(1.0, 0.5 * best);
}

std::vector<TestFunction> tanh_family(std::span<const double> ks, std::span<const double> cs) {
  std::vector<TestFunction> out;
  for (double k : ks)
    for (double c : cs) out.push_back([k, c](std::span<const double> x) { return std::tanh(k * (x[0] - c)); });
  return out;
}

// ---------------------------------------------------------------------------
// Fluctuation functional

ErrorSummary fluctuation_functional(const DiffusionSpec& diff, const std::function<double(std::span<const double>)>& f,
                                    double h, const SimConfig& cfg) {
  if (!(h > 0.0)) throw ArgumentError("fluctuation_functional: h must be positive");
  if (cfg.dt > h / 10.0 * (1.0 + 1e-12))
    throw ResolutionError(fmt::format("fluctuation_functional: dt = {:.6g} exceeds h/10 = {:.6g}", cfg.dt, h / 10.0));
  cfg.validate(diff.dim, false);
  const std::size_t K = cfg.steps();

  // pi_h maps grid step k to step (k / m) * m when h = m dt; h >= T never projects.
  const bool identity = h >= cfg.horizon;
  std::size_t m = K + 1;
  if (!identity) {
    const double ratio = h / cfg.dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * ratio)
      throw ArgumentError("fluctuation_functional: h must be an integer multiple of dt");
    m = static_cast<std::size_t>(rounded);
  }

  const std::size_t paths = cfg.n_replicas * cfg.n_particles;
  std::vector<double> integral(paths, 0.0), f_projected(paths, 0.0);
  stream_driftless(cfg, diff, [&](std::size_t r, std::size_t p, std::size_t k, std::span<const double> z) {
    if (k == K) return;  // left endpoints only
    const std::size_t idx = r * cfg.n_particles + p;
    const double fz = f(z);
    if (k < m) return;  // pi_h(t) = t on [0, h)
    if (k % m == 0) f_projected[idx] = fz;
    integral[idx] += (fz - f_projected[idx]) * cfg.dt;
  });

  std::vector<double> squared(paths);
  for (std::size_t i = 0; i < paths; ++i) squared[i] = integral[i] * integral[i];
  auto s = summarize(squared);
  s.meta["h"] = h;
  s.meta["dt"] = cfg.dt;
  s.meta["T"] = cfg.horizon;
  return s;
}

}  // namespace avgsde

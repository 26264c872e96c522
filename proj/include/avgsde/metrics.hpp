#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avgsde/model.hpp"
#include "avgsde/simulator.hpp"

namespace avgsde {

/// Monte Carlo estimate with its standard error over independent replicas.
struct ErrorSummary {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_replicas = 0;
  std::map<std::string, double> meta;
};

/// Mean and standard error (sample standard deviation / sqrt(n)) of `values`.
ErrorSummary summarize(std::span<const double> values);

/// E[ sup_grid |X^eps - X|^{2 ell} ]: per replica the particle average of the
/// sup-gap raised to 2 ell, then mean and standard error over replicas.
ErrorSummary strong_error(const CoupledEnsemble& ens, double ell);

/// Same statistic from a [replica][particle] array of sup-gaps.
ErrorSummary strong_error_from_gaps(std::span<const double> sup_gaps, std::size_t n_replicas,
                                    std::size_t n_particles, double ell);

/// Freedman-Diaconis width 2 IQR n^{-1/3}, taken coordinatewise on the pooled
/// sample; the largest coordinate width is used for the common lattice.
double freedman_diaconis_width(std::span<const double> a, std::span<const double> b, std::size_t dim);

/// (1/2) sum over cells of |p_a - p_b| on the lattice of cubes of side
/// `bin_width` anchored at the origin. nullopt selects Freedman-Diaconis.
/// Samples are row-major [n][dim]; dim must be at most 3.
double tv_histogram(std::span<const double> a, std::span<const double> b, std::size_t dim,
                    std::optional<double> bin_width = std::nullopt);
double tv_histogram(const std::vector<State>& a, const std::vector<State>& b,
                    std::optional<double> bin_width = std::nullopt);

struct TvEstimate {
  double value = 0.0;
  double std_error = 0.0;  // delete-one-group jackknife
  double bin_width = 0.0;
  std::size_t pooled_size = 0;
};

/// Histogram TV with a jackknife standard error. Samples are split into
/// `groups` contiguous blocks of equal size (typically one per replica) and
/// the bin width is fixed from the full sample.
TvEstimate tv_histogram_grouped(std::span<const double> a, std::span<const double> b, std::size_t dim,
                                std::size_t groups, std::optional<double> bin_width = std::nullopt);

using TestFunction = std::function<double(std::span<const double>)>;

/// (1/2) max over the family of |mean_a phi - mean_b phi|: a lower bound on
/// the total variation distance when every |phi| <= 1.
double tv_lower_bound(std::span<const double> a, std::span<const double> b, std::size_t dim,
                      const std::vector<TestFunction>& family);

/// {tanh(k (x_1 - c))} over the grid ks x cs.
std::vector<TestFunction> tanh_family(std::span<const double> ks, std::span<const double> cs);

/// E| int_0^T (f(Z_t) - f(Z_{pi_h(t)})) dt |^2 for the driftless process,
/// left-endpoint Riemann sums on the dt grid. Requires dt <= h/10.
ErrorSummary fluctuation_functional(const DiffusionSpec& diff, const std::function<double(std::span<const double>)>& f,
                                    double h, const SimConfig& cfg);

}  // namespace avgsde

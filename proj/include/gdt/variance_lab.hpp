#pragma once

// Monte Carlo laboratory for the stratified-sampling view of GDT batches.
//
// A world is a finite space of samples x = (I, V) with I drawn from an
// invariant space and V from a distinctive space, and a bounded loss l(x, x')
// over ordered pairs. The exact objective is the mean of l over all pairs.
// A GDT batch picks K_V distinctive values, which split the pair space into
// K_V^2 strata (j, j'), and takes K_I^2 pairs from each stratum. The naive
// estimator takes K_I^2 K_V^2 pairs independently.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gdt {

struct FiniteLossWorld {
  std::size_t n_inv = 0;
  std::size_t n_dist = 0;
  /// l(x, x') at table[x * n_samples() + x'], sample index x = V * n_inv + I.
  std::vector<double> table;
  std::string description;

  std::size_t n_samples() const { return n_inv * n_dist; }
  std::size_t sample(std::size_t inv, std::size_t dist) const { return dist * n_inv + inv; }
  double loss(std::size_t inv, std::size_t dist, std::size_t inv2, std::size_t dist2) const {
    return table[sample(inv, dist) * n_samples() + sample(inv2, dist2)];
  }

  /// Throws DomainError unless both spaces have >= 2 values, the table is
  /// complete and every entry is finite.
  void validate() const;
};

using PairLossFn =
    std::function<double(std::size_t inv, std::size_t dist, std::size_t inv2, std::size_t dist2)>;

FiniteLossWorld tabulate_world(std::size_t n_inv, std::size_t n_dist, const PairLossFn& fn,
                               std::string description = {});

/// Stratum means drawn from [3, 7] plus uniform within-stratum noise of the
/// given half-width, then the same-distinctive strata (V == V') shifted by a
/// common constant so their average equals the average of the cross strata.
/// Without that last step no estimator built from K_V distinct values can be
/// unbiased: it visits V == V' strata with frequency 1/K_V instead of 1/n_dist.
FiniteLossWorld make_stratified_world(std::size_t n_inv, std::size_t n_dist,
                                      double noise_half_width, std::uint64_t seed);

/// The per-pair term of the contrastive objective as l: unit embeddings e(I, V)
/// clustered by V, contrast [V == V'], weight [x != x'], and the softmax
/// denominator over the whole sample space.
FiniteLossWorld make_nce_world(std::size_t n_inv, std::size_t n_dist, std::size_t dim,
                               double temperature, std::uint64_t seed);

double exact_loss(const FiniteLossWorld& world);

struct StratumStats {
  Eigen::MatrixXd means;      // L_jj'
  Eigen::MatrixXd variances;  // sigma^2_jj', population variance over the stratum
  double grand_mean = 0.0;    // average of the means

  /// sum_jj' (L_jj' - grand_mean)^2
  double between_spread() const;
};

/// Exact per-stratum statistics by full enumeration of X_j x X_j'. Throws
/// DomainError on duplicate or out-of-range distinctive values.
StratumStats stratum_stats(const FiniteLossWorld& world,
                           const std::vector<std::size_t>& distinct_sample);

enum class GdtSampling {
  /// Batch form: K_I invariant values drawn once and reused for every pair
  /// and every stratum, including the i == i' pairs.
  Reuse,
  /// Every stratum receives K_I^2 pairs (I, I') drawn independently and
  /// uniformly. This is the model under which the closed-form variance is
  /// derived.
  Stratified,
};

std::string to_string(GdtSampling s);

/// K_V distinctive and K_I invariant values drawn without replacement from
/// streams keyed on `seed`, then the K_V^2 K_I^2 pair average.
double gdt_estimate(const FiniteLossWorld& world, std::size_t k_inv, std::size_t k_dist,
                    std::uint64_t seed, GdtSampling mode = GdtSampling::Reuse);

/// As gdt_estimate with the distinctive values fixed to `strata`.
double gdt_estimate_given(const FiniteLossWorld& world, std::size_t k_inv,
                          const std::vector<std::size_t>& strata, std::uint64_t seed,
                          GdtSampling mode);

/// Average of l over K_I^2 K_V^2 ordered pairs whose four parts are drawn
/// independently and uniformly. With `restrict_dist`, distinctive parts are
/// drawn from that subset only.
double naive_estimate(const FiniteLossWorld& world, std::size_t k_inv, std::size_t k_dist,
                      std::uint64_t seed,
                      const std::optional<std::vector<std::size_t>>& restrict_dist = std::nullopt);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact mean and variance of the Reuse estimator, by enumerating every
/// invariant subset (and every distinctive subset unless `strata` is given).
/// Returns nullopt when the enumeration would exceed `max_evaluations`.
std::optional<Moments> reuse_exact_moments(const FiniteLossWorld& world, std::size_t k_inv,
                                           std::size_t k_dist,
                                           const std::optional<std::vector<std::size_t>>& strata,
                                           std::uint64_t max_evaluations = 50'000'000);

/// Streaming mean/variance with Chan's pairwise merge.
struct RunningStats {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x);
  void merge(const RunningStats& other);
  /// Unbiased sample variance.
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const;
};

struct EstimatorSummary {
  double mean = 0.0;
  double variance = 0.0;
  double standard_error = 0.0;
};

struct VarianceReport {
  std::size_t n_inv = 0, n_dist = 0, k_inv = 0, k_dist = 0;
  std::uint64_t trial_count = 0;
  GdtSampling gdt_mode = GdtSampling::Stratified;
  std::vector<std::size_t> strata;

  double exact_L = 0.0;
  double strata_L = 0.0;  // mean of l over the domain spanned by `strata`
  double between_spread = 0.0;

  // distinctive values redrawn every trial
  EstimatorSummary gdt;
  EstimatorSummary naive;
  // distinctive values held at `strata`
  EstimatorSummary gdt_fixed;
  EstimatorSummary naive_fixed;

  double predicted_var_gdt = 0.0;            // (1/(K_V^4 K_I^2)) sum sigma^2, fixed strata
  double predicted_var_gdt_avg = 0.0;        // same, averaged over all distinctive draws
  double predicted_var_naive_k2 = 0.0;  // sum sigma^2/(K_V^2 K_I^2) + spread/K_V^2, fixed strata
  double predicted_var_naive_k4 = 0.0;    // (sum sigma^2 + spread)/(K_V^4 K_I^2), fixed strata
  double predicted_var_naive_full = 0.0;     // Var(l) / (K_I^2 K_V^2) over the whole space

  double rel_err_naive_k2 = 0.0;  // against naive_fixed.variance
  double rel_err_naive_k4 = 0.0;
  std::string naive_form_matched;      // "k2", "k4" or "neither"

  // the Reuse estimator for comparison, with fixed strata
  EstimatorSummary reuse_fixed;
  std::optional<Moments> reuse_exact_fixed;
  std::optional<Moments> reuse_exact;
};

struct VarianceOptions {
  GdtSampling gdt_mode = GdtSampling::Stratified;
  /// Relative tolerance for declaring a printed naive-variance form matched.
  double match_tolerance = 0.05;
  unsigned threads = 1;
  std::optional<std::vector<std::size_t>> strata;  // drawn from the seed if unset
};

/// Requires n_trials >= 1000. Trials draw from streams keyed on (seed, trial),
/// are reduced in fixed-size chunks and merged in chunk order, so results do
/// not depend on `threads`.
VarianceReport run_variance_experiment(const FiniteLossWorld& world, std::size_t k_inv,
                                       std::size_t k_dist, std::uint64_t n_trials,
                                       std::uint64_t seed, const VarianceOptions& opts = {});

std::string variance_report_json(const VarianceReport& r, int indent = 2);

}  // namespace gdt

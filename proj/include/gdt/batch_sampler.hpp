#pragma once

// Hierarchical batch sampling: K_1 values of factor 1 are drawn without
// replacement, then, independently for every node, K_m values of factor m,
// and so on. The batch is the set of K = prod K_m leaves.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdt/transform_algebra.hpp"

namespace gdt {

class SamplingPlan {
 public:
  /// Throws PlanError for K_m == 0 or K_m > |values| and DomainError for
  /// malformed factor specs.
  explicit SamplingPlan(std::vector<FactorSpec> specs);

  const std::vector<FactorSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }

  std::size_t k_total() const { return k_; }
  std::size_t k_invariant() const { return k_inv_; }
  std::size_t k_distinctive() const { return k_dist_; }

  /// Position of the factor with this name, or -1.
  int find(const std::string& name) const;

 private:
  std::vector<FactorSpec> specs_;
  std::size_t k_ = 1;
  std::size_t k_inv_ = 1;
  std::size_t k_dist_ = 1;
};

struct TreeLevel {
  std::vector<std::uint32_t> parent;  // index into the previous level (0 at level 0)
  std::vector<FactorValue> value;
};

struct Batch {
  SamplingPlan plan;
  std::vector<GDTransformation> transformations;
  std::vector<TreeLevel> tree;

  std::size_t size() const { return transformations.size(); }
};

/// Deterministic in (plan, seed). Each node draws its children from a
/// generator keyed on (seed, path to the node); for a distinctive factor the
/// path counts only the distinctive values above it, so siblings that differ
/// in invariant values alone receive the same distinctive values.
Batch sample_batch(const SamplingPlan& plan, std::uint64_t seed);

struct PairCounts {
  std::uint64_t total_positive = 0;
  std::uint64_t trivial_positive = 0;
  std::uint64_t nontrivial_positive = 0;
  std::uint64_t negatives_per_anchor = 0;

  friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

/// Closed-form ordered-pair counts for a hierarchically sampled batch.
PairCounts predict_pair_counts(const SamplingPlan& plan);

/// Evaluates all K^2 ordered pairs. Throws InvariantViolation if anchors do
/// not all see the same number of negatives.
PairCounts brute_force_pair_counts(const Batch& batch);

struct BatchReport {
  bool req_i = false;    // some pair has c == 1
  bool req_ii = false;   // some pair T != T' has c == 1
  bool req_iii = false;  // every T in a non-trivial positive also has a negative
  bool balanced = false; // every level-m prefix is shared by K / (K_1...K_m) leaves

  bool all() const { return req_i && req_ii && req_iii && balanced; }
};

BatchReport validate_batch(const Batch& batch);

/// For each factor m, the number of ordered pairs in the batch that differ in
/// factor m and in no other factor. Hierarchical sampling makes most of these
/// zero for early factors: a change at level m usually drags later factors
/// with it.
std::vector<std::uint64_t> isolated_variation_counts(const Batch& batch);

/// One transformation per line, factor value labels tab-separated, preceded
/// by a '#' header naming the factors.
void write_batch_text(std::ostream& os, const Batch& batch);
std::string batch_to_text(const Batch& batch);

/// Parses the text form back into transformations over `plan`.
std::vector<GDTransformation> read_batch_text(std::istream& is, const SamplingPlan& plan);

}  // namespace gdt

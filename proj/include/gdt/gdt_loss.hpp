#pragma once

// Generalized noise-contrastive objective over a batch of transformations:
//
//   L = - sum_{a,b} C[a][b] W[a][b] log( exp(s_ab) / sum_c W[a][c] exp(s_ac) ),
//   s_ab = <e_a, e_b> / temperature,
//
// summed over ordered pairs, with C the contrast and W the weight mask.

#include <Eigen/Dense>
#include <string>

#include "gdt/batch_sampler.hpp"

namespace gdt {

enum class WeightScheme {
  SimClr,            // w = [T != T']
  CrossModal,        // w = [m != m']
  CrossModalStrict,  // w = [T != T'] [m != m']
};

enum class Reduction {
  Sum,   // the objective as written
  Mean,  // divided by the number of counted (C*W == 1) pairs
};

std::string to_string(WeightScheme s);
WeightScheme weight_scheme_from_string(const std::string& s);

struct LossConfig {
  double temperature = 0.07;
  WeightScheme weight_scheme = WeightScheme::SimClr;
  bool stable = true;  // max-shifted log-sum-exp
  Reduction reduction = Reduction::Sum;

  void validate() const;
};

/// K x d, one embedding per row.
using EmbeddingMatrix = Eigen::MatrixXd;

struct PairMask {
  Eigen::MatrixXd contrast;  // C, entries 0/1
  Eigen::MatrixXd weight;    // W, entries 0/1

  Eigen::Index size() const { return contrast.rows(); }
};

/// Name of the factor the cross-modal schemes read.
inline constexpr const char* kModalityFactor = "modality";

/// Throws ConfigError if a cross-modal scheme is requested and the plan has
/// no "modality" factor.
PairMask build_pair_mask(const Batch& batch, const LossConfig& cfg);

double gdt_nce_loss(const EmbeddingMatrix& emb, const PairMask& mask, const LossConfig& cfg);

/// Gradient with respect to every entry of `emb`; each row contributes as
/// anchor, as positive and as a denominator term.
EmbeddingMatrix gdt_nce_grad(const EmbeddingMatrix& emb, const PairMask& mask,
                             const LossConfig& cfg);

struct LossAndGrad {
  double loss = 0.0;
  EmbeddingMatrix grad;
};

LossAndGrad gdt_nce_loss_and_grad(const EmbeddingMatrix& emb, const PairMask& mask,
                                  const LossConfig& cfg);

/// Per-ordered-pair contribution -C W log softmax, K x K. Sums to the
/// Sum-reduced loss.
Eigen::MatrixXd gdt_nce_pair_terms(const EmbeddingMatrix& emb, const PairMask& mask,
                                   const LossConfig& cfg);

struct NormalizedRows {
  EmbeddingMatrix unit;
  Eigen::VectorXd norms;

  /// Chain rule through x -> x / |x|: projects each upstream row onto the
  /// tangent space of the sphere at unit.row(i) and divides by the norm.
  EmbeddingMatrix backward(const EmbeddingMatrix& upstream) const;
};

/// Throws DomainError on a zero-norm row.
NormalizedRows normalize_rows(const EmbeddingMatrix& emb);

}  // namespace gdt

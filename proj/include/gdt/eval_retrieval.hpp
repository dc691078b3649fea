#pragma once

// Frozen-representation evaluation: cosine nearest-neighbour retrieval,
// k-NN classification and the spread of a video's embeddings across time
// shifts.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "gdt/synthetic_world.hpp"

namespace gdt {

struct LabeledEmbeddings {
  Eigen::MatrixXd embeddings;  // N x d, unit rows
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  /// Throws DomainError on length mismatch or rows off the unit sphere.
  void validate(double tol = 1e-6) const;
};

/// Gallery indices ordered by descending cosine similarity to `query`, ties by
/// ascending index.
std::vector<std::size_t> rank_gallery(const Eigen::VectorXd& query,
                                      const Eigen::MatrixXd& gallery);

/// Fraction of queries whose label is among the labels of the k most similar
/// gallery items. Throws DomainError unless 1 <= k <= |gallery|.
double recall_at_k(const LabeledEmbeddings& queries, const LabeledEmbeddings& gallery,
                   std::size_t k);

/// k-NN accuracy under cosine similarity. Vote ties go to the tied label whose
/// nearest member ranks first.
double knn_classify(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                    std::size_t k);

/// For each of the first n_videos identities, embeds shifts 0..n_shifts-1
/// (visual, forward, no augmentation noise), takes the per-dimension standard
/// deviation across shifts, averages over dimensions and then over videos.
double dispersion_across_shifts(const EncoderParams& params, const SyntheticWorld& world,
                                std::size_t n_videos, std::size_t n_shifts_per_video);

/// Same statistic on precomputed embeddings: groups[v] holds one row per shift.
double dispersion_of_groups(const std::vector<Eigen::MatrixXd>& groups);

}  // namespace gdt

#include "gdt/eval_retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gdt/errors.hpp"

namespace gdt {

void LabeledEmbeddings::validate(double tol) const {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw DomainError("embedding and label counts differ");
  }
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    if (std::abs(embeddings.row(r).norm() - 1.0) > tol) {
      throw DomainError("embedding row " + std::to_string(r) + " is not unit norm");
    }
  }
}

std::vector<std::size_t> rank_gallery(const Eigen::VectorXd& query,
                                      const Eigen::MatrixXd& gallery) {
  const Eigen::VectorXd sim = gallery * query;
  std::vector<std::size_t> order(static_cast<std::size_t>(gallery.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sim(static_cast<Eigen::Index>(a)) > sim(static_cast<Eigen::Index>(b));
  });
  return order;
}

double recall_at_k(const LabeledEmbeddings& queries, const LabeledEmbeddings& gallery,
                   std::size_t k) {
  queries.validate();
  gallery.validate();
  if (gallery.size() == 0) throw DomainError("empty gallery");
  if (k < 1 || k > gallery.size()) {
    throw DomainError("k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(gallery.size()) + "]");
  }
  if (queries.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto order =
        rank_gallery(queries.embeddings.row(static_cast<Eigen::Index>(q)).transpose(),
                     gallery.embeddings);
    for (std::size_t r = 0; r < k; ++r) {
      if (gallery.labels[order[r]] == queries.labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

double knn_classify(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                    std::size_t k) {
  train.validate();
  test.validate();
  if (train.size() == 0) throw DomainError("empty training set");
  if (k < 1 || k > train.size()) {
    throw DomainError("k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(train.size()) + "]");
  }
  if (test.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t t = 0; t < test.size(); ++t) {
    const auto order =
        rank_gallery(test.embeddings.row(static_cast<Eigen::Index>(t)).transpose(),
                     train.embeddings);
    // label -> (votes, rank of nearest member)
    std::map<int, std::pair<std::size_t, std::size_t>> votes;
    for (std::size_t r = 0; r < k; ++r) {
      auto [it, fresh] = votes.try_emplace(train.labels[order[r]], 0, r);
      ++it->second.first;
    }
    int best = votes.begin()->first;
    auto best_v = votes.begin()->second;
    for (const auto& [label, v] : votes) {
      if (v.first > best_v.first || (v.first == best_v.first && v.second < best_v.second)) {
        best = label;
        best_v = v;
      }
    }
    if (best == test.labels[t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double dispersion_of_groups(const std::vector<Eigen::MatrixXd>& groups) {
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.rows() < 2) throw DomainError("dispersion needs at least two shifts per video");
    const Eigen::RowVectorXd mean = g.colwise().mean();
    const Eigen::RowVectorXd var =
        (g.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(g.rows());
    total += var.array().sqrt().mean();
  }
  return total / static_cast<double>(groups.size());
}

double dispersion_across_shifts(const EncoderParams& params, const SyntheticWorld& world,
                                std::size_t n_videos, std::size_t n_shifts_per_video) {
  const auto& cfg = world.config();
  if (n_shifts_per_video > cfg.n_shifts) {
    throw DomainError("world has " + std::to_string(cfg.n_shifts) + " shifts, " +
                      std::to_string(n_shifts_per_video) + " requested");
  }
  if (n_shifts_per_video < 2) throw DomainError("dispersion needs at least two shifts");
  if (n_videos > cfg.n_identities) throw DomainError("more videos requested than identities");
  std::vector<Eigen::MatrixXd> groups;
  groups.reserve(n_videos);
  for (std::size_t v = 0; v < n_videos; ++v) {
    std::vector<SyntheticView> views;
    for (std::size_t s = 0; s < n_shifts_per_video; ++s) {
      views.push_back(world.view(Latent{v, s, 0, Modality::Visual, 0}, false));
    }
    groups.push_back(encode_views(params, views).embeddings);
  }
  return dispersion_of_groups(groups);
}

}  // namespace gdt

#include <doctest.h>

#include "gdt/errors.hpp"
#include "gdt/eval_retrieval.hpp"
#include "gdt/rng.hpp"

using namespace gdt;

namespace {

Eigen::MatrixXd unit_rows(CounterRng& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd e(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) e(r, c) = rng.normal();
    e.row(r).normalize();
  }
  return e;
}

LabeledEmbeddings random_set(CounterRng& rng, Eigen::Index n, Eigen::Index d, int classes) {
  LabeledEmbeddings s{unit_rows(rng, n, d), {}};
  for (Eigen::Index i = 0; i < n; ++i) s.labels.push_back(static_cast<int>(i % classes));
  return s;
}

}  // namespace

TEST_CASE("ranking ties go to the smaller index") {
  Eigen::MatrixXd g(3, 2);
  g << 0, 1, 1, 0, 1, 0;
  const auto order = rank_gallery(Eigen::Vector2d(1, 0), g);
  CHECK(order == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("recall@k") {
  CounterRng rng(1);
  const auto g = random_set(rng, 20, 5, 20);
  CHECK(recall_at_k(g, g, 1) == 1.0);
  LabeledEmbeddings shifted = g;
  for (auto& l : shifted.labels) l += 100;
  for (std::size_t k : {1, 5, 20}) CHECK(recall_at_k(shifted, g, k) == 0.0);
  CHECK_THROWS_AS(recall_at_k(g, g, 0), DomainError);
  CHECK_THROWS_AS(recall_at_k(g, g, 21), DomainError);

  const auto q = random_set(rng, 30, 5, 10);
  double prev = 0.0;
  for (std::size_t k = 1; k <= 20; ++k) {
    const double r = recall_at_k(q, g, k);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("recall at chance") {
  CounterRng rng(2);
  const auto g = random_set(rng, 400, 16, 10);
  const auto q = random_set(rng, 2000, 16, 10);
  const double r = recall_at_k(q, g, 1);
  // 2000 Bernoulli(0.1) draws: sd ~ 0.0067
  CHECK(std::abs(r - 0.1) < 0.03);
}

TEST_CASE("k-NN") {
  CounterRng rng(3);
  const auto t = random_set(rng, 25, 6, 5);
  CHECK(knn_classify(t, t, 1) == 1.0);
  LabeledEmbeddings one{t.embeddings.topRows(1), {7}};
  LabeledEmbeddings test = random_set(rng, 10, 6, 1);
  for (auto& l : test.labels) l = 7;
  CHECK(knn_classify(one, test, 1) == 1.0);
  CHECK_THROWS_AS(knn_classify(one, test, 2), DomainError);

  // two separated clusters per class
  auto cluster = [&](int n, double cx, int label, LabeledEmbeddings& into) {
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd v(3);
      v << cx + 0.05 * rng.normal(), 1.0 + 0.05 * rng.normal(), 0.05 * rng.normal();
      into.embeddings.conservativeResize(into.embeddings.rows() + 1, 3);
      into.embeddings.row(into.embeddings.rows() - 1) = v.normalized();
      into.labels.push_back(label);
    }
  };
  LabeledEmbeddings tr{Eigen::MatrixXd(0, 3), {}}, te{Eigen::MatrixXd(0, 3), {}};
  cluster(30, -2.0, 0, tr), cluster(30, 2.0, 1, tr);
  cluster(50, -2.0, 0, te), cluster(50, 2.0, 1, te);
  CHECK(knn_classify(tr, te, 1) > 0.95);
  CHECK(knn_classify(tr, te, 5) > 0.95);
}

TEST_CASE("vote ties go to the label seen first") {
  Eigen::MatrixXd tr(2, 2);
  tr << 1, 0, 0, 1;
  LabeledEmbeddings train{tr, {4, 9}};
  Eigen::MatrixXd q(1, 2);
  q << std::sqrt(0.5), std::sqrt(0.5);  // equidistant: rank 0 is index 0
  CHECK(knn_classify(train, LabeledEmbeddings{q, {4}}, 2) == 1.0);
  Eigen::MatrixXd q2(1, 2);
  q2 << 0.6, 0.8;  // nearer to label 9
  CHECK(knn_classify(train, LabeledEmbeddings{q2, {9}}, 2) == 1.0);
}

TEST_CASE("metrics survive a common rotation") {
  CounterRng rng(4);
  const auto g = random_set(rng, 40, 6, 8);
  const auto q = random_set(rng, 60, 6, 8);
  Eigen::MatrixXd a(6, 6);
  for (int i = 0; i < 36; ++i) a(i / 6, i % 6) = rng.normal();
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  const LabeledEmbeddings rg{g.embeddings * Q, g.labels}, rq{q.embeddings * Q, q.labels};
  for (std::size_t k : {1, 3, 10}) CHECK(recall_at_k(rq, rg, k) == recall_at_k(q, g, k));
  CHECK(knn_classify(rg, rq, 3) == knn_classify(g, q, 3));
}

TEST_CASE("input validation") {
  LabeledEmbeddings bad{Eigen::MatrixXd::Ones(2, 2), {0, 1}};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  LabeledEmbeddings mismatch{Eigen::MatrixXd::Identity(2, 2), {0}};
  CHECK_THROWS_AS(mismatch.validate(), DomainError);
}

TEST_CASE("dispersion") {
  Eigen::MatrixXd same(4, 3);
  same.rowwise() = Eigen::RowVector3d(0.6, 0.8, 0.0);
  CHECK(dispersion_of_groups({same, same}) == 0.0);
  Eigen::MatrixXd two(2, 2);
  two << 1, 0, 0, 1;  // per-dim population std 0.5 and 0.5
  CHECK(dispersion_of_groups({two}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(dispersion_of_groups({same.topRows(1)}), DomainError);

  WorldConfig cfg;
  cfg.n_identities = 6;
  cfg.n_shifts = 4;
  cfg.gains.shift = 0.0;
  cfg.gains.priv = 0.0;  // the private nuisance also varies with the shift
  cfg.noise_sigma = 0.0;
  const SyntheticWorld w(cfg);
  const auto p = init_encoder(cfg.obs_dim, 8, 4, 1);
  CHECK(dispersion_across_shifts(p, w, 6, 4) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(dispersion_across_shifts(p, w, 6, 5), DomainError);
  CHECK_THROWS_AS(dispersion_across_shifts(p, w, 7, 4), DomainError);
  cfg.gains.shift = 1.0;
  CHECK(dispersion_across_shifts(p, SyntheticWorld(cfg), 6, 4) > 0.0);
}

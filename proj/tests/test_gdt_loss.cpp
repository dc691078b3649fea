#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gdt/errors.hpp"
#include "gdt/gdt_loss.hpp"
#include "gdt/rng.hpp"

using namespace gdt;

namespace {

constexpr auto D = FactorKind::Distinctive;
constexpr auto I = FactorKind::Invariant;

Eigen::MatrixXd random_rows(CounterRng& rng, Eigen::Index k, Eigen::Index d, bool unit) {
  Eigen::MatrixXd e(k, d);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) e(r, c) = rng.normal();
    if (unit) e.row(r).normalize();
  }
  return e;
}

// NT-Xent over rows (2i, 2i+1), averaged as in SimCLR, then scaled
// back to the sum-over-positive-pairs convention by the caller.
double nt_xent_mean(const Eigen::MatrixXd& e, double tau) {
  const auto n = e.rows();
  double total = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    double denom = 0.0;
    for (Eigen::Index b = 0; b < n; ++b)
      if (b != a) denom += std::exp(e.row(a).dot(e.row(b)) / tau);
    total += -std::log(std::exp(e.row(a).dot(e.row(a ^ 1)) / tau) / denom);
  }
  return total / static_cast<double>(n);
}

Batch simclr_batch(std::size_t pairs, std::uint64_t seed) {
  return sample_batch(SamplingPlan({make_indexed_factor("identity", D, 40, pairs),
                                    make_indexed_factor("augment", I, 40, 2)}),
                      seed);
}

Eigen::MatrixXd fd_grad(const Eigen::MatrixXd& e, const PairMask& m, const LossConfig& cfg,
                        double h = 1e-5) {
  Eigen::MatrixXd g(e.rows(), e.cols());
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      Eigen::MatrixXd p = e, q = e;
      p(r, c) += h;
      q(r, c) -= h;
      g(r, c) = (gdt_nce_loss(p, m, cfg) - gdt_nce_loss(q, m, cfg)) / (2 * h);
    }
  return g;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

}  // namespace

TEST_CASE("masks on the SimCLR batch") {
  const Batch b = simclr_batch(4, 1);
  const PairMask m = build_pair_mask(b, LossConfig{});
  CHECK(m.weight.sum() == 56);
  CHECK(m.contrast.sum() == 16);
  CHECK(m.weight.diagonal().sum() == 0);
  CHECK(m.contrast.isApprox(m.contrast.transpose()));
}

TEST_CASE("cross-modal masks on the video plan") {
  const SamplingPlan p({make_indexed_factor("identity", D, 10, 2),
                        make_indexed_factor("shift", D, 8, 2),
                        FactorSpec{kModalityFactor, I, {"v", "a"}, 2},
                        FactorSpec{"reversal", I, {"r0", "r1"}, 2},
                        make_indexed_factor("augment", I, 4, 1)});
  const Batch b = sample_batch(p, 3);
  LossConfig cfg;
  cfg.weight_scheme = WeightScheme::CrossModal;
  const auto cm = build_pair_mask(b, cfg);
  CHECK(cm.weight.sum() == 128);
  CHECK(cm.weight.diagonal().sum() == 0);
  cfg.weight_scheme = WeightScheme::CrossModalStrict;
  CHECK(build_pair_mask(b, cfg).weight.sum() == 128);

  LossConfig bad;
  bad.weight_scheme = WeightScheme::CrossModal;
  CHECK_THROWS_AS(build_pair_mask(simclr_batch(2, 1), bad), ConfigError);
}

TEST_CASE("trivial cases") {
  CounterRng rng(5);
  LossConfig cfg;
  PairMask two{Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Ones(2, 2) - Eigen::MatrixXd::Identity(2, 2)};
  const auto e = random_rows(rng, 2, 3, false);
  CHECK(gdt_nce_loss(e, two, cfg) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(gdt_nce_grad(e, two, cfg).norm() < 1e-12);

  // all-distinctive plan: no counted positives
  const Batch b = sample_batch(SamplingPlan({make_indexed_factor("identity", D, 9, 4)}), 1);
  const PairMask m = build_pair_mask(b, cfg);
  const auto e4 = random_rows(rng, 4, 3, true);
  CHECK(gdt_nce_loss(e4, m, cfg) == 0.0);
  CHECK(gdt_nce_grad(e4, m, cfg).norm() == 0.0);
}

TEST_CASE("shape errors and an underflowing denominator") {
  CounterRng rng(1);
  const Batch b = simclr_batch(2, 1);
  LossConfig cfg;
  const auto m = build_pair_mask(b, cfg);
  CHECK_THROWS_AS(gdt_nce_loss(random_rows(rng, 3, 2, true), m, cfg), DomainError);

  // without the max shift, anchor 0's whole denominator underflows to zero
  Eigen::MatrixXd e(4, 1);
  e << 40.0, -40.0, -40.0, -40.0;
  cfg.stable = false;
  try {
    gdt_nce_loss(e, m, cfg);
    CHECK(false);
  } catch (const DegenerateObjectiveError& err) {
    CHECK(err.anchor == 0);
  }
  cfg.stable = true;
  CHECK(std::isfinite(gdt_nce_loss(e, m, cfg)));
}

TEST_CASE("SimCLR batches reduce to NT-Xent") {
  CounterRng rng(11);
  for (int draw = 0; draw < 50; ++draw) {
    const std::size_t pairs = 1 + rng.uniform_index(8);
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    const Batch b = simclr_batch(pairs, static_cast<std::uint64_t>(draw));
    const auto e = random_rows(rng, static_cast<Eigen::Index>(2 * pairs), d, true);
    LossConfig sum_cfg;
    const double want_sum = nt_xent_mean(e, 0.07) * static_cast<double>(2 * pairs);
    CHECK(gdt_nce_loss(e, build_pair_mask(b, sum_cfg), sum_cfg) ==
          doctest::Approx(want_sum).epsilon(1e-10));
    LossConfig mean_cfg;
    mean_cfg.reduction = Reduction::Mean;
    CHECK(std::abs(gdt_nce_loss(e, build_pair_mask(b, mean_cfg), mean_cfg) - nt_xent_mean(e, 0.07)) <
          1e-10);
  }
}

TEST_CASE("pair terms sum to the loss") {
  CounterRng rng(3);
  const Batch b = simclr_batch(5, 2);
  LossConfig cfg;
  const auto m = build_pair_mask(b, cfg);
  const auto e = random_rows(rng, 10, 4, true);
  CHECK(gdt_nce_pair_terms(e, m, cfg).sum() == doctest::Approx(gdt_nce_loss(e, m, cfg)).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences") {
  CounterRng rng(99);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t ids = 1 + rng.uniform_index(3), mods = 2, aug = 1 + rng.uniform_index(2);
    const SamplingPlan p({make_indexed_factor("identity", D, 6, ids),
                          FactorSpec{kModalityFactor, I, {"v", "a", "t"}, mods},
                          make_indexed_factor("augment", I, 4, aug)});
    const Batch b = sample_batch(p, static_cast<std::uint64_t>(inst));
    LossConfig cfg;
    cfg.weight_scheme = static_cast<WeightScheme>(inst % 3);
    cfg.reduction = inst % 2 ? Reduction::Mean : Reduction::Sum;
    const auto m = build_pair_mask(b, cfg);
    const auto d = static_cast<Eigen::Index>(2 + rng.uniform_index(7));
    Eigen::MatrixXd e = random_rows(rng, static_cast<Eigen::Index>(b.size()), d, true);
    e *= 0.8;
    const auto lg = gdt_nce_loss_and_grad(e, m, cfg);
    CHECK(lg.loss == doctest::Approx(gdt_nce_loss(e, m, cfg)).epsilon(1e-14));
    CHECK(rel(lg.grad, gdt_nce_grad(e, m, cfg)) < 1e-14);
    CHECK(rel(lg.grad, fd_grad(e, m, cfg)) < 1e-6);
  }
}

TEST_CASE("row permutation invariance") {
  CounterRng rng(8);
  const Batch b = simclr_batch(4, 4);
  LossConfig cfg;
  const auto m = build_pair_mask(b, cfg);
  const auto e = random_rows(rng, 8, 5, true);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 7; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
  Eigen::PermutationMatrix<Eigen::Dynamic> P(8);
  for (int i = 0; i < 8; ++i) P.indices()[i] = perm[static_cast<std::size_t>(i)];
  const PairMask pm{P * m.contrast * P.transpose(), P * m.weight * P.transpose()};
  const Eigen::MatrixXd pe = P * e;
  CHECK(gdt_nce_loss(pe, pm, cfg) == doctest::Approx(gdt_nce_loss(e, m, cfg)).epsilon(1e-12));
}

TEST_CASE("raising a negative similarity never lowers the loss") {
  CounterRng rng(21);
  const Batch b = simclr_batch(3, 9);
  LossConfig cfg;
  const auto m = build_pair_mask(b, cfg);
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd e = random_rows(rng, 6, 4, false);
    // anchor 0 and a negative c: move e_c toward e_0 along e_0, which raises
    // s_0c; only terms involving c change, so check the anchor-0 row terms
    const Eigen::Index c = 2 + static_cast<Eigen::Index>(rng.uniform_index(4));
    REQUIRE(m.contrast(0, c) == 0);
    const double before = gdt_nce_pair_terms(e, m, cfg).row(0).sum();
    e.row(c) += 0.3 * e.row(0);
    const double after = gdt_nce_pair_terms(e, m, cfg).row(0).sum();
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("max-shift does not change well-scaled results") {
  CounterRng rng(4);
  const Batch b = simclr_batch(6, 1);
  LossConfig a, u;
  u.stable = false;
  const auto m = build_pair_mask(b, a);
  const auto e = random_rows(rng, 12, 6, true);
  CHECK(std::abs(gdt_nce_loss(e, m, a) - gdt_nce_loss(e, m, u)) < 1e-12);
  CHECK((gdt_nce_grad(e, m, a) - gdt_nce_grad(e, m, u)).norm() < 1e-10);
  // large similarities: unshifted overflows, shifted stays finite
  const Eigen::MatrixXd big = e * 30.0;
  CHECK(std::isfinite(gdt_nce_loss(big, m, a)));
}

TEST_CASE("config validation") {
  LossConfig c;
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(weight_scheme_from_string("cross_modal") == WeightScheme::CrossModal);
  CHECK(to_string(WeightScheme::CrossModalStrict) == "cross_modal_strict");
  CHECK_THROWS_AS(weight_scheme_from_string("xmodal"), ConfigError);
}

TEST_CASE("row normalization and its backward map") {
  Eigen::MatrixXd x(2, 2);
  x << 3, 4, 0.6, 0.8;
  const auto n = normalize_rows(x);
  CHECK(n.unit(0, 0) == doctest::Approx(0.6));
  CHECK(n.unit(0, 1) == doctest::Approx(0.8));
  CHECK(n.unit.row(1).isApprox(x.row(1)));
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 3);
  CHECK_THROWS_AS(normalize_rows(z), DomainError);

  // f(X) = sum(W .* normalize(A X)) for a fixed linear map A
  CounterRng rng(6);
  const auto X = random_rows(rng, 4, 3, false);
  const auto W = random_rows(rng, 4, 3, false);
  Eigen::MatrixXd A(3, 3);
  for (int i = 0; i < 9; ++i) A(i / 3, i % 3) = rng.normal();
  auto f = [&](const Eigen::MatrixXd& x) { return (normalize_rows(x * A).unit.array() * W.array()).sum(); };
  const Eigen::MatrixXd analytic = normalize_rows(X * A).backward(W) * A.transpose();
  Eigen::MatrixXd fd(4, 3);
  const double h = 1e-5;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) {
      Eigen::MatrixXd p = X, q = X;
      p(r, c) += h;
      q(r, c) -= h;
      fd(r, c) = (f(p) - f(q)) / (2 * h);
    }
  CHECK(rel(analytic, fd) < 1e-6);
}

#include <doctest.h>

#include <limits>

#include <sstream>

#include "gdt/errors.hpp"
#include "gdt/synthetic_world.hpp"

using namespace gdt;

namespace {

WorldConfig small_world() {
  WorldConfig c;
  c.n_identities = 12;
  c.n_shifts = 4;
  c.n_aug_draws = 6;
  c.obs_dim = 20;
  c.id_dim = 4;
  c.shift_dim = 3;
  c.rev_dim = 2;
  c.private_dim = 3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("views are deterministic") {
  const SyntheticWorld w(small_world());
  const Latent l{3, 1, 1, Modality::Audio, 2};
  CHECK(w.view(l).observation == w.view(l).observation);
  CHECK(w.view(l).observation != w.view({3, 1, 1, Modality::Audio, 3}).observation);
  CHECK(w.view(l, false).observation == w.view({3, 1, 1, Modality::Audio, 4}, false).observation);
  CHECK_THROWS_AS(w.view({12, 0, 0, Modality::Visual, 0}), DomainError);
  CHECK_THROWS_AS(w.view({0, 4, 0, Modality::Visual, 0}), DomainError);
  CHECK_THROWS_AS(w.view({0, 0, 2, Modality::Visual, 0}), DomainError);
}

TEST_CASE("modalities mix the same identity code differently") {
  auto cfg = small_world();
  cfg.gains.priv = 0.0;
  const SyntheticWorld w(cfg);
  const Latent v{2, 1, 0, Modality::Visual, 0}, a{2, 1, 0, Modality::Audio, 0};
  CHECK(w.latent_vector(v) == w.latent_vector(a));
  CHECK(w.view(v, false).observation != w.view(a, false).observation);
}

TEST_CASE("zero shift gain hides the shift") {
  auto cfg = small_world();
  cfg.gains.shift = 0.0;
  cfg.gains.priv = 0.0;
  cfg.noise_sigma = 0.0;
  const SyntheticWorld w(cfg);
  CHECK(w.view({1, 0, 0, Modality::Visual, 0}).observation ==
        w.view({1, 3, 0, Modality::Visual, 0}).observation);
}

TEST_CASE("identity is recoverable by least squares in every modality") {
  auto cfg = small_world();
  cfg.noise_sigma = 0.0;
  const SyntheticWorld w(cfg);
  for (auto m : {Modality::Visual, Modality::Audio, Modality::Text}) {
    const auto& G = w.mixing(m);
    for (std::size_t i = 0; i < cfg.n_identities; i += 5) {
      const Eigen::VectorXd x = w.view({i, 2, 1, m, 0}).observation;
      const Eigen::VectorXd z = G.colPivHouseholderQr().solve(x);
      const Eigen::VectorXd id = z.head(static_cast<Eigen::Index>(cfg.id_dim)) / cfg.gains.identity;
      CHECK((id - w.identity_code(i)).norm() < 1e-9);
    }
  }
}

TEST_CASE("config validation") {
  auto cfg = small_world();
  cfg.obs_dim = 5;
  CHECK_THROWS_AS(SyntheticWorld{cfg}, ConfigError);
  cfg = small_world();
  cfg.noise_sigma = -1.0;
  CHECK_THROWS_AS(SyntheticWorld{cfg}, ConfigError);
  CHECK(modality_from_label(modality_label(Modality::Text)) == Modality::Text);
  CHECK_THROWS_AS(modality_from_label("x"), ConfigError);
}

TEST_CASE("resolver maps plan values to latents") {
  const SyntheticWorld w(small_world());
  const SamplingPlan plan({w.identity_factor(FactorKind::Distinctive, 2),
                          w.modality_factor(FactorKind::Invariant, 2, {Modality::Visual, Modality::Text}),
                          w.reversal_factor(FactorKind::Invariant, 2)});
  const ViewResolver r(plan, w.config());
  const auto l = r.latent(GDTransformation{{7, 1, 1}});
  CHECK(l.identity == 7);
  CHECK(l.modality == Modality::Text);
  CHECK(l.reversal == 1);
  CHECK(l.shift == 0);
  const SamplingPlan bad({make_indexed_factor("colour", FactorKind::Invariant, 3, 1)});
  CHECK_THROWS_AS(ViewResolver(bad, w.config()), ConfigError);
}

TEST_CASE("encoder forward by hand") {
  EncoderParams p = init_encoder(2, 2, 2, 1);
  for (auto& b : p.blocks) {
    b.w1 = Eigen::Matrix2d::Identity();
    b.b1 = Eigen::Vector2d(0.0, 0.5);
    b.w2 = Eigen::Matrix2d::Identity();
    b.b2 = Eigen::Vector2d::Zero();
  }
  SyntheticView v{{0, 0, 0, Modality::Visual, 0}, Eigen::Vector2d(0.3, -0.2)};
  const Eigen::Vector2d h(std::tanh(0.3), std::tanh(0.3));
  const auto e = encoder_forward(p, v);
  CHECK(e(0) == doctest::Approx(h(0) / h.norm()));
  CHECK(e(1) == doctest::Approx(h(1) / h.norm()));

  for (auto& b : p.blocks) {
    b.w1.setZero();
    b.b1.setZero();
    b.w2.setZero();
    b.b2.setZero();
  }
  CHECK_THROWS_AS(encoder_forward(p, v), DomainError);
  SyntheticView wrong{{0, 0, 0, Modality::Visual, 0}, Eigen::Vector3d(1, 2, 3)};
  CHECK_THROWS_AS(encoder_forward(init_encoder(2, 2, 2, 1), wrong), DomainError);
}

TEST_CASE("encoder backward") {
  const SyntheticWorld w(small_world());
  const auto params = init_encoder(20, 6, 4, 3);
  std::vector<SyntheticView> views;
  for (std::size_t i = 0; i < 5; ++i) views.push_back(w.view({i, 0, 0, Modality::Visual, i}));
  const auto enc = encode_views(params, views);
  for (Eigen::Index r = 0; r < enc.embeddings.rows(); ++r) CHECK(enc.embeddings.row(r).norm() == doctest::Approx(1.0).epsilon(1e-12));

  const auto zero = encoder_backward(params, enc.cache, Eigen::MatrixXd::Zero(5, 4));
  CHECK(zero.flatten().norm() == 0.0);

  const auto g = encoder_backward(params, enc.cache, Eigen::MatrixXd::Ones(5, 4));
  CHECK(g.blocks[1].w1.norm() == 0.0);
  CHECK(g.blocks[2].w2.norm() == 0.0);
  CHECK(g.blocks[0].w1.norm() > 0.0);
  CHECK_THROWS_AS(encoder_backward(params, enc.cache, Eigen::MatrixXd::Ones(4, 4)), UsageError);

  // full chain against central differences: sum(U .* encode(x))
  Eigen::MatrixXd U(5, 4);
  for (int i = 0; i < 20; ++i) U(i % 5, i / 5) = std::sin(1.0 + i);
  const Eigen::VectorXd analytic = encoder_backward(params, enc.cache, U).flatten();
  EncoderParams p = params;
  const Eigen::VectorXd theta = p.flatten();
  Eigen::VectorXd fd(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Eigen::VectorXd t = theta;
    t(j) += 1e-5;
    p.assign(t);
    const double a = (encode_views(p, views).embeddings.array() * U.array()).sum();
    t(j) -= 2e-5;
    p.assign(t);
    const double b = (encode_views(p, views).embeddings.array() * U.array()).sum();
    fd(j) = (a - b) / 2e-5;
  }
  CHECK((analytic - fd).norm() / analytic.norm() < 1e-6);
}

TEST_CASE("parameter files round trip") {
  const auto p = init_encoder(20, 6, 4, 9);
  std::stringstream ss;
  write_params(ss, p);
  const auto q = read_params(ss);
  CHECK(q.flatten() == p.flatten());
  CHECK(q.hidden == 6);
  std::stringstream bad("GDTPARAX........");
  CHECK_THROWS(read_params(bad));
  std::string bytes;
  {
    std::stringstream s2;
    write_params(s2, p);
    bytes = s2.str();
  }
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_params(cut));
}

TEST_CASE("training") {
  const SyntheticWorld w(small_world());
  const SamplingPlan plan({w.identity_factor(FactorKind::Distinctive, 6),
                          w.shift_factor(FactorKind::Invariant, 2),
                          w.modality_factor(FactorKind::Invariant, 2, {Modality::Visual, Modality::Audio}),
                          w.augment_factor(FactorKind::Invariant, 1)});
  LossConfig loss{0.07, WeightScheme::CrossModal, true, Reduction::Mean};
  OptimConfig opt;
  opt.epochs = 4;
  opt.steps_per_epoch = 10;
  opt.hidden = 8;
  opt.embed = 6;

  SUBCASE("deterministic and decreasing") {
    const auto a = train(w, plan, loss, opt);
    const auto b = train(w, plan, loss, opt);
    CHECK(a.params.flatten() == b.params.flatten());
    CHECK(a.history == b.history);
    CHECK(a.history.size() == 4);
    CHECK(a.history.back() < a.initial_loss);
  }
  SUBCASE("lr 0 keeps the parameters") {
    opt.lr = 0.0;
    const auto init = init_encoder(20, 8, 6, 77);
    CHECK(train(w, plan, loss, opt, init).params.flatten() == init.flatten());
  }
  SUBCASE("zero epochs") {
    opt.epochs = 0;
    const auto init = init_encoder(20, 8, 6, 77);
    const auto r = train(w, plan, loss, opt, init);
    CHECK(r.history.empty());
    CHECK(r.params.flatten() == init.flatten());
  }
  SUBCASE("divergence is reported with its step") {
    // a huge step size alone saturates tanh without overflowing, so start
    // from a parameter that is already not finite
    auto init = init_encoder(20, 8, 6, 77);
    init.blocks[0].b2(0) = std::numeric_limits<double>::quiet_NaN();
    try {
      train(w, plan, loss, opt, init);
      FAIL("no TrainingError");
    } catch (const TrainingError& e) {
      CHECK(e.step == 0);
    }
  }
}

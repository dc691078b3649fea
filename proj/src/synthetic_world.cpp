#include "gdt/synthetic_world.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"

namespace gdt {

namespace {

constexpr std::uint64_t kIdTag = 0x1D;
constexpr std::uint64_t kShiftTag = 0x5F;
constexpr std::uint64_t kRevTag = 0x7E;
constexpr std::uint64_t kPrivTag = 0x9A;
constexpr std::uint64_t kMixTag = 0x3C;
constexpr std::uint64_t kNoiseTag = 0x4E;
constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kStepTag = 0xBA7C;

Eigen::MatrixXd unit_rows(std::size_t rows, std::size_t cols, std::uint64_t key) {
  CounterRng rng(key);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
    m.row(r).normalize();
  }
  return m;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double scale,
                         std::uint64_t key) {
  CounterRng rng(key);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

enum Slot { kIdentity = 0, kShift, kModality, kReversal, kAugment };
constexpr std::array<const char*, 5> kSlotNames{"identity", "shift", "modality", "reversal",
                                                "augment"};

std::size_t parse_index(const std::string& label, std::size_t limit, const char* factor) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(label, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != label.size() || label.empty() || v >= limit) {
    throw ConfigError(std::string("factor '") + factor + "' has invalid value '" + label + "'");
  }
  return v;
}

}  // namespace

std::string modality_label(Modality m) {
  switch (m) {
    case Modality::Visual: return "v";
    case Modality::Audio: return "a";
    case Modality::Text: return "t";
  }
  return "?";
}

Modality modality_from_label(const std::string& s) {
  if (s == "v") return Modality::Visual;
  if (s == "a") return Modality::Audio;
  if (s == "t") return Modality::Text;
  throw ConfigError("unknown modality '" + s + "'");
}

void WorldConfig::validate() const {
  if (n_identities < 1 || n_shifts < 1 || n_aug_draws < 1) {
    throw ConfigError("world counts must be >= 1");
  }
  if (obs_dim == 0 || id_dim == 0 || shift_dim == 0 || rev_dim == 0 || private_dim == 0) {
    throw ConfigError("world dimensions must be positive");
  }
  if (latent_dim() > obs_dim) {
    throw ConfigError("latent dimension " + std::to_string(latent_dim()) +
                      " exceeds obs_dim " + std::to_string(obs_dim));
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  for (double g : {gains.identity, gains.shift, gains.reversal, gains.priv}) {
    if (!std::isfinite(g)) throw ConfigError("factor gains must be finite");
  }
}

SyntheticWorld::SyntheticWorld(WorldConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  id_codes_ = unit_rows(cfg_.n_identities, cfg_.id_dim, derive_key(cfg_.seed, kIdTag));
  shift_codes_ = unit_rows(cfg_.n_shifts, cfg_.shift_dim, derive_key(cfg_.seed, kShiftTag));
  rev_codes_ = unit_rows(2, cfg_.rev_dim, derive_key(cfg_.seed, kRevTag));
  const auto latent = static_cast<Eigen::Index>(cfg_.latent_dim());
  for (int m = 0; m < kNumModalities; ++m) {
    mixing_[static_cast<std::size_t>(m)] =
        gaussian(static_cast<Eigen::Index>(cfg_.obs_dim), latent,
                 1.0 / std::sqrt(static_cast<double>(latent)),
                 derive_key(cfg_.seed, {kMixTag, static_cast<std::uint64_t>(m)}));
  }
}

Eigen::VectorXd SyntheticWorld::identity_code(std::size_t identity) const {
  return id_codes_.row(static_cast<Eigen::Index>(identity)).transpose();
}

Eigen::VectorXd SyntheticWorld::latent_vector(const Latent& l) const {
  if (l.identity >= cfg_.n_identities) throw DomainError("identity out of range");
  if (l.shift >= cfg_.n_shifts) throw DomainError("shift out of range");
  if (l.reversal > 1) throw DomainError("reversal out of range");
  if (l.draw >= cfg_.n_aug_draws) throw DomainError("augmentation draw out of range");
  const int mi = static_cast<int>(l.modality);
  if (mi < 0 || mi >= kNumModalities) throw DomainError("modality out of range");

  Eigen::VectorXd z(static_cast<Eigen::Index>(cfg_.latent_dim()));
  Eigen::Index at = 0;
  auto put = [&](const Eigen::VectorXd& v, double gain) {
    z.segment(at, v.size()) = gain * v;
    at += v.size();
  };
  put(id_codes_.row(static_cast<Eigen::Index>(l.identity)).transpose(), cfg_.gains.identity);
  put(shift_codes_.row(static_cast<Eigen::Index>(l.shift)).transpose(), cfg_.gains.shift);
  put(rev_codes_.row(static_cast<Eigen::Index>(l.reversal)).transpose(), cfg_.gains.reversal);
  const Eigen::MatrixXd priv = unit_rows(
      1, cfg_.private_dim,
      derive_key(cfg_.seed, {kPrivTag, l.identity, l.shift, static_cast<std::uint64_t>(mi)}));
  put(priv.row(0).transpose(), cfg_.gains.priv);
  return z;
}

SyntheticView SyntheticWorld::view(const Latent& l, bool with_noise) const {
  SyntheticView v{l, mixing_[static_cast<std::size_t>(l.modality)] * latent_vector(l)};
  if (with_noise && cfg_.noise_sigma > 0.0) {
    CounterRng rng(derive_key(cfg_.seed, {kNoiseTag, l.identity, l.shift,
                                          static_cast<std::uint64_t>(l.modality), l.reversal,
                                          l.draw}));
    for (Eigen::Index i = 0; i < v.observation.size(); ++i) {
      v.observation(i) += cfg_.noise_sigma * rng.normal();
    }
  }
  return v;
}

FactorSpec SyntheticWorld::identity_factor(FactorKind kind, std::size_t k) const {
  return make_indexed_factor("identity", kind, cfg_.n_identities, k);
}

FactorSpec SyntheticWorld::shift_factor(FactorKind kind, std::size_t k) const {
  return make_indexed_factor("shift", kind, cfg_.n_shifts, k);
}

FactorSpec SyntheticWorld::modality_factor(FactorKind kind, std::size_t k,
                                           const std::vector<Modality>& modalities) const {
  FactorSpec s{"modality", kind, {}, k};
  for (auto m : modalities) s.values.push_back(modality_label(m));
  return s;
}

FactorSpec SyntheticWorld::reversal_factor(FactorKind kind, std::size_t k,
                                           bool allow_reversed) const {
  FactorSpec s{"reversal", kind, {"r0"}, k};
  if (allow_reversed) s.values.push_back("r1");
  return s;
}

FactorSpec SyntheticWorld::augment_factor(FactorKind kind, std::size_t k) const {
  return make_indexed_factor("augment", kind, cfg_.n_aug_draws, k);
}

ViewResolver::ViewResolver(const SamplingPlan& plan, const WorldConfig& cfg) {
  const auto& specs = plan.specs();
  for (std::size_t m = 0; m < specs.size(); ++m) {
    int slot = -1;
    for (int s = 0; s < 5; ++s) {
      if (specs[m].name == kSlotNames[static_cast<std::size_t>(s)]) slot = s;
    }
    if (slot < 0) throw ConfigError("world has no factor named '" + specs[m].name + "'");
    const auto us = static_cast<std::size_t>(slot);
    if (position_[us] >= 0) throw ConfigError("factor '" + specs[m].name + "' appears twice");
    position_[us] = static_cast<int>(m);
    auto& dec = decoded_[us];
    for (const auto& label : specs[m].values) {
      switch (slot) {
        case kIdentity: dec.push_back(parse_index(label, cfg.n_identities, "identity")); break;
        case kShift: dec.push_back(parse_index(label, cfg.n_shifts, "shift")); break;
        case kModality:
          dec.push_back(static_cast<std::size_t>(modality_from_label(label)));
          break;
        case kReversal:
          if (label != "r0" && label != "r1") {
            throw ConfigError("factor 'reversal' has invalid value '" + label + "'");
          }
          dec.push_back(label == "r1" ? 1 : 0);
          break;
        case kAugment: dec.push_back(parse_index(label, cfg.n_aug_draws, "augment")); break;
      }
    }
  }
}

Latent ViewResolver::latent(const GDTransformation& t) const {
  auto get = [&](Slot s) -> std::size_t {
    const int p = position_[s];
    if (p < 0) return 0;
    return decoded_[s][t.factors[static_cast<std::size_t>(p)]];
  };
  Latent l;
  l.identity = get(kIdentity);
  l.shift = get(kShift);
  l.modality = static_cast<Modality>(get(kModality));
  l.reversal = get(kReversal);
  l.draw = get(kAugment);
  return l;
}

// ---------------------------------------------------------------------------

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z{obs_dim, hidden, embed, {}};
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    z.blocks[m] = {Eigen::MatrixXd::Zero(blocks[m].w1.rows(), blocks[m].w1.cols()),
                   Eigen::VectorXd::Zero(blocks[m].b1.size()),
                   Eigen::MatrixXd::Zero(blocks[m].w2.rows(), blocks[m].w2.cols()),
                   Eigen::VectorXd::Zero(blocks[m].b2.size())};
  }
  return z;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) {
    n += static_cast<std::size_t>(b.w1.size() + b.b1.size() + b.w2.size() + b.b2.size());
  }
  return n;
}

namespace {

template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  for (auto& b : p.blocks) {
    fn(b.w1.data(), b.w1.size());
    fn(b.b1.data(), b.b1.size());
    fn(b.w2.data(), b.w2.size());
    fn(b.b2.data(), b.b2.size());
  }
}

}  // namespace

Eigen::VectorXd EncoderParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for_each_tensor(*this, [&](const double* d, Eigen::Index n) {
    flat.segment(at, n) = Eigen::Map<const Eigen::VectorXd>(d, n);
    at += n;
  });
  return flat;
}

void EncoderParams::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw DomainError("flat parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  for_each_tensor(*this, [&](double* d, Eigen::Index n) {
    Eigen::Map<Eigen::VectorXd>(d, n) = flat.segment(at, n);
    at += n;
  });
}

void EncoderParams::axpy(double alpha, const EncoderParams& other) {
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    blocks[m].w1 += alpha * other.blocks[m].w1;
    blocks[m].b1 += alpha * other.blocks[m].b1;
    blocks[m].w2 += alpha * other.blocks[m].w2;
    blocks[m].b2 += alpha * other.blocks[m].b2;
  }
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&](const double* d, Eigen::Index n) {
    ok = ok && Eigen::Map<const Eigen::VectorXd>(d, n).allFinite();
  });
  return ok;
}

EncoderParams init_encoder(std::size_t obs_dim, std::size_t hidden, std::size_t embed,
                           std::uint64_t seed) {
  EncoderParams p{obs_dim, hidden, embed, {}};
  const auto o = static_cast<Eigen::Index>(obs_dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto e = static_cast<Eigen::Index>(embed);
  for (std::size_t m = 0; m < p.blocks.size(); ++m) {
    p.blocks[m].w1 = gaussian(h, o, 1.0 / std::sqrt(static_cast<double>(obs_dim)),
                              derive_key(seed, {kInitTag, m, 1}));
    p.blocks[m].b1 = Eigen::VectorXd::Zero(h);
    p.blocks[m].w2 = gaussian(e, h, 1.0 / std::sqrt(static_cast<double>(hidden)),
                              derive_key(seed, {kInitTag, m, 2}));
    p.blocks[m].b2 = Eigen::VectorXd::Zero(e);
  }
  return p;
}

Eigen::VectorXd encoder_forward(const EncoderParams& params, const SyntheticView& view) {
  return encode_views(params, {view}).embeddings.row(0).transpose();
}

EncodedBatch encode_views(const EncoderParams& params, const std::vector<SyntheticView>& views) {
  const auto k = static_cast<Eigen::Index>(views.size());
  const auto o = static_cast<Eigen::Index>(params.obs_dim);
  EncodedBatch out;
  out.cache.modality.reserve(views.size());
  out.cache.obs.resize(k, o);
  out.cache.hidden.resize(k, static_cast<Eigen::Index>(params.hidden));
  Eigen::MatrixXd pre(k, static_cast<Eigen::Index>(params.embed));
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto& v = views[static_cast<std::size_t>(r)];
    if (v.observation.size() != o) {
      throw DomainError("observation has dimension " + std::to_string(v.observation.size()) +
                        ", encoder expects " + std::to_string(o));
    }
    const auto& b = params.blocks[static_cast<std::size_t>(v.latent.modality)];
    out.cache.modality.push_back(v.latent.modality);
    out.cache.obs.row(r) = v.observation.transpose();
    const Eigen::VectorXd h = (b.w1 * v.observation + b.b1).array().tanh().matrix();
    out.cache.hidden.row(r) = h.transpose();
    pre.row(r) = (b.w2 * h + b.b2).transpose();
  }
  out.cache.out = normalize_rows(pre);
  out.embeddings = out.cache.out.unit;
  return out;
}

EncoderParams encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                               const EmbeddingMatrix& upstream) {
  const auto k = upstream.rows();
  if (cache.modality.size() != static_cast<std::size_t>(k) || cache.obs.rows() != k ||
      cache.out.unit.rows() != k || upstream.cols() != cache.out.unit.cols()) {
    throw UsageError("encoder_backward needs the forward cache of the same batch");
  }
  const EmbeddingMatrix du = cache.out.backward(upstream);
  EncoderParams g = params.zeros_like();
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto m = static_cast<std::size_t>(cache.modality[static_cast<std::size_t>(r)]);
    const auto& b = params.blocks[m];
    auto& gb = g.blocks[m];
    const Eigen::VectorXd d_pre = du.row(r).transpose();
    const Eigen::VectorXd h = cache.hidden.row(r).transpose();
    gb.w2.noalias() += d_pre * h.transpose();
    gb.b2 += d_pre;
    const Eigen::VectorXd dz =
        ((b.w2.transpose() * d_pre).array() * (1.0 - h.array().square())).matrix();
    gb.w1.noalias() += dz * cache.obs.row(r);
    gb.b1 += dz;
  }
  return g;
}

namespace {

constexpr char kMagic[8] = {'G', 'D', 'T', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kParamVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DomainError("truncated parameter file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_params(std::ostream& os, const EncoderParams& params) {
  os.write(kMagic, sizeof kMagic);
  put_u64(os, kParamVersion);
  put_u64(os, params.obs_dim);
  put_u64(os, params.hidden);
  put_u64(os, params.embed);
  put_u64(os, params.blocks.size());
  const Eigen::VectorXd flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_u64(os, std::bit_cast<std::uint64_t>(flat(i)));
}

EncoderParams read_params(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DomainError("not a parameter file");
  }
  if (get_u64(is) != kParamVersion) throw DomainError("unsupported parameter file version");
  const auto obs = get_u64(is), hidden = get_u64(is), embed = get_u64(is);
  if (get_u64(is) != kNumModalities) throw DomainError("unexpected modality count");
  EncoderParams p = init_encoder(obs, hidden, embed, 0).zeros_like();
  Eigen::VectorXd flat(static_cast<Eigen::Index>(p.parameter_count()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = std::bit_cast<double>(get_u64(is));
  p.assign(flat);
  return p;
}

// ---------------------------------------------------------------------------

std::vector<SyntheticView> materialize(const SyntheticWorld& world, const ViewResolver& resolver,
                                       const Batch& batch) {
  std::vector<SyntheticView> views;
  views.reserve(batch.size());
  for (const auto& t : batch.transformations) views.push_back(world.view(resolver.latent(t)));
  return views;
}

TrainResult train(const SyntheticWorld& world, const SamplingPlan& plan,
                  const LossConfig& loss_cfg, const OptimConfig& opt) {
  return train(world, plan, loss_cfg, opt,
               init_encoder(world.config().obs_dim, opt.hidden, opt.embed,
                            derive_key(opt.seed, kInitTag)));
}

TrainResult train(const SyntheticWorld& world, const SamplingPlan& plan,
                  const LossConfig& loss_cfg, const OptimConfig& opt, EncoderParams init) {
  loss_cfg.validate();
  const ViewResolver resolver(plan, world.config());
  TrainResult result{std::move(init), {}, 0.0};
  if (opt.epochs == 0 || opt.steps_per_epoch == 0) return result;

  auto step_batch = [&](std::size_t step) {
    return sample_batch(plan, derive_key(opt.seed, {kStepTag, step}));
  };
  auto step_loss_raw = [&](const EncoderParams& p, const Batch& batch, bool with_grad,
                           EncoderParams* grad) {
    const auto views = materialize(world, resolver, batch);
    const EncodedBatch enc = encode_views(p, views);
    const PairMask mask = build_pair_mask(batch, loss_cfg);
    if (!with_grad) return gdt_nce_loss(enc.embeddings, mask, loss_cfg);
    const LossAndGrad lg = gdt_nce_loss_and_grad(enc.embeddings, mask, loss_cfg);
    *grad = encoder_backward(p, enc.cache, lg.grad);
    return lg.loss;
  };
  // non-finite embeddings surface as numeric errors inside the loss
  auto step_loss = [&](const EncoderParams& p, const Batch& batch, bool with_grad,
                       EncoderParams* grad, std::size_t step) {
    try {
      return step_loss_raw(p, batch, with_grad, grad);
    } catch (const DomainError& e) {
      throw TrainingError(step, "loss diverged at step " + std::to_string(step) + ": " + e.what());
    } catch (const DegenerateObjectiveError& e) {
      throw TrainingError(step, "loss diverged at step " + std::to_string(step) + ": " + e.what());
    }
  };

  double init_sum = 0.0;
  for (std::size_t s = 0; s < opt.steps_per_epoch; ++s) {
    init_sum += step_loss(result.params, step_batch(s), false, nullptr, 0);
  }
  result.initial_loss = init_sum / static_cast<double>(opt.steps_per_epoch);

  EncoderParams velocity = result.params.zeros_like();
  EncoderParams grad;
  std::size_t step = 0;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    double sum = 0.0;
    for (std::size_t s = 0; s < opt.steps_per_epoch; ++s, ++step) {
      const double loss = step_loss(result.params, step_batch(step), true, &grad, step);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw TrainingError(step, "loss diverged at step " + std::to_string(step));
      }
      sum += loss;
      // velocity = momentum * velocity + grad; params -= lr * velocity
      for (std::size_t m = 0; m < velocity.blocks.size(); ++m) {
        auto& v = velocity.blocks[m];
        const auto& g = grad.blocks[m];
        v.w1 = opt.momentum * v.w1 + g.w1;
        v.b1 = opt.momentum * v.b1 + g.b1;
        v.w2 = opt.momentum * v.w2 + g.w2;
        v.b2 = opt.momentum * v.b2 + g.b2;
      }
      result.params.axpy(-opt.lr, velocity);
      if (!result.params.all_finite()) {
        throw TrainingError(step, "parameters diverged at step " + std::to_string(step));
      }
    }
    result.history.push_back(sum / static_cast<double>(opt.steps_per_epoch));
  }
  return result;
}

}  // namespace gdt

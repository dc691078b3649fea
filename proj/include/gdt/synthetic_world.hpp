#pragma once

// Desk-scale multimodal world with the video factor structure
// (identity i, time shift tau, modality m, reversal r, augmentation g), a
// per-modality two-layer tanh encoder and an SGD trainer for the
// contrastive objective.
//
// A view's observation is
//
//   x = G_m [ a_id code(i) ; a_shift code(tau) ; a_rev code(r) ; a_priv p(i, tau, m) ] + eps
//
// where the codes are shared across modalities, p is a clip-and-modality
// private nuisance that only a cross-modal objective can tell apart from
// content, G_m is a fixed full-column-rank mixing map per modality and
// eps ~ N(0, noise_sigma^2) is drawn per augmentation index g.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gdt/batch_sampler.hpp"
#include "gdt/gdt_loss.hpp"

namespace gdt {

enum class Modality : int { Visual = 0, Audio = 1, Text = 2 };
inline constexpr int kNumModalities = 3;

std::string modality_label(Modality m);
Modality modality_from_label(const std::string& s);

struct FactorGains {
  double identity = 1.0;
  double shift = 0.6;
  double reversal = 0.6;
  double priv = 0.8;
};

struct WorldConfig {
  std::size_t n_identities = 64;
  std::size_t n_shifts = 8;
  std::size_t n_aug_draws = 64;
  std::size_t obs_dim = 32;
  std::size_t id_dim = 8;
  std::size_t shift_dim = 4;
  std::size_t rev_dim = 2;
  std::size_t private_dim = 8;
  double noise_sigma = 0.1;
  FactorGains gains;
  std::uint64_t seed = 1;

  std::size_t latent_dim() const { return id_dim + shift_dim + rev_dim + private_dim; }
  /// Throws ConfigError.
  void validate() const;
};

struct Latent {
  std::size_t identity = 0;
  std::size_t shift = 0;
  std::size_t reversal = 0;  // 0 = forward, 1 = reversed
  Modality modality = Modality::Visual;
  std::size_t draw = 0;      // augmentation index
};

struct SyntheticView {
  Latent latent;
  Eigen::VectorXd observation;
};

class SyntheticWorld {
 public:
  explicit SyntheticWorld(WorldConfig cfg);

  const WorldConfig& config() const { return cfg_; }

  /// Throws DomainError for out-of-range latent values.
  SyntheticView view(const Latent& latent, bool with_noise = true) const;

  /// The pre-mixing latent vector [a_id code(i); ...; a_priv p(i, tau, m)].
  Eigen::VectorXd latent_vector(const Latent& latent) const;
  const Eigen::MatrixXd& mixing(Modality m) const { return mixing_[static_cast<int>(m)]; }
  Eigen::VectorXd identity_code(std::size_t identity) const;

  /// Factor specs with the value labels the world understands: identity
  /// "0".."n-1", shift "0".."n-1", modality "v"/"a"/"t", reversal "r0"/"r1",
  /// augment "0".."n_aug-1".
  FactorSpec identity_factor(FactorKind kind, std::size_t k) const;
  FactorSpec shift_factor(FactorKind kind, std::size_t k) const;
  FactorSpec modality_factor(FactorKind kind, std::size_t k,
                             const std::vector<Modality>& modalities) const;
  FactorSpec reversal_factor(FactorKind kind, std::size_t k, bool allow_reversed = true) const;
  FactorSpec augment_factor(FactorKind kind, std::size_t k) const;

 private:
  WorldConfig cfg_;
  Eigen::MatrixXd id_codes_;     // n_identities x id_dim
  Eigen::MatrixXd shift_codes_;  // n_shifts x shift_dim
  Eigen::MatrixXd rev_codes_;    // 2 x rev_dim
  std::array<Eigen::MatrixXd, kNumModalities> mixing_;
};

/// Maps transformations of a plan to latents. Factors are recognized by name
/// ("identity", "shift", "modality", "reversal", "augment"); absent factors
/// default to identity 0, shift 0, visual, forward, draw 0.
class ViewResolver {
 public:
  /// Throws ConfigError on unknown factor names or unparseable labels.
  ViewResolver(const SamplingPlan& plan, const WorldConfig& cfg);

  Latent latent(const GDTransformation& t) const;

 private:
  std::array<int, 5> position_{-1, -1, -1, -1, -1};
  std::array<std::vector<std::size_t>, 5> decoded_;
};

// ---------------------------------------------------------------------------
// Encoder

struct EncoderBlock {
  Eigen::MatrixXd w1;  // hidden x obs
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // embed x hidden
  Eigen::VectorXd b2;
};

struct EncoderParams {
  std::size_t obs_dim = 0, hidden = 0, embed = 0;
  std::array<EncoderBlock, kNumModalities> blocks;

  /// Same shapes, all zeros.
  EncoderParams zeros_like() const;
  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  /// this += alpha * other
  void axpy(double alpha, const EncoderParams& other);
  bool all_finite() const;
};

EncoderParams init_encoder(std::size_t obs_dim, std::size_t hidden, std::size_t embed,
                           std::uint64_t seed);

struct EncoderCache {
  std::vector<Modality> modality;
  Eigen::MatrixXd obs;     // K x obs_dim
  Eigen::MatrixXd hidden;  // K x hidden, post-tanh
  NormalizedRows out;      // unit embeddings and pre-normalization norms
};

struct EncodedBatch {
  EmbeddingMatrix embeddings;  // K x embed, unit rows
  EncoderCache cache;
};

/// normalize(W2 tanh(W1 x + b1) + b2) with the block of the view's modality.
/// Throws DomainError on a dimension mismatch or a zero pre-normalization
/// output.
Eigen::VectorXd encoder_forward(const EncoderParams& params, const SyntheticView& view);

EncodedBatch encode_views(const EncoderParams& params, const std::vector<SyntheticView>& views);

/// Gradients of a scalar loss with respect to every parameter, given the loss
/// gradient with respect to the unit embeddings. Throws UsageError when the
/// cache does not match the upstream gradient.
EncoderParams encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                               const EmbeddingMatrix& upstream);

/// Versioned little-endian binary format: "GDTPARAM", u32 version, u64 dims,
/// then doubles block by block.
void write_params(std::ostream& os, const EncoderParams& params);
EncoderParams read_params(std::istream& is);

// ---------------------------------------------------------------------------
// Training

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 50;
  std::uint64_t seed = 1;
  std::size_t hidden = 24;
  std::size_t embed = 16;
};

struct TrainResult {
  EncoderParams params;
  std::vector<double> history;  // mean step loss per epoch
  double initial_loss = 0.0;    // mean loss over epoch 0's batches at the initial params
};

std::vector<SyntheticView> materialize(const SyntheticWorld& world, const ViewResolver& resolver,
                                       const Batch& batch);

/// SGD with momentum on the contrastive objective. Each step samples a batch
/// keyed on (seed, step), encodes its views, and back-propagates the loss.
/// Throws TrainingError when the loss, gradient or parameters stop being finite.
TrainResult train(const SyntheticWorld& world, const SamplingPlan& plan,
                  const LossConfig& loss_cfg, const OptimConfig& opt);

/// As above, starting from the given parameters.
TrainResult train(const SyntheticWorld& world, const SamplingPlan& plan,
                  const LossConfig& loss_cfg, const OptimConfig& opt, EncoderParams init);

}  // namespace gdt

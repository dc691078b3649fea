#include "gdt/gdt_loss.hpp"

#include <cmath>
#include <limits>

#include "gdt/errors.hpp"

namespace gdt {

std::string to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::SimClr: return "simclr";
    case WeightScheme::CrossModal: return "cross_modal";
    case WeightScheme::CrossModalStrict: return "cross_modal_strict";
  }
  return "?";
}

WeightScheme weight_scheme_from_string(const std::string& s) {
  if (s == "simclr") return WeightScheme::SimClr;
  if (s == "cross_modal") return WeightScheme::CrossModal;
  if (s == "cross_modal_strict") return WeightScheme::CrossModalStrict;
  throw ConfigError("unknown weight scheme '" + s + "'");
}

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be a positive finite number");
  }
}

PairMask build_pair_mask(const Batch& batch, const LossConfig& cfg) {
  const auto& specs = batch.plan.specs();
  const auto& ts = batch.transformations;
  const auto k = static_cast<Eigen::Index>(ts.size());
  int mod = -1;
  if (cfg.weight_scheme != WeightScheme::SimClr) {
    mod = batch.plan.find(kModalityFactor);
    if (mod < 0) {
      throw ConfigError("weight scheme '" + to_string(cfg.weight_scheme) +
                        "' needs a factor named 'modality'");
    }
  }

  PairMask mask{Eigen::MatrixXd::Zero(k, k), Eigen::MatrixXd::Zero(k, k)};
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      const auto& ta = ts[static_cast<std::size_t>(a)];
      const auto& tb = ts[static_cast<std::size_t>(b)];
      mask.contrast(a, b) = composed_contrast(specs, ta, tb);
      const bool distinct = !(ta == tb);
      const bool cross = mod >= 0 && ta.factors[static_cast<std::size_t>(mod)] !=
                                         tb.factors[static_cast<std::size_t>(mod)];
      switch (cfg.weight_scheme) {
        case WeightScheme::SimClr: mask.weight(a, b) = distinct; break;
        case WeightScheme::CrossModal: mask.weight(a, b) = cross; break;
        case WeightScheme::CrossModalStrict: mask.weight(a, b) = distinct && cross; break;
      }
    }
  }
  return mask;
}

namespace {

void check_shapes(const EmbeddingMatrix& emb, const PairMask& mask) {
  if (mask.contrast.rows() != mask.contrast.cols() ||
      mask.weight.rows() != mask.contrast.rows() ||
      mask.weight.cols() != mask.contrast.cols()) {
    throw DomainError("pair mask is not K x K");
  }
  if (emb.rows() != mask.size()) {
    throw DomainError("embedding has " + std::to_string(emb.rows()) + " rows, mask is " +
                      std::to_string(mask.size()) + " x " + std::to_string(mask.size()));
  }
}

// log sum_c W[a][c] exp(s_ac) for one anchor. Returns -inf for an empty row.
double log_partition(const Eigen::MatrixXd& sim, const Eigen::MatrixXd& weight,
                     Eigen::Index a, bool stable) {
  const Eigen::Index k = sim.cols();
  double shift = 0.0;
  if (stable) {
    shift = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      if (weight(a, c) != 0.0) shift = std::max(shift, sim(a, c));
    }
    if (!std::isfinite(shift)) return shift;
  }
  double z = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (weight(a, c) != 0.0) z += weight(a, c) * std::exp(sim(a, c) - shift);
  }
  return shift + std::log(z);
}

struct AnchorTerms {
  Eigen::MatrixXd sim;
  Eigen::VectorXd log_z;     // valid where counted(a) > 0
  Eigen::VectorXd counted;   // sum_b C W
  double total_counted = 0.0;
};

AnchorTerms anchor_terms(const EmbeddingMatrix& emb, const PairMask& mask,
                         const LossConfig& cfg) {
  cfg.validate();
  check_shapes(emb, mask);
  const Eigen::Index k = emb.rows();
  AnchorTerms t;
  t.sim = (emb * emb.transpose()) / cfg.temperature;
  t.log_z = Eigen::VectorXd::Zero(k);
  t.counted = mask.contrast.cwiseProduct(mask.weight).rowwise().sum();
  for (Eigen::Index a = 0; a < k; ++a) {
    if (t.counted(a) == 0.0) continue;
    t.total_counted += t.counted(a);
    const double lz = log_partition(t.sim, mask.weight, a, cfg.stable);
    if (!std::isfinite(lz) && lz < 0) {
      throw DegenerateObjectiveError(
          static_cast<std::size_t>(a),
          "anchor " + std::to_string(a) + " has a counted positive but an empty denominator");
    }
    t.log_z(a) = lz;
  }
  return t;
}

double reduction_scale(const AnchorTerms& t, const LossConfig& cfg) {
  if (cfg.reduction == Reduction::Mean && t.total_counted > 0.0) return 1.0 / t.total_counted;
  return 1.0;
}

}  // namespace

Eigen::MatrixXd gdt_nce_pair_terms(const EmbeddingMatrix& emb, const PairMask& mask,
                                   const LossConfig& cfg) {
  const AnchorTerms t = anchor_terms(emb, mask, cfg);
  const Eigen::Index k = emb.rows();
  Eigen::MatrixXd terms = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    if (t.counted(a) == 0.0) continue;
    for (Eigen::Index b = 0; b < k; ++b) {
      const double p = mask.contrast(a, b) * mask.weight(a, b);
      if (p != 0.0) terms(a, b) = -p * (t.sim(a, b) - t.log_z(a));
    }
  }
  return terms;
}

double gdt_nce_loss(const EmbeddingMatrix& emb, const PairMask& mask, const LossConfig& cfg) {
  const AnchorTerms t = anchor_terms(emb, mask, cfg);
  const Eigen::Index k = emb.rows();
  double loss = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) {
    if (t.counted(a) == 0.0) continue;
    double pos = 0.0;
    for (Eigen::Index b = 0; b < k; ++b) {
      pos += mask.contrast(a, b) * mask.weight(a, b) * t.sim(a, b);
    }
    loss += t.counted(a) * t.log_z(a) - pos;
  }
  return loss * reduction_scale(t, cfg);
}

LossAndGrad gdt_nce_loss_and_grad(const EmbeddingMatrix& emb, const PairMask& mask,
                                  const LossConfig& cfg) {
  const AnchorTerms t = anchor_terms(emb, mask, cfg);
  const Eigen::Index k = emb.rows();
  // dL/ds_ab = n_a softmax_a(b) - C W, with softmax over the anchor's weighted row
  Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(k, k);
  double loss = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) {
    if (t.counted(a) == 0.0) continue;
    double pos = 0.0;
    for (Eigen::Index b = 0; b < k; ++b) {
      const double p = mask.contrast(a, b) * mask.weight(a, b);
      pos += p * t.sim(a, b);
      if (mask.weight(a, b) != 0.0) {
        ds(a, b) = t.counted(a) * mask.weight(a, b) * std::exp(t.sim(a, b) - t.log_z(a));
      }
      ds(a, b) -= p;
    }
    loss += t.counted(a) * t.log_z(a) - pos;
  }
  const double scale = reduction_scale(t, cfg);
  LossAndGrad out;
  out.loss = loss * scale;
  out.grad = ((ds + ds.transpose()) * emb) * (scale / cfg.temperature);
  return out;
}

EmbeddingMatrix gdt_nce_grad(const EmbeddingMatrix& emb, const PairMask& mask,
                             const LossConfig& cfg) {
  return gdt_nce_loss_and_grad(emb, mask, cfg).grad;
}

NormalizedRows normalize_rows(const EmbeddingMatrix& emb) {
  NormalizedRows out{emb, emb.rowwise().norm()};
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    if (!std::isfinite(out.norms(i))) {
      throw DomainError("row " + std::to_string(i) + " is not finite");
    }
    if (!(out.norms(i) > 0.0)) {
      throw DomainError("row " + std::to_string(i) + " has zero norm");
    }
    out.unit.row(i) /= out.norms(i);
  }
  return out;
}

EmbeddingMatrix NormalizedRows::backward(const EmbeddingMatrix& upstream) const {
  EmbeddingMatrix g(upstream.rows(), upstream.cols());
  for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
    const double radial = unit.row(i).dot(upstream.row(i));
    g.row(i) = (upstream.row(i) - radial * unit.row(i)) / norms(i);
  }
  return g;
}

}  // namespace gdt

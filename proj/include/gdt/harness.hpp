#pragma once

// Experiment configuration, hypothesis-grid presets, single runs and sweeps.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdt/eval_retrieval.hpp"
#include "gdt/gdt_loss.hpp"
#include "gdt/synthetic_world.hpp"

namespace gdt {

enum class FactorMode { Off, Invariant, Distinctive };

std::string to_string(FactorMode m);
FactorMode factor_mode_from_string(const std::string& s);

struct FactorSetting {
  FactorMode mode = FactorMode::Off;
  std::size_t k = 1;

  friend bool operator==(const FactorSetting&, const FactorSetting&) = default;
};

/// One row of a hypothesis grid. Identity (data sampling) is always
/// distinctive. An "off" factor is sampled once per branch with no contrast
/// role: one random shift, forward playback only, one modality or one draw.
struct ExperimentPreset {
  std::string name;
  std::string annotation;  // e.g. "DS=d TR=. TS=i Mod=AV"
  FactorSetting shift;
  FactorSetting reversal;
  FactorSetting augment;
  std::vector<Modality> modalities{Modality::Visual};
  WeightScheme weight_scheme = WeightScheme::SimClr;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  nlohmann::json overrides = nlohmann::json::object();  // merged into the run config

  friend bool operator==(const ExperimentPreset&, const ExperimentPreset&) = default;
};

/// Video-audio grid (row_a .. row_m) and video-text grid (text_a .. text_g,
/// using the third synthetic modality).
std::vector<ExperimentPreset> builtin_presets();

struct EvalConfig {
  std::size_t gallery_shift = 0;
  std::size_t query_draw = 1;
  std::vector<std::size_t> knn_train_shifts{0, 1};
  std::size_t knn_k = 1;
  std::size_t dispersion_videos = 64;
  std::size_t dispersion_shifts = 8;
};

struct ExperimentConfig {
  int version = 1;
  WorldConfig world;
  OptimConfig optim;       // optim.seed is replaced by the run seed
  std::size_t k_identity = 32;
  LossConfig loss{0.07, WeightScheme::SimClr, true, Reduction::Mean};
  EvalConfig eval;
  std::vector<ExperimentPreset> presets = builtin_presets();

  const ExperimentPreset& preset(const std::string& name) const;
};

inline constexpr int kConfigVersion = 1;

/// Strict parse: unknown fields, wrong types and bad values raise ConfigError
/// naming the field (and the line for syntax errors).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// The fully resolved settings of one (preset, seed) run.
struct RunSpec {
  ExperimentPreset preset;
  std::uint64_t seed = 0;
  WorldConfig world;  // world.seed already derived from the run seed
  OptimConfig optim;
  std::size_t k_identity = 0;
  LossConfig loss;
  EvalConfig eval;
};

RunSpec resolve_run(const ExperimentConfig& cfg, const std::string& preset, std::uint64_t seed);
nlohmann::json run_spec_to_json(const RunSpec& spec);
/// FNV-1a 64 over the canonical JSON of the resolved run, as 16 hex digits.
std::string config_hash(const RunSpec& spec);

SamplingPlan build_plan(const ExperimentPreset& preset, const SyntheticWorld& world,
                        std::size_t k_identity);

struct Metrics {
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double knn_accuracy = 0.0;
  double dispersion = 0.0;
};

Metrics evaluate(const EncoderParams& params, const SyntheticWorld& world,
                 const EvalConfig& eval);

struct RunRecord {
  std::string preset;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double initial_loss = 0.0;
  Metrics metrics;
  double wall_time_s = 0.0;
  std::string config_hash;
  std::string error;  // empty on success
};

struct RunOutput {
  RunRecord record;
  TrainResult train;
};

RunOutput run_experiment(const RunSpec& spec);

/// Fixed column set; decimals with 10 significant digits.
std::string csv_header(bool with_wall_time = true);
std::string csv_row(const RunRecord& r, bool with_wall_time = true);

/// Writes params.bin, metrics.csv (no wall time, so reruns are byte-identical),
/// history.csv and config.json into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunSpec& spec,
                       const RunOutput& out);

/// Runs presets x seeds in preset-then-seed order, with up to `threads` runs in
/// flight. Failed runs become rows with the error column set.
std::vector<RunRecord> run_sweep(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& presets,
                                 const std::vector<std::uint64_t>& seeds, unsigned threads);

/// GDT_THREADS, clamped to >= 1; defaults to 1.
unsigned threads_from_env();

}  // namespace gdt

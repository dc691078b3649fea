#include "gdt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"

namespace gdt {

using nlohmann::json;

std::string to_string(FactorMode m) {
  switch (m) {
    case FactorMode::Off: return "off";
    case FactorMode::Invariant: return "invariant";
    case FactorMode::Distinctive: return "distinctive";
  }
  return "?";
}

FactorMode factor_mode_from_string(const std::string& s) {
  if (s == "off") return FactorMode::Off;
  if (s == "invariant") return FactorMode::Invariant;
  if (s == "distinctive") return FactorMode::Distinctive;
  throw ConfigError("unknown factor mode '" + s + "'");
}

namespace {

FactorSetting off() { return {FactorMode::Off, 1}; }
FactorSetting inv(std::size_t k = 2) { return {FactorMode::Invariant, k}; }
FactorSetting dis(std::size_t k = 2) { return {FactorMode::Distinctive, k}; }

char grid_symbol(const FactorSetting& f) {
  switch (f.mode) {
    case FactorMode::Off: return '.';
    case FactorMode::Invariant: return 'i';
    case FactorMode::Distinctive: return 'd';
  }
  return '?';
}

ExperimentPreset make_preset(std::string name, FactorSetting tr, FactorSetting ts,
                             std::vector<Modality> mods) {
  ExperimentPreset p;
  p.name = std::move(name);
  p.reversal = tr;
  p.shift = ts;
  p.modalities = std::move(mods);
  const bool cross = p.modalities.size() > 1;
  // single modality: two augmentations give the invariant pair (SimCLR-like);
  // cross-modal: one augmentation per leaf, positives come from the other modality
  p.augment = cross ? off() : inv(2);
  p.weight_scheme = cross ? WeightScheme::CrossModal : WeightScheme::SimClr;
  std::string mod;
  for (auto m : p.modalities) mod += static_cast<char>(std::toupper(modality_label(m)[0]));
  p.annotation = std::string("DS=d TR=") + grid_symbol(tr) + " TS=" + grid_symbol(ts) +
                 " Mod=" + mod;
  return p;
}

}  // namespace

std::vector<ExperimentPreset> builtin_presets() {
  const std::vector<Modality> v{Modality::Visual};
  const std::vector<Modality> av{Modality::Visual, Modality::Audio};
  const std::vector<Modality> vt{Modality::Visual, Modality::Text};
  return {
      // video-audio grid: SimCLR-like rows (a-d), cross-modal (e-h),
      // +1 distinctive factor (i-l), +2 distinctive factors (m)
      make_preset("row_a", off(), off(), v),
      make_preset("row_b", inv(), off(), v),
      make_preset("row_c", off(), inv(), v),
      make_preset("row_d", inv(), inv(), v),
      make_preset("row_e", off(), off(), av),
      make_preset("row_f", inv(), off(), av),
      make_preset("row_g", off(), inv(), av),
      make_preset("row_h", inv(), inv(), av),
      make_preset("row_i", dis(), off(), av),
      make_preset("row_j", off(), dis(), av),
      make_preset("row_k", dis(), inv(), av),
      make_preset("row_l", inv(), dis(), av),
      make_preset("row_m", dis(), dis(), av),
      // video-text grid
      make_preset("text_a", off(), off(), v),
      make_preset("text_b", off(), off(), vt),
      make_preset("text_c", dis(), off(), vt),
      make_preset("text_d", off(), dis(), vt),
      make_preset("text_e", dis(), inv(), vt),
      make_preset("text_f", inv(), dis(), vt),
      make_preset("text_g", dis(), dis(), vt),
  };
}

const ExperimentPreset& ExperimentConfig::preset(const std::string& name) const {
  for (const auto& p : presets) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// strict JSON reading

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  Reader(const Reader&) = delete;

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown field");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string field(const std::string& key) const { return path_ + "." + key; }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  void get_count(const std::string& key, std::size_t& out, std::size_t min = 0) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    out = v.get<std::size_t>();
    if (out < min) {
      throw ConfigError(field(key) + ": must be >= " + std::to_string(min));
    }
  }

  void get_number(const std::string& key, double& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if (!j_.at(key).is_number()) throw ConfigError(field(key) + ": expected a number");
    out = j_.at(key).get<double>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_world(const json& j, WorldConfig& w) {
  Reader r(j, "world");
  r.get_count("n_identities", w.n_identities, 1);
  r.get_count("n_shifts", w.n_shifts, 1);
  r.get_count("n_aug_draws", w.n_aug_draws, 1);
  r.get_count("obs_dim", w.obs_dim, 1);
  r.get_count("id_dim", w.id_dim, 1);
  r.get_count("shift_dim", w.shift_dim, 1);
  r.get_count("rev_dim", w.rev_dim, 1);
  r.get_count("private_dim", w.private_dim, 1);
  r.get_number("noise_sigma", w.noise_sigma);
  if (w.noise_sigma < 0.0) throw ConfigError("world.noise_sigma: must be >= 0");
  if (r.has("gains")) {
    Reader g(r.raw("gains"), "world.gains");
    g.get_number("identity", w.gains.identity);
    g.get_number("shift", w.gains.shift);
    g.get_number("reversal", w.gains.reversal);
    g.get_number("private", w.gains.priv);
  }
  r.get("seed", w.seed);
}

void read_train(const json& j, OptimConfig& o, std::size_t& k_identity) {
  Reader r(j, "train");
  r.get_number("lr", o.lr);
  r.get_number("momentum", o.momentum);
  r.get_count("epochs", o.epochs);
  r.get_count("steps_per_epoch", o.steps_per_epoch);
  r.get_count("hidden", o.hidden, 1);
  r.get_count("embed", o.embed, 1);
  r.get_count("k_identity", k_identity, 1);
  if (o.lr < 0.0) throw ConfigError("train.lr: must be >= 0");
  if (o.momentum < 0.0 || o.momentum >= 1.0) throw ConfigError("train.momentum: must be in [0, 1)");
}

void read_loss(const json& j, LossConfig& l) {
  Reader r(j, "loss");
  r.get_number("temperature", l.temperature);
  if (!(l.temperature > 0.0)) throw ConfigError("loss.temperature: must be > 0");
  r.get("stable", l.stable);
  if (r.has("reduction")) {
    const json& v = r.raw("reduction");
    if (v == "sum") {
      l.reduction = Reduction::Sum;
    } else if (v == "mean") {
      l.reduction = Reduction::Mean;
    } else {
      throw ConfigError("loss.reduction: expected \"sum\" or \"mean\"");
    }
  }
}

void read_eval(const json& j, EvalConfig& e) {
  Reader r(j, "eval");
  r.get_count("gallery_shift", e.gallery_shift);
  r.get_count("query_draw", e.query_draw);
  r.get("knn_train_shifts", e.knn_train_shifts);
  r.get_count("knn_k", e.knn_k, 1);
  r.get_count("dispersion_videos", e.dispersion_videos, 1);
  r.get_count("dispersion_shifts", e.dispersion_shifts, 2);
}

FactorSetting read_factor(const json& j, const std::string& path) {
  Reader r(j, path);
  FactorSetting f;
  std::string mode = "off";
  r.get("mode", mode);
  try {
    f.mode = factor_mode_from_string(mode);
  } catch (const ConfigError&) {
    throw ConfigError(path + ".mode: unknown mode '" + mode + "'");
  }
  f.k = f.mode == FactorMode::Off ? 1 : 2;
  r.get_count("k", f.k, 1);
  if (f.mode == FactorMode::Off && f.k != 1) throw ConfigError(path + ".k: off factors have k = 1");
  return f;
}

json factor_json(const FactorSetting& f) { return {{"mode", to_string(f.mode)}, {"k", f.k}}; }

ExperimentPreset read_preset(const json& j, std::size_t index) {
  const std::string path = "presets[" + std::to_string(index) + "]";
  Reader r(j, path);
  ExperimentPreset p;
  p.modalities.clear();
  r.get("name", p.name);
  if (p.name.empty()) throw ConfigError(path + ".name: required");
  r.get("annotation", p.annotation);
  if (r.has("shift")) p.shift = read_factor(r.raw("shift"), path + ".shift");
  if (r.has("reversal")) p.reversal = read_factor(r.raw("reversal"), path + ".reversal");
  if (r.has("augment")) p.augment = read_factor(r.raw("augment"), path + ".augment");
  if (r.has("identity")) {
    // data sampling is always distinctive; accepted for auditability only
    Reader id(r.raw("identity"), path + ".identity");
    std::string mode = "distinctive";
    id.get("mode", mode);
    if (mode != "distinctive") throw ConfigError(path + ".identity.mode: must be distinctive");
  }
  std::vector<std::string> mods{"v"};
  r.get("modalities", mods);
  if (mods.empty()) throw ConfigError(path + ".modalities: must not be empty");
  for (const auto& m : mods) {
    try {
      p.modalities.push_back(modality_from_label(m));
    } catch (const ConfigError&) {
      throw ConfigError(path + ".modalities: unknown modality '" + m + "'");
    }
  }
  std::string scheme = "simclr";
  r.get("weight_scheme", scheme);
  try {
    p.weight_scheme = weight_scheme_from_string(scheme);
  } catch (const ConfigError&) {
    throw ConfigError(path + ".weight_scheme: unknown scheme '" + scheme + "'");
  }
  r.get("seeds", p.seeds);
  if (r.has("overrides")) {
    p.overrides = r.raw("overrides");
    if (!p.overrides.is_object()) throw ConfigError(path + ".overrides: expected an object");
    for (auto it = p.overrides.begin(); it != p.overrides.end(); ++it) {
      if (it.key() != "world" && it.key() != "train" && it.key() != "loss" && it.key() != "eval") {
        throw ConfigError(path + ".overrides." + it.key() + ": unknown section");
      }
    }
  }
  return p;
}

json preset_json(const ExperimentPreset& p) {
  json mods = json::array();
  for (auto m : p.modalities) mods.push_back(modality_label(m));
  return {{"name", p.name},
          {"annotation", p.annotation},
          {"identity", {{"mode", "distinctive"}}},
          {"shift", factor_json(p.shift)},
          {"reversal", factor_json(p.reversal)},
          {"augment", factor_json(p.augment)},
          {"modalities", mods},
          {"weight_scheme", to_string(p.weight_scheme)},
          {"seeds", p.seeds},
          {"overrides", p.overrides}};
}

json world_json(const WorldConfig& w) {
  return {{"n_identities", w.n_identities},
          {"n_shifts", w.n_shifts},
          {"n_aug_draws", w.n_aug_draws},
          {"obs_dim", w.obs_dim},
          {"id_dim", w.id_dim},
          {"shift_dim", w.shift_dim},
          {"rev_dim", w.rev_dim},
          {"private_dim", w.private_dim},
          {"noise_sigma", w.noise_sigma},
          {"gains",
           {{"identity", w.gains.identity},
            {"shift", w.gains.shift},
            {"reversal", w.gains.reversal},
            {"private", w.gains.priv}}},
          {"seed", w.seed}};
}

json train_json(const OptimConfig& o, std::size_t k_identity) {
  return {{"lr", o.lr},         {"momentum", o.momentum},
          {"epochs", o.epochs}, {"steps_per_epoch", o.steps_per_epoch},
          {"hidden", o.hidden}, {"embed", o.embed},
          {"k_identity", k_identity}};
}

json loss_json(const LossConfig& l) {
  return {{"temperature", l.temperature},
          {"stable", l.stable},
          {"reduction", l.reduction == Reduction::Sum ? "sum" : "mean"}};
}

json eval_json(const EvalConfig& e) {
  return {{"gallery_shift", e.gallery_shift},
          {"query_draw", e.query_draw},
          {"knn_train_shifts", e.knn_train_shifts},
          {"knn_k", e.knn_k},
          {"dispersion_videos", e.dispersion_videos},
          {"dispersion_shifts", e.dispersion_shifts}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  Reader r(j, "config");
  if (!r.has("version")) throw ConfigError("config.version: required");
  r.get("version", cfg.version);
  if (cfg.version != kConfigVersion) {
    throw ConfigError("config.version: unsupported version " + std::to_string(cfg.version));
  }
  if (r.has("world")) read_world(r.raw("world"), cfg.world);
  if (r.has("train")) read_train(r.raw("train"), cfg.optim, cfg.k_identity);
  if (r.has("loss")) read_loss(r.raw("loss"), cfg.loss);
  if (r.has("eval")) read_eval(r.raw("eval"), cfg.eval);
  if (r.has("presets")) {
    const json& ps = r.raw("presets");
    if (!ps.is_array()) throw ConfigError("config.presets: expected an array");
    cfg.presets.clear();
    std::set<std::string> names;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      cfg.presets.push_back(read_preset(ps[i], i));
      if (!names.insert(cfg.presets.back().name).second) {
        throw ConfigError("presets[" + std::to_string(i) + "].name: duplicate '" +
                          cfg.presets.back().name + "'");
      }
    }
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& cfg) {
  json presets = json::array();
  for (const auto& p : cfg.presets) presets.push_back(preset_json(p));
  return {{"version", cfg.version},
          {"world", world_json(cfg.world)},
          {"train", train_json(cfg.optim, cfg.k_identity)},
          {"loss", loss_json(cfg.loss)},
          {"eval", eval_json(cfg.eval)},
          {"presets", presets}};
}

RunSpec resolve_run(const ExperimentConfig& cfg, const std::string& preset_name,
                    std::uint64_t seed) {
  const ExperimentPreset& preset = cfg.preset(preset_name);
  json base = config_to_json(cfg);
  base.erase("presets");
  base.merge_patch(preset.overrides);
  const ExperimentConfig merged = config_from_json(base);

  RunSpec spec;
  spec.preset = preset;
  spec.seed = seed;
  spec.world = merged.world;
  spec.world.seed = derive_key(merged.world.seed, seed);
  spec.optim = merged.optim;
  spec.optim.seed = seed;
  spec.k_identity = merged.k_identity;
  spec.loss = merged.loss;
  spec.loss.weight_scheme = preset.weight_scheme;
  spec.eval = merged.eval;
  return spec;
}

json run_spec_to_json(const RunSpec& s) {
  json j{{"preset", preset_json(s.preset)},
         {"seed", s.seed},
         {"world", world_json(s.world)},
         {"train", train_json(s.optim, s.k_identity)},
         {"loss", loss_json(s.loss)},
         {"eval", eval_json(s.eval)}};
  j["loss"]["weight_scheme"] = to_string(s.loss.weight_scheme);
  return j;
}

std::string config_hash(const RunSpec& spec) {
  const std::string text = run_spec_to_json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SamplingPlan build_plan(const ExperimentPreset& preset, const SyntheticWorld& world,
                        std::size_t k_identity) {
  auto kind = [](const FactorSetting& f) {
    return f.mode == FactorMode::Distinctive ? FactorKind::Distinctive : FactorKind::Invariant;
  };
  std::vector<FactorSpec> specs;
  specs.push_back(world.identity_factor(FactorKind::Distinctive, k_identity));
  specs.push_back(world.shift_factor(kind(preset.shift), preset.shift.k));
  specs.push_back(world.modality_factor(FactorKind::Invariant, preset.modalities.size(),
                                        preset.modalities));
  specs.push_back(world.reversal_factor(kind(preset.reversal), preset.reversal.k,
                                        preset.reversal.mode != FactorMode::Off));
  specs.push_back(world.augment_factor(kind(preset.augment), preset.augment.k));
  return SamplingPlan(std::move(specs));
}

Metrics evaluate(const EncoderParams& params, const SyntheticWorld& world,
                 const EvalConfig& eval) {
  const auto& cfg = world.config();
  if (eval.gallery_shift >= cfg.n_shifts) throw ConfigError("eval.gallery_shift out of range");
  if (eval.query_draw >= cfg.n_aug_draws) throw ConfigError("eval.query_draw out of range");
  if (cfg.n_shifts < 2) throw ConfigError("evaluation needs at least two shifts");

  auto embed = [&](const std::vector<Latent>& latents) {
    std::vector<SyntheticView> views;
    views.reserve(latents.size());
    for (const auto& l : latents) views.push_back(world.view(l));
    return encode_views(params, views).embeddings;
  };
  auto labeled = [&](const std::vector<Latent>& latents) {
    LabeledEmbeddings le{embed(latents), {}};
    for (const auto& l : latents) le.labels.push_back(static_cast<int>(l.identity));
    return le;
  };

  std::vector<Latent> gallery, queries, knn_train, knn_test;
  for (std::size_t i = 0; i < cfg.n_identities; ++i) {
    for (std::size_t s = 0; s < cfg.n_shifts; ++s) {
      if (s == eval.gallery_shift) {
        gallery.push_back({i, s, 0, Modality::Visual, 0});
      } else {
        queries.push_back({i, s, 0, Modality::Visual, eval.query_draw});
      }
      const bool in_train = std::find(eval.knn_train_shifts.begin(), eval.knn_train_shifts.end(),
                                      s) != eval.knn_train_shifts.end();
      if (in_train) {
        knn_train.push_back({i, s, 0, Modality::Visual, 0});
      } else {
        knn_test.push_back({i, s, 0, Modality::Visual, eval.query_draw});
      }
    }
  }
  const LabeledEmbeddings g = labeled(gallery), q = labeled(queries);
  Metrics m;
  m.recall_at_1 = recall_at_k(q, g, 1);
  m.recall_at_5 = recall_at_k(q, g, std::min<std::size_t>(5, g.size()));
  if (!knn_train.empty()) {
    const LabeledEmbeddings tr = labeled(knn_train), te = labeled(knn_test);
    m.knn_accuracy = knn_classify(tr, te, std::min(eval.knn_k, tr.size()));
  }
  m.dispersion = dispersion_across_shifts(params, world,
                                          std::min(eval.dispersion_videos, cfg.n_identities),
                                          std::min(eval.dispersion_shifts, cfg.n_shifts));
  return m;
}

RunOutput run_experiment(const RunSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticWorld world(spec.world);
  const SamplingPlan plan = build_plan(spec.preset, world, spec.k_identity);
  RunOutput out;
  out.train = train(world, plan, spec.loss, spec.optim);
  out.record.preset = spec.preset.name;
  out.record.seed = spec.seed;
  out.record.initial_loss = out.train.initial_loss;
  out.record.final_loss =
      out.train.history.empty() ? out.train.initial_loss : out.train.history.back();
  out.record.metrics = evaluate(out.train.params, world, spec.eval);
  out.record.config_hash = config_hash(spec);
  out.record.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string csv_header(bool with_wall_time) {
  std::string h = "preset,seed,initial_loss,final_loss,recall_at_1,recall_at_5,knn_accuracy,dispersion";
  if (with_wall_time) h += ",wall_time_s";
  return h + ",config_hash,error";
}

std::string csv_row(const RunRecord& r, bool with_wall_time) {
  std::string row = csv_escape(r.preset) + "," + std::to_string(r.seed);
  if (r.error.empty()) {
    row += "," + fmt(r.initial_loss) + "," + fmt(r.final_loss) + "," +
           fmt(r.metrics.recall_at_1) + "," + fmt(r.metrics.recall_at_5) + "," +
           fmt(r.metrics.knn_accuracy) + "," + fmt(r.metrics.dispersion);
  } else {
    row += ",,,,,,";
  }
  if (with_wall_time) row += "," + fmt(r.wall_time_s);
  return row + "," + r.config_hash + "," + csv_escape(r.error);
}

void write_run_outputs(const std::filesystem::path& dir, const RunSpec& spec,
                       const RunOutput& out) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(dir / name, mode | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    return f;
  };
  {
    auto f = open("params.bin", std::ios::out | std::ios::binary);
    write_params(f, out.train.params);
  }
  {
    auto f = open("metrics.csv");
    f << csv_header(false) << '\n' << csv_row(out.record, false) << '\n';
  }
  {
    auto f = open("history.csv");
    f << "epoch,loss\n";
    for (std::size_t e = 0; e < out.train.history.size(); ++e) {
      f << e + 1 << ',' << fmt(out.train.history[e]) << '\n';
    }
  }
  {
    auto f = open("config.json");
    f << run_spec_to_json(spec).dump(2) << '\n';
  }
}

std::vector<RunRecord> run_sweep(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& presets,
                                 const std::vector<std::uint64_t>& seeds, unsigned threads) {
  for (const auto& p : presets) cfg.preset(p);  // unknown names fail before any work
  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  for (const auto& p : presets)
    for (auto s : seeds) jobs.emplace_back(p, s);

  std::vector<RunRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& [name, seed] = jobs[i];
      RunRecord rec;
      rec.preset = name;
      rec.seed = seed;
      try {
        const RunSpec spec = resolve_run(cfg, name, seed);
        rec.config_hash = config_hash(spec);
        rec = run_experiment(spec).record;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      records[i] = std::move(rec);
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

unsigned threads_from_env() {
  const char* v = std::getenv("GDT_THREADS");
  if (!v) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n >= 1 ? static_cast<unsigned>(n) : 1u;
}

}  // namespace gdt

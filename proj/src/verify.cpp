#include "gdt/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gdt/batch_sampler.hpp"
#include "gdt/errors.hpp"
#include "gdt/gdt_loss.hpp"
#include "gdt/rng.hpp"
#include "gdt/synthetic_world.hpp"
#include "gdt/variance_lab.hpp"

namespace gdt {

using nlohmann::json;

bool SuiteResult::passed() const { return failures() == 0; }

std::size_t SuiteResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.passed; }));
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"admissibility", "counting", "factorwise",
                                              "variance",      "loss",     "gradient"};
  return names;
}

// ---------------------------------------------------------------------------
// contrast table text form

ContrastTable read_contrast_table(std::istream& is) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    for (std::string tok; ls >> tok;) tokens.push_back(tok);
  }
  if (tokens.empty()) throw DomainError("contrast table: empty input");
  std::size_t n = 0;
  try {
    std::size_t used = 0;
    n = std::stoul(tokens[0], &used);
    if (used != tokens[0].size()) throw std::invalid_argument("size");
  } catch (const std::exception&) {
    throw DomainError("contrast table: bad size '" + tokens[0] + "'");
  }
  if (tokens.size() != 1 + n * n) {
    throw DomainError("contrast table: expected " + std::to_string(n * n) + " entries, got " +
                      std::to_string(tokens.size() - 1));
  }
  ContrastTable t(n);
  for (std::size_t i = 0; i < n * n; ++i) {
    const auto& tok = tokens[1 + i];
    if (tok != "0" && tok != "1") throw DomainError("contrast table: entry '" + tok + "' is not 0/1");
    t.entries[i] = tok == "1" ? 1 : 0;
  }
  return t;
}

ContrastTable load_contrast_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read contrast table '" + path.string() + "'");
  return read_contrast_table(in);
}

void write_contrast_table(std::ostream& os, const ContrastTable& table) {
  os << table.n << '\n';
  for (std::size_t i = 0; i < table.n; ++i) {
    for (std::size_t j = 0; j < table.n; ++j) os << (j ? " " : "") << int(table.at(i, j));
    os << '\n';
  }
}

double nt_xent_reference(const Eigen::MatrixXd& emb, double temperature) {
  const Eigen::Index rows = emb.rows();
  if (rows % 2 != 0 || rows == 0) throw DomainError("nt_xent_reference needs 2N rows");
  double total = 0.0;
  for (Eigen::Index a = 0; a < rows; ++a) {
    const Eigen::Index partner = a ^ 1;
    std::vector<double> logits;
    double pos = 0.0;
    for (Eigen::Index b = 0; b < rows; ++b) {
      if (b == a) continue;
      const double s = emb.row(a).dot(emb.row(b)) / temperature;
      logits.push_back(s);
      if (b == partner) pos = s;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double s : logits) z += std::exp(s - mx);
    total += -(pos - mx - std::log(z));
  }
  return total;
}

namespace {

using Clock = std::chrono::steady_clock;

CheckResult check(std::string name, bool ok, json expected, json observed,
                  std::string detail = {}) {
  return {std::move(name), ok, std::move(expected), std::move(observed), std::move(detail)};
}

json witness_json(const AdmissibilityReport& r) {
  return {{"admissible", r.admissible}, {"violation", to_string(r.kind)}, {"witness", r.witness}};
}

// ---------------------------------------------------------------------------
// admissibility

std::vector<FactorSpec> random_specs(CounterRng& rng, std::size_t max_m, std::size_t max_values) {
  const std::size_t m = 1 + rng.uniform_index(max_m);
  std::vector<FactorSpec> specs;
  for (std::size_t i = 0; i < m; ++i) {
    const auto kind = rng.uniform_index(2) ? FactorKind::Distinctive : FactorKind::Invariant;
    specs.push_back(
        make_indexed_factor("f" + std::to_string(i), kind, 1 + rng.uniform_index(max_values), 1));
  }
  return specs;
}

// Full space when small, otherwise a random subset of it: a restriction of an
// equivalence relation is still one.
ContrastTable random_product_table(CounterRng& rng, std::size_t max_size) {
  const auto specs = random_specs(rng, 5, 4);
  auto domain = enumerate_space(specs);
  if (domain.size() > max_size) {
    for (std::size_t i = 0; i < max_size; ++i) {
      std::swap(domain[i], domain[i + rng.uniform_index(domain.size() - i)]);
    }
    domain.resize(max_size);
  }
  return build_contrast_table(specs, std::move(domain));
}

// First violation by collecting every violation and taking the smallest, in
// (kind, witness) order.
AdmissibilityReport reference_first_violation(const ContrastTable& t) {
  const std::size_t n = t.n;
  for (std::size_t x = 0; x < n; ++x)
    if (!t.at(x, x)) return {false, Violation::Reflexivity, {x}};
  std::vector<std::vector<std::size_t>> found;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      if (t.at(x, y) != t.at(y, x)) found.push_back({x, y});
  if (!found.empty()) return {false, Violation::Symmetry, *std::min_element(found.begin(), found.end())};
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t z = 0; z < n; ++z) {
      if (t.at(x, z)) continue;
      for (std::size_t y = 0; y < n; ++y)
        if (t.at(x, y) && t.at(y, z)) found.push_back({x, y, z});
    }
  if (!found.empty()) {
    return {false, Violation::Transitivity, *std::min_element(found.begin(), found.end())};
  }
  return {};
}

bool witness_is_genuine(const ContrastTable& t, const AdmissibilityReport& r) {
  const auto& w = r.witness;
  for (auto i : w)
    if (i >= t.n) return false;
  switch (r.kind) {
    case Violation::Reflexivity: return w.size() == 1 && !t.at(w[0], w[0]);
    case Violation::Symmetry: return w.size() == 2 && t.at(w[0], w[1]) != t.at(w[1], w[0]);
    case Violation::Transitivity:
      return w.size() == 3 && t.at(w[0], w[1]) && t.at(w[1], w[2]) && !t.at(w[0], w[2]);
    case Violation::None: return false;
  }
  return false;
}

// Breaks an admissible table in one of three ways; returns false when the
// table has no room for the requested kind (e.g. transitivity on one class).
bool inject(ContrastTable& t, Violation kind, CounterRng& rng) {
  const std::size_t n = t.n;
  if (kind == Violation::Reflexivity) {
    const std::size_t x = rng.uniform_index(n);
    t.set(x, x, 0);
    return true;
  }
  if (n < 2) return false;
  if (kind == Violation::Symmetry) {
    std::size_t x = rng.uniform_index(n), y = rng.uniform_index(n - 1);
    if (y >= x) ++y;
    t.set(x, y, !t.at(x, y));
    return true;
  }
  // merge two classes through a single symmetric edge y-z, leaving x ~ y and
  // x !~ z for some x; needs a class with at least two members
  std::vector<std::array<std::size_t, 3>> options;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) {
      if (x == y || !t.at(x, y)) continue;
      for (std::size_t z = 0; z < n; ++z)
        if (!t.at(y, z)) options.push_back({x, y, z});
    }
  if (options.empty()) return false;
  const auto [x, y, z] = options[rng.uniform_index(options.size())];
  (void)x;
  t.set(y, z, 1);
  t.set(z, y, 1);
  return true;
}

SuiteResult suite_admissibility(const VerifyOptions& o) {
  SuiteResult s{"admissibility", {}, json::object(), 0.0};
  CounterRng rng(derive_key(o.seed, 0xAD31));

  std::size_t passed = 0, largest = 0;
  json first_failure;
  for (std::size_t i = 0; i < o.random_tables; ++i) {
    const auto table = random_product_table(rng, 96);
    largest = std::max(largest, table.n);
    const auto r = verify_admissibility(table);
    if (r.admissible) {
      ++passed;
    } else if (first_failure.is_null()) {
      first_failure = witness_json(r);
    }
  }
  s.checks.push_back(check("random_product_tables_admissible", passed == o.random_tables,
                           {{"admissible", o.random_tables}},
                           {{"admissible", passed}, {"largest_table", largest},
                            {"first_failure", first_failure}}));

  const std::array<Violation, 3> kinds{Violation::Reflexivity, Violation::Symmetry,
                                       Violation::Transitivity};
  std::size_t caught = 0, attempted = 0;
  json misses = json::array();
  for (std::size_t i = 0; attempted < o.injected_violations; ++i) {
    auto table = random_product_table(rng, 48);
    const Violation kind = kinds[i % kinds.size()];
    if (!inject(table, kind, rng)) continue;
    ++attempted;
    const auto got = verify_admissibility(table);
    const auto want = reference_first_violation(table);
    const bool ok = !got.admissible && got.kind == want.kind && got.witness == want.witness &&
                    witness_is_genuine(table, got);
    if (ok) {
      ++caught;
    } else if (misses.size() < 5) {
      misses.push_back({{"injected", to_string(kind)}, {"expected", witness_json(want)},
                        {"observed", witness_json(got)}});
    }
  }
  s.checks.push_back(check("injected_violations_caught", caught == attempted,
                           {{"caught", attempted}}, {{"caught", caught}, {"misses", misses}}));

  if (o.table_path) {
    const auto table = load_contrast_table(*o.table_path);
    const auto r = verify_admissibility(table);
    std::string detail;
    if (!r.admissible) {
      detail = to_string(r.kind) + " violated at (";
      for (std::size_t i = 0; i < r.witness.size(); ++i) {
        detail += (i ? ", " : "") + std::to_string(r.witness[i]);
      }
      detail += ")";
    }
    s.checks.push_back(check("table_file_admissible", r.admissible,
                             {{"admissible", true}, {"path", o.table_path->string()}},
                             witness_json(r), detail));
  }
  return s;
}

// ---------------------------------------------------------------------------
// counting

SamplingPlan random_plan(CounterRng& rng) {
  const std::size_t m = 1 + rng.uniform_index(4);
  std::vector<FactorSpec> specs;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t k = 1 + rng.uniform_index(3);
    const auto kind = rng.uniform_index(2) ? FactorKind::Distinctive : FactorKind::Invariant;
    specs.push_back(make_indexed_factor("f" + std::to_string(i), kind, k + rng.uniform_index(3), k));
  }
  return SamplingPlan(std::move(specs));
}

json counts_json(const PairCounts& c) {
  return {{"total_positive", c.total_positive},
          {"trivial_positive", c.trivial_positive},
          {"nontrivial_positive", c.nontrivial_positive},
          {"negatives_per_anchor", c.negatives_per_anchor}};
}

SuiteResult suite_counting(const VerifyOptions& o) {
  SuiteResult s{"counting", {}, json::object(), 0.0};

  // SimCLR: B = 8 views of 4 samples, two augmentations each
  const SamplingPlan simclr({make_indexed_factor("identity", FactorKind::Distinctive, 16, 4),
                             make_indexed_factor("augment", FactorKind::Invariant, 16, 2)});
  const PairCounts expected{16, 8, 8, 6};
  const auto predicted = predict_pair_counts(simclr);
  const auto counted = brute_force_pair_counts(sample_batch(simclr, o.seed));
  s.checks.push_back(check("simclr_b8", predicted == expected && counted == expected,
                           counts_json(expected),
                           {{"predicted", counts_json(predicted)}, {"counted", counts_json(counted)}}));

  CounterRng rng(derive_key(o.seed, 0xC0C0));
  std::size_t agree = 0, valid = 0, total = 0;
  json first_mismatch;
  for (std::size_t p = 0; p < o.random_plans; ++p) {
    const SamplingPlan plan = random_plan(rng);
    const auto want = predict_pair_counts(plan);
    for (std::size_t r = 0; r < o.seeds_per_plan; ++r) {
      const Batch batch = sample_batch(plan, derive_key(o.seed, {p, r}));
      ++total;
      if (validate_batch(batch).balanced) ++valid;
      PairCounts got;
      try {
        got = brute_force_pair_counts(batch);
      } catch (const InvariantViolation& e) {
        if (first_mismatch.is_null()) first_mismatch = {{"plan", p}, {"error", e.what()}};
        continue;
      }
      if (got == want) {
        ++agree;
      } else if (first_mismatch.is_null()) {
        first_mismatch = {{"plan", p}, {"predicted", counts_json(want)}, {"counted", counts_json(got)}};
      }
    }
  }
  s.checks.push_back(check("random_plans_counts_exact", agree == total, {{"agree", total}},
                           {{"agree", agree}, {"plans", o.random_plans},
                            {"first_mismatch", first_mismatch}}));
  s.checks.push_back(check("random_plans_balanced", valid == total, {{"balanced", total}},
                           {{"balanced", valid}}));
  return s;
}

// ---------------------------------------------------------------------------
// factorwise

SuiteResult suite_factorwise(const VerifyOptions& o) {
  SuiteResult s{"factorwise", {}, json::object(), 0.0};
  for (int m = 1; m <= o.factorwise_max_m; ++m) {
    const auto found = enumerate_factorwise_contrasts(m);
    std::vector<std::uint32_t> subsets;
    bool all_products = true;
    for (const auto& f : found) {
      if (f.subset) {
        subsets.push_back(*f.subset);
      } else {
        all_products = false;
      }
    }
    std::sort(subsets.begin(), subsets.end());
    const bool distinct = std::adjacent_find(subsets.begin(), subsets.end()) == subsets.end();
    const std::size_t want = std::size_t{1} << m;
    s.checks.push_back(check("m" + std::to_string(m) + "_subset_products",
                             found.size() == want && all_products && distinct,
                             {{"count", want}, {"all_subset_products", true}},
                             {{"count", found.size()}, {"all_subset_products", all_products},
                              {"subsets", subsets}}));
  }
  return s;
}

// ---------------------------------------------------------------------------
// variance

SuiteResult suite_variance(const VerifyOptions& o) {
  SuiteResult s{"variance", {}, json::object(), 0.0};
  json reports = json::array();
  for (std::size_t w = 0; w < o.variance_worlds; ++w) {
    const std::string tag = "world" + std::to_string(w + 1);
    const auto world =
        make_stratified_world(o.variance_n, o.variance_n, 1.5, derive_key(o.seed, {0x5741, w}));
    VarianceOptions vo;
    vo.gdt_mode = GdtSampling::Stratified;
    vo.threads = o.threads;
    const auto r = run_variance_experiment(world, o.variance_k, o.variance_k, o.variance_trials,
                                           derive_key(o.seed, {0x7641, w}), vo);
    reports.push_back(json::parse(variance_report_json(r, -1)));

    const double dg = std::abs(r.gdt.mean - r.exact_L), dn = std::abs(r.naive.mean - r.exact_L);
    s.checks.push_back(check(tag + "_gdt_unbiased", dg <= 3.0 * r.gdt.standard_error,
                             {{"exact_L", r.exact_L}, {"max_abs_dev", 3.0 * r.gdt.standard_error}},
                             {{"mean", r.gdt.mean}, {"abs_dev", dg}}));
    s.checks.push_back(check(tag + "_naive_unbiased", dn <= 3.0 * r.naive.standard_error,
                             {{"exact_L", r.exact_L}, {"max_abs_dev", 3.0 * r.naive.standard_error}},
                             {{"mean", r.naive.mean}, {"abs_dev", dn}}));

    const double rel = std::abs(r.gdt_fixed.variance - r.predicted_var_gdt) / r.predicted_var_gdt;
    s.checks.push_back(check(tag + "_gdt_variance_closed_form", rel <= 0.05,
                             {{"variance", r.predicted_var_gdt}, {"max_rel_err", 0.05}},
                             {{"variance", r.gdt_fixed.variance}, {"rel_err", rel}}));

    // compared with the distinctive values held fixed, the setting the
    // closed forms describe; redrawing them adds the spread of the strata
    // means across draws to both estimators, reported for reference
    const bool strict = r.between_spread > 0.0;
    const bool ordered = strict ? r.naive_fixed.variance > r.gdt_fixed.variance
                                : r.naive_fixed.variance >= r.gdt_fixed.variance;
    s.checks.push_back(check(tag + "_naive_not_better", ordered,
                             {{"relation", strict ? "naive > gdt" : "naive >= gdt"},
                              {"between_spread", r.between_spread}},
                             {{"naive", r.naive_fixed.variance},
                              {"gdt", r.gdt_fixed.variance},
                              {"redrawn", {{"naive", r.naive.variance}, {"gdt", r.gdt.variance}}}}));

    s.checks.push_back(check(tag + "_naive_form_reported", !r.naive_form_matched.empty(),
                             {{"forms", {"k2", "k4", "neither"}}},
                             {{"matched", r.naive_form_matched},
                              {"rel_err_k2", r.rel_err_naive_k2},
                              {"rel_err_k4", r.rel_err_naive_k4}}));
  }
  s.extra["reports"] = reports;
  return s;
}

// ---------------------------------------------------------------------------
// loss

SuiteResult suite_loss(const VerifyOptions& o) {
  SuiteResult s{"loss", {}, json::object(), 0.0};
  CounterRng rng(derive_key(o.seed, 0x5C1));
  double worst = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < o.simclr_draws; ++i) {
    const std::size_t pairs = 1 + rng.uniform_index(8);  // K = 2 * pairs <= 16
    const std::size_t d = 1 + rng.uniform_index(8);
    const SamplingPlan plan({make_indexed_factor("identity", FactorKind::Distinctive, 20, pairs),
                             make_indexed_factor("augment", FactorKind::Invariant, 8, 2)});
    const Batch batch = sample_batch(plan, derive_key(o.seed, {0x5C1, i}));
    Eigen::MatrixXd emb(static_cast<Eigen::Index>(2 * pairs), static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < emb.rows(); ++r) {
      for (Eigen::Index c = 0; c < emb.cols(); ++c) emb(r, c) = rng.normal();
      emb.row(r).normalize();
    }
    LossConfig cfg{0.07, WeightScheme::SimClr, true, Reduction::Sum};
    const double got = gdt_nce_loss(emb, build_pair_mask(batch, cfg), cfg);
    const double want = nt_xent_reference(emb, 0.07);
    const double err = std::abs(got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, err);
    if (err <= 1e-10) ++ok;
  }
  s.checks.push_back(check("simclr_matches_nt_xent", ok == o.simclr_draws,
                           {{"draws", o.simclr_draws}, {"max_err", 1e-10}},
                           {{"matching", ok}, {"worst_err", worst}}));
  return s;
}

// ---------------------------------------------------------------------------
// gradient

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

struct LossInstance {
  Batch batch;
  PairMask mask;
  LossConfig cfg;
};

LossInstance random_loss_instance(CounterRng& rng, std::uint64_t key) {
  const std::size_t ki = 1 + rng.uniform_index(3);
  std::vector<FactorSpec> specs{
      make_indexed_factor("identity", FactorKind::Distinctive, 6, 1 + rng.uniform_index(3)),
      FactorSpec{kModalityFactor, FactorKind::Invariant, {"v", "a"}, 1 + rng.uniform_index(2)},
      make_indexed_factor("augment", FactorKind::Invariant, 4, ki)};
  LossConfig cfg;
  cfg.temperature = 0.07;
  const auto scheme = rng.uniform_index(3);
  cfg.weight_scheme = scheme == 0   ? WeightScheme::SimClr
                      : scheme == 1 ? WeightScheme::CrossModal
                                    : WeightScheme::CrossModalStrict;
  cfg.reduction = rng.uniform_index(2) ? Reduction::Mean : Reduction::Sum;
  if (cfg.weight_scheme != WeightScheme::SimClr) specs[1].k = 2;
  if (cfg.weight_scheme == WeightScheme::SimClr && specs[1].k * ki == 1) specs[2].k = 2;
  SamplingPlan plan(std::move(specs));
  Batch batch = sample_batch(plan, key);
  PairMask mask = build_pair_mask(batch, cfg);
  return {std::move(batch), std::move(mask), cfg};
}

SuiteResult suite_gradient(const VerifyOptions& o) {
  SuiteResult s{"gradient", {}, json::object(), 0.0};
  const double h = o.fd_step;
  CounterRng rng(derive_key(o.seed, 0x96AD));

  double worst = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < o.loss_grad_instances; ++i) {
    const auto inst = random_loss_instance(rng, derive_key(o.seed, {0x96AD, i}));
    const auto k = static_cast<Eigen::Index>(inst.batch.size());
    const auto d = static_cast<Eigen::Index>(2 + rng.uniform_index(5));
    Eigen::MatrixXd emb(k, d);
    for (Eigen::Index r = 0; r < k; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) emb(r, c) = rng.normal();
      emb.row(r) /= emb.row(r).norm() * (1.0 + rng.uniform01());
    }
    const Eigen::MatrixXd grad = gdt_nce_grad(emb, inst.mask, inst.cfg);
    Eigen::MatrixXd fd(k, d);
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c < d; ++c) {
        Eigen::MatrixXd p = emb, m = emb;
        p(r, c) += h;
        m(r, c) -= h;
        fd(r, c) = (gdt_nce_loss(p, inst.mask, inst.cfg) - gdt_nce_loss(m, inst.mask, inst.cfg)) /
                   (2.0 * h);
      }
    const double err = rel_error(grad.reshaped(), fd.reshaped());
    worst = std::max(worst, err);
    if (err < 1e-6) ++ok;
  }
  s.checks.push_back(check("loss_embedding_gradient", ok == o.loss_grad_instances,
                           {{"instances", o.loss_grad_instances}, {"max_rel_err", 1e-6}},
                           {{"passing", ok}, {"worst_rel_err", worst}}));

  worst = 0.0;
  ok = 0;
  std::size_t redrawn = 0;
  for (std::size_t i = 0, attempt = 0; i < o.encoder_grad_instances; ++attempt) {
    WorldConfig wc;
    wc.n_identities = 8;
    wc.n_shifts = 3;
    wc.n_aug_draws = 4;
    wc.obs_dim = 10;
    wc.id_dim = 3;
    wc.shift_dim = 2;
    wc.rev_dim = 2;
    wc.private_dim = 2;
    wc.seed = derive_key(o.seed, {0xE7C, attempt});
    const SyntheticWorld world(wc);
    const bool cross = rng.uniform_index(2) == 1;
    std::vector<FactorSpec> specs{
        world.identity_factor(FactorKind::Distinctive, 2 + rng.uniform_index(2)),
        world.shift_factor(rng.uniform_index(2) ? FactorKind::Distinctive : FactorKind::Invariant,
                           1 + rng.uniform_index(2)),
        world.modality_factor(FactorKind::Invariant, cross ? 2 : 1,
                              cross ? std::vector<Modality>{Modality::Visual, Modality::Text}
                                    : std::vector<Modality>{Modality::Audio}),
        world.augment_factor(FactorKind::Invariant, cross ? 1 : 2)};
    const SamplingPlan plan(std::move(specs));
    const Batch batch = sample_batch(plan, derive_key(o.seed, {0xE7D, attempt}));
    LossConfig cfg{0.07, cross ? WeightScheme::CrossModal : WeightScheme::SimClr, true,
                   Reduction::Mean};
    const PairMask mask = build_pair_mask(batch, cfg);
    const auto views = materialize(world, ViewResolver(plan, wc), batch);
    EncoderParams params = init_encoder(wc.obs_dim, 5, 4, derive_key(o.seed, {0xE7E, attempt}));

    const auto enc = encode_views(params, views);
    const auto lg = gdt_nce_loss_and_grad(enc.embeddings, mask, cfg);
    // a saturated softmax leaves a gradient below what differences of the
    // loss can resolve; such instances say nothing about the backward pass
    if (lg.loss < 1e-3) {
      ++redrawn;
      continue;
    }
    ++i;
    const Eigen::VectorXd grad = encoder_backward(params, enc.cache, lg.grad).flatten();
    const Eigen::VectorXd theta = params.flatten();
    Eigen::VectorXd fd(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      Eigen::VectorXd t = theta;
      t(j) += h;
      params.assign(t);
      const double lp = gdt_nce_loss(encode_views(params, views).embeddings, mask, cfg);
      t(j) = theta(j) - h;
      params.assign(t);
      const double lm = gdt_nce_loss(encode_views(params, views).embeddings, mask, cfg);
      fd(j) = (lp - lm) / (2.0 * h);
    }
    const double err = rel_error(grad, fd);
    worst = std::max(worst, err);
    if (err < 1e-5) ++ok;
  }
  s.checks.push_back(check("encoder_parameter_gradient", ok == o.encoder_grad_instances,
                           {{"instances", o.encoder_grad_instances}, {"max_rel_err", 1e-5}},
                           {{"passing", ok}, {"worst_rel_err", worst}, {"saturated_redrawn", redrawn}}));
  return s;
}

}  // namespace

SuiteResult run_suite(const std::string& name, const VerifyOptions& opts) {
  const auto t0 = Clock::now();
  SuiteResult r;
  if (name == "admissibility") {
    r = suite_admissibility(opts);
  } else if (name == "counting") {
    r = suite_counting(opts);
  } else if (name == "factorwise") {
    r = suite_factorwise(opts);
  } else if (name == "variance") {
    r = suite_variance(opts);
  } else if (name == "loss") {
    r = suite_loss(opts);
  } else if (name == "gradient") {
    r = suite_gradient(opts);
  } else {
    throw UsageError("unknown suite '" + name + "'");
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

std::vector<SuiteResult> run_verify(const std::optional<std::string>& only,
                                    const VerifyOptions& opts) {
  if (only) return {run_suite(*only, opts)};
  std::vector<SuiteResult> out;
  for (const auto& name : suite_names()) out.push_back(run_suite(name, opts));
  return out;
}

json verify_report_json(const std::vector<SuiteResult>& suites) {
  json js = json::array();
  bool all = true;
  for (const auto& s : suites) {
    json checks = json::array();
    for (const auto& c : s.checks) {
      json jc{{"name", c.name}, {"passed", c.passed}, {"expected", c.expected},
              {"observed", c.observed}};
      if (!c.detail.empty()) jc["detail"] = c.detail;
      checks.push_back(std::move(jc));
    }
    json jsuite{{"name", s.name}, {"passed", s.passed()}, {"seconds", s.seconds},
                {"checks", checks}};
    if (!s.extra.empty()) jsuite["extra"] = s.extra;
    js.push_back(std::move(jsuite));
    all = all && s.passed();
  }
  return {{"passed", all}, {"suites", js}};
}

}  // namespace gdt

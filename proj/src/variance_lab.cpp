#include "gdt/variance_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"

namespace gdt {

namespace {

constexpr std::uint64_t kWorldTag = 0x776F726C64ULL;
constexpr std::uint64_t kDistTag = 0xD157ULL;
constexpr std::uint64_t kInvTag = 0x1A7ULL;
constexpr std::uint64_t kPairTag = 0x9A15ULL;
constexpr std::uint64_t kStrataTag = 0x5752ULL;

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k,
                                                  CounterRng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.uniform_index(n - i)]);
  }
  pool.resize(k);
  return pool;
}

// Calls fn(subset) for every k-subset of 0..n-1 in lexicographic order.
template <class Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k > n) return;
  for (;;) {
    fn(static_cast<const std::vector<std::size_t>&>(idx));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void check_sizes(const FiniteLossWorld& world, std::size_t k_inv, std::size_t k_dist) {
  if (k_inv == 0 || k_dist == 0) throw DomainError("K_I and K_V must be positive");
  if (k_inv > world.n_inv) {
    throw DomainError("K_I = " + std::to_string(k_inv) + " exceeds invariant space size " +
                      std::to_string(world.n_inv));
  }
  if (k_dist > world.n_dist) {
    throw DomainError("K_V = " + std::to_string(k_dist) + " exceeds distinctive space size " +
                      std::to_string(world.n_dist));
  }
}

void check_strata(const FiniteLossWorld& world, const std::vector<std::size_t>& strata) {
  if (strata.empty()) throw DomainError("empty distinctive sample");
  std::vector<std::size_t> sorted = strata;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DomainError("distinctive sample contains duplicate values");
  }
  if (sorted.back() >= world.n_dist) throw DomainError("distinctive value out of range");
}

double reuse_average(const FiniteLossWorld& w, const std::vector<std::size_t>& inv,
                     const std::vector<std::size_t>& dist) {
  double sum = 0.0;
  for (auto j : dist)
    for (auto j2 : dist)
      for (auto i : inv)
        for (auto i2 : inv) sum += w.loss(i, j, i2, j2);
  return sum / static_cast<double>(inv.size() * inv.size() * dist.size() * dist.size());
}

double stratified_average(const FiniteLossWorld& w, std::size_t k_inv,
                          const std::vector<std::size_t>& dist, CounterRng& rng) {
  double sum = 0.0;
  for (auto j : dist) {
    for (auto j2 : dist) {
      for (std::size_t p = 0; p < k_inv * k_inv; ++p) {
        const auto i = rng.uniform_index(w.n_inv);
        const auto i2 = rng.uniform_index(w.n_inv);
        sum += w.loss(i, j, i2, j2);
      }
    }
  }
  return sum / static_cast<double>(k_inv * k_inv * dist.size() * dist.size());
}

}  // namespace

void FiniteLossWorld::validate() const {
  if (n_inv < 2 || n_dist < 2) {
    throw DomainError("world needs at least 2 invariant and 2 distinctive values");
  }
  if (table.size() != n_samples() * n_samples()) throw DomainError("loss table incomplete");
  for (double v : table) {
    if (!std::isfinite(v)) throw DomainError("loss table has a non-finite entry");
  }
}

FiniteLossWorld tabulate_world(std::size_t n_inv, std::size_t n_dist, const PairLossFn& fn,
                               std::string description) {
  FiniteLossWorld w{n_inv, n_dist, {}, std::move(description)};
  const std::size_t n = w.n_samples();
  w.table.resize(n * n);
  for (std::size_t v = 0; v < n_dist; ++v)
    for (std::size_t i = 0; i < n_inv; ++i)
      for (std::size_t v2 = 0; v2 < n_dist; ++v2)
        for (std::size_t i2 = 0; i2 < n_inv; ++i2)
          w.table[w.sample(i, v) * n + w.sample(i2, v2)] = fn(i, v, i2, v2);
  w.validate();
  return w;
}

FiniteLossWorld make_stratified_world(std::size_t n_inv, std::size_t n_dist,
                                      double noise_half_width, std::uint64_t seed) {
  CounterRng rng(derive_key(seed, kWorldTag));
  std::vector<double> stratum_mean(n_dist * n_dist);
  for (auto& m : stratum_mean) m = 3.0 + 4.0 * rng.uniform01();
  const std::size_t n = n_inv * n_dist;
  std::vector<double> noise(n * n);
  for (auto& e : noise) e = noise_half_width * (2.0 * rng.uniform01() - 1.0);

  FiniteLossWorld w = tabulate_world(
      n_inv, n_dist,
      [&](std::size_t i, std::size_t v, std::size_t i2, std::size_t v2) {
        return stratum_mean[v * n_dist + v2] + noise[(v * n_inv + i) * n + (v2 * n_inv + i2)];
      },
      "stratified(noise=" + std::to_string(noise_half_width) + ",seed=" +
          std::to_string(seed) + ")");

  // balance same-distinctive strata against cross strata
  const StratumStats all = [&] {
    std::vector<std::size_t> every(n_dist);
    std::iota(every.begin(), every.end(), std::size_t{0});
    return stratum_stats(w, every);
  }();
  double diag = 0.0, off = 0.0;
  for (std::size_t v = 0; v < n_dist; ++v)
    for (std::size_t v2 = 0; v2 < n_dist; ++v2)
      (v == v2 ? diag : off) += all.means(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(v2));
  diag /= static_cast<double>(n_dist);
  off /= static_cast<double>(n_dist * (n_dist - 1));
  const double shift = off - diag;
  for (std::size_t v = 0; v < n_dist; ++v)
    for (std::size_t i = 0; i < n_inv; ++i)
      for (std::size_t i2 = 0; i2 < n_inv; ++i2) w.table[w.sample(i, v) * n + w.sample(i2, v)] += shift;

  for (double x : w.table) {
    if (x < 0.0 || x > 10.0) throw DomainError("stratified world left [0, 10]");
  }
  return w;
}

FiniteLossWorld make_nce_world(std::size_t n_inv, std::size_t n_dist, std::size_t dim,
                               double temperature, std::uint64_t seed) {
  CounterRng rng(derive_key(seed, kWorldTag ^ 0x4E4345ULL));
  const auto d = static_cast<Eigen::Index>(dim);
  const std::size_t n = n_inv * n_dist;
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(n_dist), d);
  for (Eigen::Index r = 0; r < centers.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) centers(r, c) = rng.normal();
  Eigen::MatrixXd emb(static_cast<Eigen::Index>(n), d);
  for (std::size_t v = 0; v < n_dist; ++v) {
    for (std::size_t i = 0; i < n_inv; ++i) {
      const auto x = static_cast<Eigen::Index>(v * n_inv + i);
      for (Eigen::Index c = 0; c < d; ++c) {
        emb(x, c) = centers(static_cast<Eigen::Index>(v), c) + 0.6 * rng.normal();
      }
      emb.row(x).normalize();
    }
  }
  const Eigen::MatrixXd sim = emb * emb.transpose() / temperature;
  Eigen::VectorXd log_z(static_cast<Eigen::Index>(n));
  for (Eigen::Index x = 0; x < log_z.size(); ++x) {
    double mx = -1e300;
    for (Eigen::Index y = 0; y < log_z.size(); ++y)
      if (y != x) mx = std::max(mx, sim(x, y));
    double z = 0.0;
    for (Eigen::Index y = 0; y < log_z.size(); ++y)
      if (y != x) z += std::exp(sim(x, y) - mx);
    log_z(x) = mx + std::log(z);
  }
  return tabulate_world(
      n_inv, n_dist,
      [&](std::size_t i, std::size_t v, std::size_t i2, std::size_t v2) {
        const auto x = static_cast<Eigen::Index>(v * n_inv + i);
        const auto y = static_cast<Eigen::Index>(v2 * n_inv + i2);
        if (v != v2 || x == y) return 0.0;
        return -(sim(x, y) - log_z(x));
      },
      "nce(dim=" + std::to_string(dim) + ",seed=" + std::to_string(seed) + ")");
}

double exact_loss(const FiniteLossWorld& world) {
  world.validate();
  double sum = 0.0;
  for (double v : world.table) sum += v;
  return sum / static_cast<double>(world.table.size());
}

double StratumStats::between_spread() const {
  return (means.array() - grand_mean).square().sum();
}

StratumStats stratum_stats(const FiniteLossWorld& world,
                           const std::vector<std::size_t>& distinct_sample) {
  check_strata(world, distinct_sample);
  const auto kv = static_cast<Eigen::Index>(distinct_sample.size());
  StratumStats s{Eigen::MatrixXd::Zero(kv, kv), Eigen::MatrixXd::Zero(kv, kv), 0.0};
  const double count = static_cast<double>(world.n_inv * world.n_inv);
  for (Eigen::Index j = 0; j < kv; ++j) {
    for (Eigen::Index j2 = 0; j2 < kv; ++j2) {
      const std::size_t v = distinct_sample[static_cast<std::size_t>(j)];
      const std::size_t v2 = distinct_sample[static_cast<std::size_t>(j2)];
      double sum = 0.0;
      for (std::size_t i = 0; i < world.n_inv; ++i)
        for (std::size_t i2 = 0; i2 < world.n_inv; ++i2) sum += world.loss(i, v, i2, v2);
      const double mean = sum / count;
      double ss = 0.0;
      for (std::size_t i = 0; i < world.n_inv; ++i)
        for (std::size_t i2 = 0; i2 < world.n_inv; ++i2) {
          const double dlt = world.loss(i, v, i2, v2) - mean;
          ss += dlt * dlt;
        }
      s.means(j, j2) = mean;
      s.variances(j, j2) = ss / count;
    }
  }
  s.grand_mean = s.means.mean();
  return s;
}

std::string to_string(GdtSampling s) {
  return s == GdtSampling::Reuse ? "reuse" : "stratified";
}

double gdt_estimate_given(const FiniteLossWorld& world, std::size_t k_inv,
                          const std::vector<std::size_t>& strata, std::uint64_t seed,
                          GdtSampling mode) {
  check_strata(world, strata);
  check_sizes(world, k_inv, strata.size());
  if (mode == GdtSampling::Reuse) {
    CounterRng rng(derive_key(seed, kInvTag));
    return reuse_average(world, draw_without_replacement(world.n_inv, k_inv, rng), strata);
  }
  CounterRng rng(derive_key(seed, kPairTag));
  return stratified_average(world, k_inv, strata, rng);
}

double gdt_estimate(const FiniteLossWorld& world, std::size_t k_inv, std::size_t k_dist,
                    std::uint64_t seed, GdtSampling mode) {
  check_sizes(world, k_inv, k_dist);
  CounterRng rng(derive_key(seed, kDistTag));
  const auto dist = draw_without_replacement(world.n_dist, k_dist, rng);
  return gdt_estimate_given(world, k_inv, dist, seed, mode);
}

double naive_estimate(const FiniteLossWorld& world, std::size_t k_inv, std::size_t k_dist,
                      std::uint64_t seed,
                      const std::optional<std::vector<std::size_t>>& restrict_dist) {
  check_sizes(world, k_inv, k_dist);
  if (restrict_dist) check_strata(world, *restrict_dist);
  CounterRng rng(derive_key(seed, kPairTag ^ 0xAAULL));
  auto draw_dist = [&] {
    if (!restrict_dist) return static_cast<std::size_t>(rng.uniform_index(world.n_dist));
    return (*restrict_dist)[rng.uniform_index(restrict_dist->size())];
  };
  const std::size_t pairs = k_inv * k_inv * k_dist * k_dist;
  double sum = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = rng.uniform_index(world.n_inv);
    const std::size_t v = draw_dist();
    const std::size_t i2 = rng.uniform_index(world.n_inv);
    const std::size_t v2 = draw_dist();
    sum += world.loss(i, v, i2, v2);
  }
  return sum / static_cast<double>(pairs);
}

std::optional<Moments> reuse_exact_moments(const FiniteLossWorld& world, std::size_t k_inv,
                                           std::size_t k_dist,
                                           const std::optional<std::vector<std::size_t>>& strata,
                                           std::uint64_t max_evaluations) {
  check_sizes(world, k_inv, strata ? strata->size() : k_dist);
  const std::uint64_t inv_sets = binomial(world.n_inv, k_inv);
  const std::uint64_t dist_sets = strata ? 1 : binomial(world.n_dist, k_dist);
  const std::uint64_t per = k_inv * k_inv * k_dist * k_dist;
  if (inv_sets * dist_sets * per > max_evaluations) return std::nullopt;

  RunningStats acc;
  auto over_inv = [&](const std::vector<std::size_t>& dist) {
    for_each_combination(world.n_inv, k_inv, [&](const std::vector<std::size_t>& inv) {
      acc.push(reuse_average(world, inv, dist));
    });
  };
  if (strata) {
    check_strata(world, *strata);
    over_inv(*strata);
  } else {
    for_each_combination(world.n_dist, k_dist, over_inv);
  }
  // every subset is equally likely, so these are population moments
  return Moments{acc.mean, acc.n ? acc.m2 / static_cast<double>(acc.n) : 0.0};
}

void RunningStats::push(double x) {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

void RunningStats::merge(const RunningStats& o) {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double total = static_cast<double>(n + o.n);
  const double delta = o.mean - mean;
  mean += delta * static_cast<double>(o.n) / total;
  m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) / total;
  n += o.n;
}

double RunningStats::standard_error() const {
  return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
}

namespace {

EstimatorSummary summarize(const RunningStats& s) {
  return {s.mean, s.variance(), s.standard_error()};
}

struct ChunkStats {
  RunningStats gdt, naive, gdt_fixed, naive_fixed, reuse_fixed;
};

}  // namespace

VarianceReport run_variance_experiment(const FiniteLossWorld& world, std::size_t k_inv,
                                       std::size_t k_dist, std::uint64_t n_trials,
                                       std::uint64_t seed, const VarianceOptions& opts) {
  world.validate();
  check_sizes(world, k_inv, k_dist);
  if (n_trials < 1000) throw DomainError("variance experiments need at least 1000 trials");

  VarianceReport r;
  r.n_inv = world.n_inv;
  r.n_dist = world.n_dist;
  r.k_inv = k_inv;
  r.k_dist = k_dist;
  r.trial_count = n_trials;
  r.gdt_mode = opts.gdt_mode;
  if (opts.strata) {
    if (opts.strata->size() != k_dist) throw DomainError("strata size must equal K_V");
    r.strata = *opts.strata;
  } else {
    CounterRng rng(derive_key(seed, kStrataTag));
    r.strata = draw_without_replacement(world.n_dist, k_dist, rng);
  }

  r.exact_L = exact_loss(world);
  const StratumStats st = stratum_stats(world, r.strata);
  r.strata_L = st.grand_mean;
  r.between_spread = st.between_spread();

  const double kv = static_cast<double>(k_dist);
  const double ki = static_cast<double>(k_inv);
  const double sum_var = st.variances.sum();
  r.predicted_var_gdt = sum_var / (std::pow(kv, 4) * ki * ki);
  r.predicted_var_naive_k2 = sum_var / (kv * kv * ki * ki) + r.between_spread / (kv * kv);
  r.predicted_var_naive_k4 = (sum_var + r.between_spread) / (std::pow(kv, 4) * ki * ki);
  {
    double sq = 0.0;
    for (double v : world.table) sq += (v - r.exact_L) * (v - r.exact_L);
    r.predicted_var_naive_full = sq / static_cast<double>(world.table.size()) / (kv * kv * ki * ki);
  }
  {
    RunningStats avg;
    for_each_combination(world.n_dist, k_dist, [&](const std::vector<std::size_t>& s) {
      avg.push(stratum_stats(world, s).variances.sum() / (std::pow(kv, 4) * ki * ki));
    });
    r.predicted_var_gdt_avg = avg.mean;
  }

  constexpr std::uint64_t kChunk = 4096;
  const std::uint64_t n_chunks = (n_trials + kChunk - 1) / kChunk;
  std::vector<ChunkStats> chunks(n_chunks);
  auto run_chunk = [&](std::uint64_t c) {
    ChunkStats& cs = chunks[c];
    const std::uint64_t end = std::min(n_trials, (c + 1) * kChunk);
    for (std::uint64_t t = c * kChunk; t < end; ++t) {
      const std::uint64_t key = derive_key(seed, {t, 0x7472ULL});
      cs.gdt.push(gdt_estimate(world, k_inv, k_dist, derive_key(key, 1), opts.gdt_mode));
      cs.naive.push(naive_estimate(world, k_inv, k_dist, derive_key(key, 2)));
      cs.gdt_fixed.push(
          gdt_estimate_given(world, k_inv, r.strata, derive_key(key, 3), opts.gdt_mode));
      cs.naive_fixed.push(naive_estimate(world, k_inv, k_dist, derive_key(key, 4), r.strata));
      cs.reuse_fixed.push(
          gdt_estimate_given(world, k_inv, r.strata, derive_key(key, 5), GdtSampling::Reuse));
    }
  };
  const unsigned threads = std::max(1u, opts.threads);
  if (threads == 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::uint64_t c = w; c < n_chunks; c += threads) run_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  ChunkStats total;
  for (const auto& cs : chunks) {
    total.gdt.merge(cs.gdt);
    total.naive.merge(cs.naive);
    total.gdt_fixed.merge(cs.gdt_fixed);
    total.naive_fixed.merge(cs.naive_fixed);
    total.reuse_fixed.merge(cs.reuse_fixed);
  }
  r.gdt = summarize(total.gdt);
  r.naive = summarize(total.naive);
  r.gdt_fixed = summarize(total.gdt_fixed);
  r.naive_fixed = summarize(total.naive_fixed);
  r.reuse_fixed = summarize(total.reuse_fixed);

  auto rel = [](double observed, double predicted) {
    if (predicted == 0.0) return observed == 0.0 ? 0.0 : INFINITY;
    return std::abs(observed - predicted) / predicted;
  };
  r.rel_err_naive_k2 = rel(r.naive_fixed.variance, r.predicted_var_naive_k2);
  r.rel_err_naive_k4 = rel(r.naive_fixed.variance, r.predicted_var_naive_k4);
  const bool k2_ok = r.rel_err_naive_k2 <= opts.match_tolerance;
  const bool k4_ok = r.rel_err_naive_k4 <= opts.match_tolerance;
  if (k2_ok && k4_ok) {
    r.naive_form_matched = r.rel_err_naive_k2 < r.rel_err_naive_k4 ? "k2" : "k4";
  } else if (k2_ok) {
    r.naive_form_matched = "k2";
  } else if (k4_ok) {
    r.naive_form_matched = "k4";
  } else {
    r.naive_form_matched = "neither";
  }

  r.reuse_exact_fixed = reuse_exact_moments(world, k_inv, k_dist, r.strata);
  r.reuse_exact = reuse_exact_moments(world, k_inv, k_dist, std::nullopt);
  return r;
}

std::string variance_report_json(const VarianceReport& r, int indent) {
  using nlohmann::json;
  auto est = [](const EstimatorSummary& e) {
    return json{{"mean", e.mean}, {"variance", e.variance}, {"standard_error", e.standard_error}};
  };
  auto moments = [](const std::optional<Moments>& m) {
    return m ? json{{"mean", m->mean}, {"variance", m->variance}} : json(nullptr);
  };
  json j{
      {"n_inv", r.n_inv},
      {"n_dist", r.n_dist},
      {"k_inv", r.k_inv},
      {"k_dist", r.k_dist},
      {"trial_count", r.trial_count},
      {"gdt_mode", to_string(r.gdt_mode)},
      {"strata", r.strata},
      {"exact_L", r.exact_L},
      {"strata_L", r.strata_L},
      {"between_spread", r.between_spread},
      {"gdt", est(r.gdt)},
      {"naive", est(r.naive)},
      {"gdt_fixed", est(r.gdt_fixed)},
      {"naive_fixed", est(r.naive_fixed)},
      {"predicted_var_gdt", r.predicted_var_gdt},
      {"predicted_var_gdt_avg", r.predicted_var_gdt_avg},
      {"predicted_var_naive_k2", r.predicted_var_naive_k2},
      {"predicted_var_naive_k4", r.predicted_var_naive_k4},
      {"predicted_var_naive_full", r.predicted_var_naive_full},
      {"rel_err_naive_k2", r.rel_err_naive_k2},
      {"rel_err_naive_k4", r.rel_err_naive_k4},
      {"naive_form_matched", r.naive_form_matched},
      {"reuse_fixed", est(r.reuse_fixed)},
      {"reuse_exact_fixed", moments(r.reuse_exact_fixed)},
      {"reuse_exact", moments(r.reuse_exact)},
  };
  return j.dump(indent);
}

}  // namespace gdt

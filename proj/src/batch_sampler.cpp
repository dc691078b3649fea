#include "gdt/batch_sampler.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"

namespace gdt {

SamplingPlan::SamplingPlan(std::vector<FactorSpec> specs) : specs_(std::move(specs)) {
  for (const auto& s : specs_) {
    s.validate();
    if (s.k == 0) throw PlanError("factor '" + s.name + "' has K = 0");
    if (s.k > s.values.size()) {
      throw PlanError("factor '" + s.name + "' has K = " + std::to_string(s.k) +
                      " > |values| = " + std::to_string(s.values.size()) +
                      "; cannot sample without replacement");
    }
    k_ *= s.k;
    (s.kind == FactorKind::Invariant ? k_inv_ : k_dist_) *= s.k;
  }
}

int SamplingPlan::find(const std::string& name) const {
  for (std::size_t m = 0; m < specs_.size(); ++m) {
    if (specs_[m].name == name) return static_cast<int>(m);
  }
  return -1;
}

namespace {

constexpr std::uint64_t kBatchTag = 0x6264'7462'6174'6368ULL;

// Partial Fisher-Yates: the first k entries of a shuffled 0..n-1.
std::vector<FactorValue> sample_without_replacement(std::size_t n, std::size_t k,
                                                    CounterRng& rng) {
  std::vector<FactorValue> pool(n);
  std::iota(pool.begin(), pool.end(), FactorValue{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// Contrast without per-call validation; callers guarantee conformance.
inline bool contrast_fast(const std::vector<FactorSpec>& specs, const GDTransformation& a,
                          const GDTransformation& b) {
  for (std::size_t m = 0; m < specs.size(); ++m) {
    if (specs[m].kind == FactorKind::Distinctive && a.factors[m] != b.factors[m]) {
      return false;
    }
  }
  return true;
}

}  // namespace

Batch sample_batch(const SamplingPlan& plan, std::uint64_t seed) {
  const auto& specs = plan.specs();
  Batch batch{plan, {}, {}};
  batch.tree.reserve(specs.size());

  // Every node carries two keys: one for its full path, and one for the
  // distinctive values on its path only. Distinctive factors draw from the
  // latter, so nodes that differ only in invariant values draw the same
  // distinctive values. Without that, an invariant factor sampled before a
  // distinctive one would leave its branches with unrelated distinctive
  // values and positives would no longer come in groups of K_I.
  const std::uint64_t root = derive_key(seed, kBatchTag);
  std::vector<std::uint64_t> keys{root}, dist_keys{root};
  std::vector<std::vector<FactorValue>> prefixes{{}};

  for (std::size_t m = 0; m < specs.size(); ++m) {
    const bool distinctive = specs[m].kind == FactorKind::Distinctive;
    TreeLevel level;
    std::vector<std::uint64_t> next_keys, next_dist_keys;
    std::vector<std::vector<FactorValue>> next_prefixes;
    const std::size_t width = keys.size() * specs[m].k;
    level.parent.reserve(width);
    level.value.reserve(width);
    next_keys.reserve(width);
    next_dist_keys.reserve(width);
    next_prefixes.reserve(width);
    for (std::size_t node = 0; node < keys.size(); ++node) {
      CounterRng rng(derive_key(distinctive ? dist_keys[node] : keys[node], m));
      const auto drawn = sample_without_replacement(specs[m].cardinality(), specs[m].k, rng);
      for (std::size_t c = 0; c < drawn.size(); ++c) {
        level.parent.push_back(static_cast<std::uint32_t>(node));
        level.value.push_back(drawn[c]);
        next_keys.push_back(derive_key(keys[node], {m, c, 0xC41DULL}));
        next_dist_keys.push_back(distinctive ? derive_key(dist_keys[node], {m, c, 0xC41DULL})
                                             : dist_keys[node]);
        auto p = prefixes[node];
        p.push_back(drawn[c]);
        next_prefixes.push_back(std::move(p));
      }
    }
    batch.tree.push_back(std::move(level));
    keys = std::move(next_keys);
    dist_keys = std::move(next_dist_keys);
    prefixes = std::move(next_prefixes);
  }

  batch.transformations.reserve(prefixes.size());
  for (auto& p : prefixes) batch.transformations.push_back(GDTransformation{std::move(p)});
  return batch;
}

PairCounts predict_pair_counts(const SamplingPlan& plan) {
  const std::uint64_t k = plan.k_total();
  const std::uint64_t ki = plan.k_invariant();
  return PairCounts{k * ki, k, k * (ki - 1), k - ki};
}

PairCounts brute_force_pair_counts(const Batch& batch) {
  const auto& specs = batch.plan.specs();
  const auto& ts = batch.transformations;
  PairCounts counts;
  std::uint64_t negatives_first = 0;
  for (std::size_t a = 0; a < ts.size(); ++a) {
    std::uint64_t negatives = 0;
    for (std::size_t b = 0; b < ts.size(); ++b) {
      if (contrast_fast(specs, ts[a], ts[b])) {
        ++counts.total_positive;
        if (ts[a] == ts[b]) {
          ++counts.trivial_positive;
        } else {
          ++counts.nontrivial_positive;
        }
      } else {
        ++negatives;
      }
    }
    if (a == 0) {
      negatives_first = negatives;
    } else if (negatives != negatives_first) {
      throw InvariantViolation("anchor " + std::to_string(a) + " has " +
                               std::to_string(negatives) + " negatives, anchor 0 has " +
                               std::to_string(negatives_first));
    }
  }
  counts.negatives_per_anchor = negatives_first;
  return counts;
}

BatchReport validate_batch(const Batch& batch) {
  const auto& specs = batch.plan.specs();
  const auto& ts = batch.transformations;
  const std::size_t k = ts.size();
  BatchReport r;

  std::vector<bool> in_positive(k, false), has_negative(k, false);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (contrast_fast(specs, ts[a], ts[b])) {
        r.req_i = true;
        if (!(ts[a] == ts[b])) {
          r.req_ii = true;
          in_positive[a] = true;
        }
      } else {
        has_negative[a] = true;
      }
    }
  }
  r.req_iii = r.req_ii;
  for (std::size_t a = 0; a < k; ++a) {
    if (in_positive[a] && !has_negative[a]) r.req_iii = false;
  }

  r.balanced = k == batch.plan.k_total();
  std::size_t prefix_width = 1;
  for (std::size_t m = 0; m < specs.size() && r.balanced; ++m) {
    prefix_width *= specs[m].k;
    const std::size_t expected = k / prefix_width;
    std::map<std::vector<FactorValue>, std::size_t> share;
    for (const auto& t : ts) {
      ++share[std::vector<FactorValue>(t.factors.begin(),
                                       t.factors.begin() + static_cast<long>(m) + 1)];
    }
    if (share.size() != prefix_width) r.balanced = false;
    for (const auto& [prefix, count] : share) {
      if (count != expected) r.balanced = false;
    }
  }
  return r;
}

std::vector<std::uint64_t> isolated_variation_counts(const Batch& batch) {
  const auto& ts = batch.transformations;
  const std::size_t nf = batch.plan.size();
  std::vector<std::uint64_t> counts(nf, 0);
  for (std::size_t a = 0; a < ts.size(); ++a) {
    for (std::size_t b = 0; b < ts.size(); ++b) {
      int differing = -1;
      int n_diff = 0;
      for (std::size_t m = 0; m < nf; ++m) {
        if (ts[a].factors[m] != ts[b].factors[m]) {
          differing = static_cast<int>(m);
          ++n_diff;
        }
      }
      if (n_diff == 1) ++counts[static_cast<std::size_t>(differing)];
    }
  }
  return counts;
}

void write_batch_text(std::ostream& os, const Batch& batch) {
  const auto& specs = batch.plan.specs();
  os << '#';
  for (std::size_t m = 0; m < specs.size(); ++m) os << (m ? "\t" : "") << specs[m].name;
  os << '\n';
  for (const auto& t : batch.transformations) {
    for (std::size_t m = 0; m < specs.size(); ++m) {
      os << (m ? "\t" : "") << specs[m].values[t.factors[m]];
    }
    os << '\n';
  }
}

std::string batch_to_text(const Batch& batch) {
  std::ostringstream os;
  write_batch_text(os, batch);
  return os.str();
}

std::vector<GDTransformation> read_batch_text(std::istream& is, const SamplingPlan& plan) {
  const auto& specs = plan.specs();
  std::vector<GDTransformation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    GDTransformation t;
    std::size_t start = 0;
    for (std::size_t m = 0; m < specs.size(); ++m) {
      const std::size_t tab = line.find('\t', start);
      const bool last = m + 1 == specs.size();
      if (last != (tab == std::string::npos)) {
        throw DomainError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(specs.size()) + " fields");
      }
      const std::string field = line.substr(start, last ? std::string::npos : tab - start);
      const auto idx = specs[m].index_of(field);
      if (!idx) {
        throw DomainError("line " + std::to_string(line_no) + ": '" + field +
                          "' is not a value of factor '" + specs[m].name + "'");
      }
      t.factors.push_back(*idx);
      start = tab + 1;
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace gdt

#include "gdt/transform_algebra.hpp"

#include <set>

#include "gdt/errors.hpp"

namespace gdt {

std::string to_string(FactorKind kind) {
  return kind == FactorKind::Invariant ? "invariant" : "distinctive";
}

FactorKind factor_kind_from_string(const std::string& s) {
  if (s == "invariant") return FactorKind::Invariant;
  if (s == "distinctive") return FactorKind::Distinctive;
  throw DomainError("unknown factor kind '" + s + "'");
}

void FactorSpec::validate() const {
  if (values.empty()) throw DomainError("factor '" + name + "' has no values");
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(v).second) {
      throw DomainError("factor '" + name + "' has duplicate value '" + v + "'");
    }
  }
}

std::optional<FactorValue> FactorSpec::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == label) return static_cast<FactorValue>(i);
  }
  return std::nullopt;
}

FactorSpec make_indexed_factor(std::string name, FactorKind kind, std::size_t n,
                               std::size_t k) {
  FactorSpec spec{std::move(name), kind, {}, k};
  spec.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) spec.values.push_back(std::to_string(i));
  return spec;
}

void check_conforms(std::span<const FactorSpec> specs, const GDTransformation& t) {
  if (t.factors.size() != specs.size()) {
    throw DomainError("transformation has " + std::to_string(t.factors.size()) +
                      " factors, expected " + std::to_string(specs.size()));
  }
  for (std::size_t m = 0; m < specs.size(); ++m) {
    if (!specs[m].contains(t.factors[m])) {
      throw DomainError("value index " + std::to_string(t.factors[m]) +
                        " not in factor '" + specs[m].name + "'");
    }
  }
}

int factor_contrast(const FactorSpec& spec, FactorValue a, FactorValue b) {
  if (!spec.contains(a) || !spec.contains(b)) {
    throw DomainError("value not in factor '" + spec.name + "'");
  }
  if (spec.kind == FactorKind::Invariant) return 1;
  return a == b ? 1 : 0;
}

int composed_contrast(std::span<const FactorSpec> specs, const GDTransformation& a,
                      const GDTransformation& b) {
  check_conforms(specs, a);
  check_conforms(specs, b);
  for (std::size_t m = 0; m < specs.size(); ++m) {
    if (specs[m].kind == FactorKind::Distinctive && a.factors[m] != b.factors[m]) {
      return 0;
    }
  }
  return 1;
}

std::vector<GDTransformation> enumerate_space(std::span<const FactorSpec> specs) {
  std::vector<GDTransformation> out;
  GDTransformation cur;
  cur.factors.assign(specs.size(), 0);
  for (const auto& s : specs) {
    if (s.values.empty()) return out;
  }
  for (;;) {
    out.push_back(cur);
    // odometer increment, last factor fastest
    std::size_t m = specs.size();
    while (m > 0) {
      --m;
      if (++cur.factors[m] < specs[m].values.size()) break;
      cur.factors[m] = 0;
      if (m == 0) return out;
    }
    if (specs.empty()) return out;
  }
}

ContrastTable build_contrast_table(std::span<const FactorSpec> specs,
                                   std::vector<GDTransformation> domain) {
  ContrastTable table(domain.size());
  for (std::size_t i = 0; i < domain.size(); ++i) {
    for (std::size_t j = 0; j < domain.size(); ++j) {
      table.set(i, j, composed_contrast(specs, domain[i], domain[j]));
    }
  }
  table.domain = std::move(domain);
  return table;
}

std::string to_string(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::Reflexivity: return "reflexivity";
    case Violation::Symmetry: return "symmetry";
    case Violation::Transitivity: return "transitivity";
  }
  return "?";
}

AdmissibilityReport verify_admissibility(const ContrastTable& table) {
  if (table.entries.size() != table.n * table.n) {
    throw DomainError("contrast table is not square");
  }
  const std::size_t n = table.n;
  AdmissibilityReport r;
  for (std::size_t x = 0; x < n; ++x) {
    if (table.at(x, x) != 1) {
      return {false, Violation::Reflexivity, {x}};
    }
  }
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      if (table.at(x, y) != table.at(y, x)) {
        return {false, Violation::Symmetry, {x, y}};
      }
    }
  }
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      if (!table.at(x, y)) continue;
      for (std::size_t z = 0; z < n; ++z) {
        if (table.at(y, z) && !table.at(x, z)) {
          return {false, Violation::Transitivity, {x, y, z}};
        }
      }
    }
  }
  return r;
}

bool is_monotone(std::uint32_t truth, int m) {
  const std::uint32_t points = 1u << m;
  for (std::uint32_t v = 0; v < points; ++v) {
    if (!((truth >> v) & 1u)) continue;
    // h(v) = 1 forces h = 1 on every v' >= v; checking single-bit raises suffices
    for (int i = 0; i < m; ++i) {
      const std::uint32_t up = v | (1u << i);
      if (!((truth >> up) & 1u)) return false;
    }
  }
  return true;
}

std::uint32_t subset_product_truth(std::uint32_t subset, int m) {
  std::uint32_t truth = 0;
  for (std::uint32_t v = 0; v < (1u << m); ++v) {
    if ((v & subset) == subset) truth |= 1u << v;
  }
  return truth;
}

namespace {

// Admissibility of c(T,T') = h(agree(T,T')) over {0,1}^M, where agree has
// bit i set iff T_i == T'_i, i.e. ~(T xor T') restricted to M bits.
bool induces_admissible(std::uint32_t truth, int m) {
  const std::uint32_t n = 1u << m;
  const std::uint32_t mask = n - 1;
  auto c = [&](std::uint32_t a, std::uint32_t b) {
    return (truth >> (~(a ^ b) & mask)) & 1u;
  };
  ContrastTable table(n);
  for (std::uint32_t a = 0; a < n; ++a) {
    for (std::uint32_t b = 0; b < n; ++b) table.set(a, b, static_cast<int>(c(a, b)));
  }
  return verify_admissibility(table).admissible;
}

}  // namespace

std::vector<FactorwiseContrast> enumerate_factorwise_contrasts(int m) {
  if (m < 1 || m > 4) {
    throw DomainError("enumerate_factorwise_contrasts supports 1 <= M <= 4, got " +
                      std::to_string(m));
  }
  const std::uint64_t candidates = 1ULL << (1u << m);
  std::vector<FactorwiseContrast> out;
  for (std::uint64_t h = 0; h < candidates; ++h) {
    const auto truth = static_cast<std::uint32_t>(h);
    if (!is_monotone(truth, m) || !induces_admissible(truth, m)) continue;
    FactorwiseContrast fc{m, truth, std::nullopt};
    for (std::uint32_t s = 0; s < (1u << m); ++s) {
      if (subset_product_truth(s, m) == truth) {
        fc.subset = s;
        break;
      }
    }
    out.push_back(fc);
  }
  return out;
}

}  // namespace gdt

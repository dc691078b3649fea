#pragma once

// Factor spaces, composed transformations and their contrast functions.
//
// A contrast c(T, T') in {0, 1} says whether two views are pulled together
// (1) or pushed apart (0). Each factor is either invariant (c == 1) or
// distinctive (c == [t == t']), and the contrast of a composed transformation
// is the product over factors. Admissible contrasts are those whose c == 1
// relation is an equivalence relation.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gdt {

enum class FactorKind { Invariant, Distinctive };

std::string to_string(FactorKind kind);
FactorKind factor_kind_from_string(const std::string& s);

/// Index of a value inside FactorSpec::values. Values are opaque tokens; the
/// algebra only ever compares them for equality.
using FactorValue = std::uint32_t;

struct FactorSpec {
  std::string name;
  FactorKind kind = FactorKind::Invariant;
  std::vector<std::string> values;
  std::size_t k = 1;

  /// Throws DomainError on an empty value set or duplicate values. Does not
  /// check k against |values|; that is a plan-level error.
  void validate() const;

  std::size_t cardinality() const { return values.size(); }
  bool contains(FactorValue v) const { return v < values.size(); }
  std::optional<FactorValue> index_of(const std::string& label) const;
};

/// Factor with values "0" .. "n-1".
FactorSpec make_indexed_factor(std::string name, FactorKind kind, std::size_t n,
                               std::size_t k);

struct GDTransformation {
  std::vector<FactorValue> factors;

  friend bool operator==(const GDTransformation&, const GDTransformation&) = default;
  friend auto operator<=>(const GDTransformation&, const GDTransformation&) = default;
};

/// Throws DomainError unless t has one in-range value per spec.
void check_conforms(std::span<const FactorSpec> specs, const GDTransformation& t);

int factor_contrast(const FactorSpec& spec, FactorValue a, FactorValue b);

/// Product of per-factor contrasts.
int composed_contrast(std::span<const FactorSpec> specs, const GDTransformation& a,
                      const GDTransformation& b);

/// Every transformation in the product space, in lexicographic order.
std::vector<GDTransformation> enumerate_space(std::span<const FactorSpec> specs);

struct ContrastTable {
  std::vector<GDTransformation> domain;  // may be empty for anonymous tables
  std::size_t n = 0;
  std::vector<std::uint8_t> entries;     // row-major n x n

  ContrastTable() = default;
  explicit ContrastTable(std::size_t size) : n(size), entries(size * size, 0) {}

  std::uint8_t at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
  void set(std::size_t i, std::size_t j, int v) {
    entries[i * n + j] = static_cast<std::uint8_t>(v != 0);
  }
};

ContrastTable build_contrast_table(std::span<const FactorSpec> specs,
                                   std::vector<GDTransformation> domain);

enum class Violation { None, Reflexivity, Symmetry, Transitivity };

std::string to_string(Violation v);

struct AdmissibilityReport {
  bool admissible = true;
  Violation kind = Violation::None;
  /// (x) for reflexivity, (x, y) for symmetry, (x, y, z) for transitivity
  /// with c(x,y) == c(y,z) == 1 and c(x,z) == 0.
  std::vector<std::size_t> witness;
};

/// Scans reflexivity, then symmetry, then transitivity, each in
/// lexicographic index order, and reports the first violation found.
AdmissibilityReport verify_admissibility(const ContrastTable& table);

/// A binary function h over {0,1}^M, stored as a truth table: bit v of
/// `truth` is h(v) where bit i of v is the agreement indicator of factor i.
struct FactorwiseContrast {
  int m = 0;
  std::uint32_t truth = 0;
  /// Factor subset S with h(v) == prod_{i in S} v_i, if h has that form.
  std::optional<std::uint32_t> subset;
};

bool is_monotone(std::uint32_t truth, int m);
std::uint32_t subset_product_truth(std::uint32_t subset, int m);

/// Exhaustively enumerates every monotone h over {0,1}^M that induces an
/// admissible contrast c(T,T') = h(v(T,T')) on the full space of M binary
/// distinctive factors. Only all-distinctive spaces are tested: an invariant
/// factor contributes a constant-1 agreement bit and drops out of h. Requires
/// 1 <= M <= 4.
std::vector<FactorwiseContrast> enumerate_factorwise_contrasts(int m);

}  // namespace gdt

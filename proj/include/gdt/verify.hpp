#pragma once

// Self-checks of the formal results the framework rests on: admissibility of
// product contrasts, batch pair counts, the factorwise-contrast enumeration,
// the variance of stratified GDT estimates, and the loss gradients.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gdt/transform_algebra.hpp"

namespace gdt {

struct CheckResult {
  std::string name;
  bool passed = false;
  nlohmann::json expected;
  nlohmann::json observed;
  std::string detail;
};

struct SuiteResult {
  std::string name;
  std::vector<CheckResult> checks;
  nlohmann::json extra = nlohmann::json::object();
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
};

struct VerifyOptions {
  std::uint64_t seed = 1;

  std::size_t random_tables = 500;
  std::size_t injected_violations = 50;
  std::optional<std::filesystem::path> table_path;  // extra table checked for admissibility

  std::size_t random_plans = 200;
  std::size_t seeds_per_plan = 5;

  int factorwise_max_m = 3;

  std::size_t variance_worlds = 3;
  std::size_t variance_n = 6;  // |invariant| == |distinctive|
  std::size_t variance_k = 2;  // K_I == K_V
  std::uint64_t variance_trials = 50'000;
  unsigned threads = 1;

  std::size_t simclr_draws = 50;
  std::size_t loss_grad_instances = 100;
  std::size_t encoder_grad_instances = 20;
  double fd_step = 1e-5;
};

/// admissibility, counting, factorwise, variance, loss, gradient
const std::vector<std::string>& suite_names();

/// Throws UsageError for an unknown suite.
SuiteResult run_suite(const std::string& name, const VerifyOptions& opts);

/// All suites, or just `only`.
std::vector<SuiteResult> run_verify(const std::optional<std::string>& only,
                                    const VerifyOptions& opts);

nlohmann::json verify_report_json(const std::vector<SuiteResult>& suites);

/// Text form of an anonymous contrast table: '#' comments, the size n, then n
/// rows of n whitespace-separated 0/1 entries. Throws DomainError on bad input.
ContrastTable read_contrast_table(std::istream& is);
ContrastTable load_contrast_table(const std::filesystem::path& path);
void write_contrast_table(std::ostream& os, const ContrastTable& table);

/// Reference NT-Xent over 2N rows where rows 2i and 2i+1 are the two views of
/// sample i: sum over rows of -log softmax of the partner among all other rows,
/// similarities <e_a, e_b> / temperature. Written independently of gdt_loss.
double nt_xent_reference(const Eigen::MatrixXd& emb, double temperature);

}  // namespace gdt

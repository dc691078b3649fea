#include <doctest.h>

#include <sstream>

#include "gdt/errors.hpp"
#include "gdt/verify.hpp"

using namespace gdt;

namespace {

VerifyOptions quick() {
  VerifyOptions o;
  o.random_tables = 50;
  o.injected_violations = 15;
  o.random_plans = 40;
  o.variance_worlds = 1;
  o.variance_trials = 20'000;
  o.simclr_draws = 10;
  o.loss_grad_instances = 10;
  o.encoder_grad_instances = 3;
  return o;
}

}  // namespace

TEST_CASE("contrast table text form") {
  std::istringstream in("# comment\n3\n1 0 0\n0 1 1 # trailing\n0 1 1\n");
  const auto t = read_contrast_table(in);
  CHECK(t.n == 3);
  CHECK(t.at(1, 2) == 1);
  CHECK(t.at(0, 2) == 0);
  std::ostringstream out;
  write_contrast_table(out, t);
  std::istringstream back(out.str());
  CHECK(read_contrast_table(back).entries == t.entries);

  std::istringstream short_in("2\n1 0 0\n");
  CHECK_THROWS_AS(read_contrast_table(short_in), DomainError);
  std::istringstream bad_entry("1\n2\n");
  CHECK_THROWS_AS(read_contrast_table(bad_entry), DomainError);
  std::istringstream empty("# nothing\n");
  CHECK_THROWS_AS(read_contrast_table(empty), DomainError);
}

TEST_CASE("NT-Xent reference by hand") {
  // two orthogonal pairs, temperature 1
  Eigen::MatrixXd e(4, 2);
  e << 1, 0, 1, 0, 0, 1, 0, 1;
  // each anchor: positive sim 1, others 0, 0 -> -log(e / (e + 2))
  const double per = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(nt_xent_reference(e, 1.0) == doctest::Approx(4 * per));
  CHECK_THROWS_AS(nt_xent_reference(Eigen::MatrixXd::Ones(3, 2), 1.0), DomainError);
}

TEST_CASE("every suite passes at reduced sizes") {
  const auto results = run_verify(std::nullopt, quick());
  CHECK(results.size() == suite_names().size());
  for (const auto& s : results) {
    INFO(s.name);
    for (const auto& c : s.checks) {
      INFO(c.name << " observed " << c.observed.dump());
      CHECK(c.passed);
    }
  }
  const auto j = verify_report_json(results);
  CHECK(j["passed"] == true);
  const auto& counting = j["suites"][1];
  CHECK(counting["name"] == "counting");
  CHECK(counting["checks"][0]["expected"]["nontrivial_positive"] == 8);
  CHECK(counting["checks"][0]["expected"]["negatives_per_anchor"] == 6);
}

TEST_CASE("unknown suites are usage errors") {
  CHECK_THROWS_AS(run_suite("everything", quick()), UsageError);
}

TEST_CASE("the corrupted fixture fails with its witness") {
  auto o = quick();
  o.table_path = std::string(GDT_SOURCE_DIR) + "/tests/fixtures/corrupted_table.txt";
  const auto s = run_suite("admissibility", o);
  CHECK_FALSE(s.passed());
  REQUIRE(s.checks.size() == 3);
  CHECK(s.checks[2].observed["witness"] == nlohmann::json::array({0, 1, 2}));
  CHECK(s.checks[2].detail == "transitivity violated at (0, 1, 2)");
}

// gdt: verification suites, single training runs and preset sweeps.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or config error,
// 3 runtime or numeric error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "gdt/errors.hpp"
#include "gdt/harness.hpp"
#include "gdt/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item[0] == '-') throw gdt::UsageError("bad seed '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw gdt::UsageError("empty seed list");
  return out;
}

int cmd_verify(const std::optional<std::string>& suite, const std::string& json_path,
               const std::string& table_path, std::uint64_t trials, std::uint64_t seed) {
  gdt::VerifyOptions opts;
  opts.seed = seed;
  opts.threads = gdt::threads_from_env();
  if (trials) opts.variance_trials = trials;
  if (!table_path.empty()) opts.table_path = table_path;

  const auto results = gdt::run_verify(suite, opts);
  bool all = true;
  for (const auto& s : results) {
    for (const auto& c : s.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << s.name << '/' << c.name;
      if (!c.detail.empty()) std::cout << ": " << c.detail;
      std::cout << '\n';
      if (!c.passed) {
        std::cout << "  expected: " << c.expected.dump() << "\n  observed: " << c.observed.dump()
                  << '\n';
      }
    }
    all = all && s.passed();
  }
  const auto report = gdt::verify_report_json(results);
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write '" + json_path + "'");
    out << report.dump(2) << '\n';
  }
  std::cout << (all ? "verify: all checks passed" : "verify: FAILED") << '\n';
  return all ? kExitOk : kExitVerifyFailed;
}

int cmd_train(const std::string& config, const std::string& preset, std::uint64_t seed,
              const std::string& out_dir) {
  const auto cfg = gdt::load_config(config);
  const auto spec = gdt::resolve_run(cfg, preset, seed);
  const auto out = gdt::run_experiment(spec);
  gdt::write_run_outputs(out_dir, spec, out);
  std::cout << gdt::csv_header(false) << '\n' << gdt::csv_row(out.record, false) << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string& config, const std::string& presets_arg,
              const std::string& seeds_arg, const std::string& out_path, unsigned threads) {
  const auto cfg = gdt::load_config(config);
  std::vector<std::string> presets = split_list(presets_arg);
  if (presets.empty()) {
    for (const auto& p : cfg.presets) presets.push_back(p.name);
  }
  const auto seeds = parse_seeds(seeds_arg);

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
  const auto records = gdt::run_sweep(cfg, presets, seeds, threads ? threads : gdt::threads_from_env());
  out << gdt::csv_header(true) << '\n';
  std::size_t failed = 0;
  for (const auto& r : records) {
    out << gdt::csv_row(r, true) << '\n';
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "gdt sweep: " << r.preset << " seed " << r.seed << ": " << r.error << '\n';
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("write to '" + out_path + "' failed");
  std::cout << "gdt sweep: " << records.size() << " runs, " << failed << " failed -> " << out_path
            << '\n';
  return failed ? kExitRuntime : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized data transformation toolkit"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "Run the verification suites");
  std::string suite, json_path, table_path;
  std::uint64_t trials = 0, verify_seed = 1;
  verify->add_option("--suite", suite, "admissibility, counting, factorwise, variance, loss or gradient");
  verify->add_option("--json", json_path, "Write the JSON report here");
  verify->add_option("--table", table_path, "Also check this contrast table file for admissibility");
  verify->add_option("--trials", trials, "Monte Carlo trials for the variance suite");
  verify->add_option("--seed", verify_seed, "Seed for generated instances");

  auto* train = app.add_subcommand("train", "Train and evaluate one preset");
  std::string config, preset, out_dir;
  std::uint64_t seed = 0;
  train->add_option("--config", config)->required();
  train->add_option("--preset", preset)->required();
  train->add_option("--seed", seed)->required();
  train->add_option("--out", out_dir)->required();

  auto* sweep = app.add_subcommand("sweep", "Train presets x seeds and write a CSV");
  std::string sweep_config, presets_arg, seeds_arg = "1,2,3", out_csv;
  unsigned threads = 0;
  sweep->add_option("--config", sweep_config)->required();
  sweep->add_option("--presets", presets_arg, "Comma-separated; default all presets");
  sweep->add_option("--seeds", seeds_arg, "Comma-separated")->capture_default_str();
  sweep->add_option("--out", out_csv)->required();
  sweep->add_option("--threads", threads, "Runs in flight; default GDT_THREADS or 1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) {
      return cmd_verify(suite.empty() ? std::nullopt : std::optional<std::string>(suite), json_path,
                        table_path, trials, verify_seed);
    }
    if (train->parsed()) return cmd_train(config, preset, seed, out_dir);
    return cmd_sweep(sweep_config, presets_arg, seeds_arg, out_csv, threads);
  } catch (const gdt::UsageError& e) {
    std::cerr << "gdt: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gdt::ConfigError& e) {
    std::cerr << "gdt: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gdt::PlanError& e) {
    std::cerr << "gdt: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gdt::DomainError& e) {
    std::cerr << "gdt: invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "gdt: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

// One PASS/FAIL line per acceptance criterion, with the observed numbers.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gdt/harness.hpp"
#include "gdt/verify.hpp"

using namespace gdt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string timing = " [" + std::to_string(s).substr(0, std::to_string(s).find('.') + 3) + " s";
  if (limit_s > 0) {
    timing += " / limit " + std::to_string(static_cast<int>(limit_s)) + " s";
    if (s >= limit_s) {
      o.passed = false;
      o.detail += " (over time)";
    }
  }
  timing += "]";
  if (!o.passed) ++failures;
  std::printf("%s %d %s: %s%s\n", o.passed ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              timing.c_str());
  std::fflush(stdout);
}

Outcome from_suite(const SuiteResult& s) {
  std::string d;
  for (const auto& c : s.checks) {
    if (!c.passed) d += c.name + " observed " + c.observed.dump() + "; ";
  }
  if (d.empty()) d = std::to_string(s.checks.size()) + " checks";
  return {s.passed(), d};
}

const CheckResult& find_check(const SuiteResult& s, const std::string& name) {
  for (const auto& c : s.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

int main() {
  VerifyOptions opts;  // defaults are the acceptance sizes
  opts.threads = threads_from_env();

  criterion(1, "pair counts", 5.0, [&] {
    const auto s = run_suite("counting", opts);
    auto o = from_suite(s);
    if (o.passed) {
      const auto& simclr = find_check(s, "simclr_b8");
      o.detail = std::to_string(opts.random_plans) + " plans x " +
                 std::to_string(opts.seeds_per_plan) + " seeds exact; simclr B=8 " +
                 simclr.observed.dump();
    }
    return o;
  });

  criterion(2, "admissibility properties", 5.0, [&] {
    auto o = from_suite(run_suite("admissibility", opts));
    if (o.passed)
      o.detail = std::to_string(opts.random_tables) + " tables admissible, " +
                 std::to_string(opts.injected_violations) + " violations caught with witnesses";
    return o;
  });

  criterion(3, "factorwise contrasts", 10.0, [&] {
    const auto s = run_suite("factorwise", opts);
    auto o = from_suite(s);
    if (o.passed) {
      o.detail = "counts";
      for (const auto& c : s.checks) o.detail += " " + c.observed["count"].dump();
      o.detail += ", all subset products";
    }
    return o;
  });

  criterion(4, "stratified variance", 60.0, [&] {
    const auto s = run_suite("variance", opts);
    auto o = from_suite(s);
    std::string forms;
    for (const auto& c : s.checks) {
      if (c.name.ends_with("_naive_form_reported"))
        forms += " " + c.observed["matched"].get<std::string>();
      if (c.name.ends_with("_closed_form"))
        forms += " rel_err=" + c.observed["rel_err"].dump();
    }
    o.detail += ";" + forms;
    return o;
  });

  criterion(5, "SimCLR reduction", 0.0, [&] {
    const auto s = run_suite("loss", opts);
    auto o = from_suite(s);
    if (o.passed) o.detail = find_check(s, "simclr_matches_nt_xent").observed.dump();
    return o;
  });

  criterion(6, "gradient oracles", 0.0, [&] {
    const auto s = run_suite("gradient", opts);
    auto o = from_suite(s);
    if (o.passed) {
      o.detail = "embedding " + find_check(s, "loss_embedding_gradient").observed.dump() +
                 "; encoder " + find_check(s, "encoder_parameter_gradient").observed.dump();
    }
    return o;
  });

  criterion(7, "hypothesis-grid directions", 600.0, [&] {
    const auto cfg = load_config(fs::path(GDT_SOURCE_DIR) / "configs" / "default.json");
    const std::vector<std::string> presets{"row_a", "row_e", "row_h", "row_l"};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto rows = run_sweep(cfg, presets, seeds, threads_from_env());
    std::map<std::string, std::vector<const RunRecord*>> by;
    for (const auto& r : rows) {
      if (!r.error.empty()) throw std::runtime_error(r.preset + ": " + r.error);
      by[r.preset].push_back(&r);
    }
    const double chance = 1.0 / static_cast<double>(cfg.world.n_identities);
    const std::size_t majority = seeds.size() / 2 + 1;
    std::size_t cross_wins = 0, disp_wins = 0;
    char buf[256];
    std::string d;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const double ra = by["row_a"][i]->metrics.recall_at_1, re = by["row_e"][i]->metrics.recall_at_1;
      const double dh = by["row_h"][i]->metrics.dispersion, dl = by["row_l"][i]->metrics.dispersion;
      cross_wins += re > ra;
      disp_wins += dl >= 1.5 * dh;
      std::snprintf(buf, sizeof buf, "seed %llu: r@1 e %.3f vs a %.3f, disp l/h %.2f; ",
                    static_cast<unsigned long long>(seeds[i]), re, ra, dl / dh);
      d += buf;
    }
    bool above_chance = true;
    for (const auto& p : presets) {
      std::size_t ok = 0;
      for (const auto* r : by[p]) ok += r->metrics.recall_at_1 >= 5.0 * chance;
      if (ok < majority) {
        above_chance = false;
        d += p + " below 5x chance; ";
      }
    }
    std::snprintf(buf, sizeof buf, "wins %zu/%zu cross-modal, %zu/%zu dispersion", cross_wins,
                  seeds.size(), disp_wins, seeds.size());
    d += buf;
    return Outcome{cross_wins >= majority && disp_wins >= majority && above_chance, d};
  });

  criterion(8, "train determinism", 0.0, [&] {
    const fs::path work = fs::temp_directory_path() / "gdt_acceptance_train";
    fs::remove_all(work);
    const std::string config = std::string(GDT_SOURCE_DIR) + "/configs/default.json";
    for (const char* run : {"a", "b"}) {
      const std::string cmd = std::string("\"") + GDT_CLI_PATH + "\" train --config \"" + config +
                              "\" --preset row_e --seed 2 --out \"" + (work / run).string() +
                              "\" > /dev/null";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) return Outcome{false, "gdt train failed: " + std::to_string(rc)};
    }
    for (const char* f : {"metrics.csv", "params.bin"}) {
      if (slurp(work / "a" / f) != slurp(work / "b" / f))
        return Outcome{false, std::string(f) + " differs"};
    }
    fs::remove_all(work);
    return Outcome{true, "metrics.csv and params.bin byte-identical over two runs"};
  });

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}

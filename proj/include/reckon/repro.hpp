#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace reckon::repro {

// The desk-scale experiment suite behind the `repro` subcommand. Full mode
// trains every system the checks need (hours of CPU); quick mode shrinks all
// sizes to a smoke-test scale and exists for the determinism self-check and
// fast iteration.
struct ReproOptions {
  std::string out_dir = "runs/repro";
  std::uint64_t seed = 0;
  int threads = 1;
  bool quick = false;
  bool self_check = true;  // run the quick suite twice and byte-compare CSVs
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ReproSummary {
  std::vector<CriterionResult> criteria;
  std::string out_dir;
  double wall_seconds = 0.0;

  bool all_pass() const;
};

// Runs generate -> train -> evaluate -> emit CSV/SVG artifacts, then scores
// every published check. Finished trainings are cached as checkpoints under
// out_dir/runs and reused, so an interrupted suite resumes where it stopped.
ReproSummary run_repro_suite(const ReproOptions& opt);

// One "criterion <id> [<name>] PASS|FAIL: <detail>" line per check.
void print_summary(const ReproSummary& s);

}  // namespace reckon::repro

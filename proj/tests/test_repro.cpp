#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "reckon/repro.hpp"

using namespace reckon;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

// Smoke-scale end-to-end pass over the whole suite. Size-dependent criteria
// are allowed to fail here; exact checks (gradients, oracles, token counters,
// rerun determinism) must hold at any scale.
TEST_CASE("suite runs end to end at smoke scale") {
  repro::ReproOptions opt;
  opt.out_dir = (fs::path(REPO_ROOT) / "build" / "repro_smoke").string();
  opt.quick = true;
  opt.self_check = true;
  fs::remove_all(opt.out_dir);

  auto summary = repro::run_repro_suite(opt);

  REQUIRE(summary.criteria.size() == 11);
  for (size_t i = 0; i < summary.criteria.size(); ++i) {
    CHECK(summary.criteria[i].id == static_cast<long>(i) + 1);
    CHECK(!summary.criteria[i].detail.empty());
  }
  for (long id : {1, 2, 3, 8, 11}) {
    INFO("criterion ", id, ": ", summary.criteria[id - 1].detail);
    CHECK(summary.criteria[id - 1].pass);
  }

  const fs::path out = opt.out_dir;
  for (const char* f :
       {"table1_headline.csv", "fig3_hop_grid.csv", "fig4_distractors.csv", "table4_runtime.csv",
        "table5_innerloss.csv", "table6_recall.csv", "records.jsonl", "runtime_wallclock.json",
        "fig3_hop_grid.svg", "fig4_distractors.svg", "table6_recall.svg", "summary.json"}) {
    INFO("artifact ", f);
    CHECK(fs::exists(out / f));
  }

  auto jsum = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(jsum.at("criteria").size() == 11);
  CHECK(jsum.at("quick").get<bool>());

  // Every experiment record must parse and carry the run-identifying fields.
  std::istringstream lines(slurp(out / "records.jsonl"));
  std::string line;
  long records = 0;
  while (std::getline(lines, line)) {
    auto rec = nlohmann::json::parse(line);
    CHECK(rec.contains("experiment"));
    ++records;
  }
  CHECK(records > 0);
}

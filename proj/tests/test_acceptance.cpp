#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "reckon/repro.hpp"

using namespace reckon;

// Full-scale acceptance gate: trains every system the experiment tables need
// and checks each published claim. One line per criterion goes to stdout.
// Checkpoints cache under the output directory, so an interrupted run picks
// up where it stopped instead of retraining.
TEST_CASE("acceptance criteria") {
  repro::ReproOptions opt;
  opt.out_dir = (std::filesystem::path(REPO_ROOT) / "build" / "acceptance").string();
  opt.quick = false;
  opt.self_check = true;

  auto summary = repro::run_repro_suite(opt);
  repro::print_summary(summary);

  REQUIRE(summary.criteria.size() == 11);
  for (const auto& c : summary.criteria) {
    INFO("criterion ", c.id, " (", c.name, "): ", c.detail);
    CHECK(c.pass);
  }
}

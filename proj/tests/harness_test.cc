// Copyright 2026 The endosim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "endosim/harness.hpp"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "endosim/signals.hpp"
#include "test_util.hpp"

namespace endosim {
namespace {

namespace fs = std::filesystem;

ExploreOptions at_depth(int d) {
  ExploreOptions o;
  o.depth = d;
  return o;
}

const fs::path kCorpus = fs::path(ENDOSIM_SOURCE_DIR) / "scenarios";

TEST(Parser, Basics) {
  Scenario sc = parse_scenario(
      "# c\nname demo\nconfig secc_cet\nspawn t1\nfile /tmp/a content=hi\n"
      "t0: getpid expect ok\nt1: write 1 @$secret:8 8 expect deny eph=deny\n"
      "kernel: signal 10 t0\n");
  EXPECT_EQ(sc.name, "demo");
  EXPECT_EQ(sc.variant, "secc_cet");
  ASSERT_EQ(sc.events.size(), 3u);
  EXPECT_EQ(sc.events[1].tid, Tid{1});
  EXPECT_EQ(sc.events[1].expect, Expect::Deny);
  EXPECT_FALSE(sc.events[2].tid.has_value());
  EXPECT_EQ(sc.threads(), (std::vector<Tid>{0, 1}));
}

TEST(Parser, ErrorsCarryLineNumbers) {
  const std::pair<const char*, int> bad[] = {
      {"t0: getpid expect ok\nt0: frobnicate expect ok\n", 2},
      {"t0: getpid expect maybe\n", 1},
      {"name x\n\nbogus line\n", 3},
      {"t0: getpid\n", 1},
  };
  for (const auto& [text, line] : bad) {
    try {
      parse_scenario(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << text;
    }
  }
}

TEST(Config, Precedence) {
  Scenario sc = parse_scenario("config secc_cet\nt0: getpid expect ok\n");
  EXPECT_EQ(resolve_config(sc, std::nullopt).kind, GateKind::Cet);
  EXPECT_EQ(resolve_config(sc, std::string("secc_rand:32")).kind, GateKind::Random);
  Scenario plain = parse_scenario("t0: getpid expect ok\n");
  EXPECT_EQ(resolve_config(plain, std::nullopt), parse_variant("secc_eph"));
}

std::vector<fs::path> corpus_files() {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(kCorpus)) {
    if (e.path().extension() == ".scn") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Corpus, EveryScenarioPassesUnderEveryVariant) {
  auto files = corpus_files();
  ASSERT_GE(files.size(), 20u);
  for (const auto& f : files) {
    Scenario sc = load_scenario(f);
    for (const std::string& v : testing::five_variants()) {
      if (sc.threads().size() > 1 || sc.outcome) {
        InterleaveReport r = interleave_explore(parse_variant(v), sc, at_depth(3));
        EXPECT_TRUE(r.pass) << f << " " << v << " " << r.first_failure_reason;
      } else {
        Report r = run_scenario(parse_variant(v), sc, 1);
        EXPECT_TRUE(r.pass) << f << " " << v << "\n" << r.to_json().dump(1);
      }
    }
  }
}

TEST(Runner, DeterministicJson) {
  for (const auto& f : corpus_files()) {
    Scenario sc = load_scenario(f);
    if (sc.threads().size() > 1) continue;
    GateConfig c = resolve_config(sc, std::string("secc_rand:32"));
    EXPECT_EQ(run_scenario(c, sc, 42).to_json().dump(), run_scenario(c, sc, 42).to_json().dump())
        << f;
  }
}

TEST(Runner, MismatchAndBreachExitCodes) {
  Scenario wrong = parse_scenario("t0: write 1 @$secret:8 8 expect ok\n");
  Report r = run_scenario(parse_variant("secc_eph"), wrong, 1);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.exit_code(), 1);
  Scenario right = parse_scenario("t0: write 1 @$secret:8 8 expect deny\n");
  EXPECT_EQ(run_scenario(parse_variant("secc_eph"), right, 1).exit_code(), 0);
  Report breached;
  breached.breach = true;
  breached.pass = false;
  EXPECT_EQ(breached.exit_code(), 2);
}

TEST(Interleave, SingleThreadHasOneSchedule) {
  Scenario sc = parse_scenario("t0: getpid expect ok\nt0: gettid expect ok\n");
  auto r = interleave_explore(parse_variant("secc_eph"), sc, at_depth(6));
  EXPECT_EQ(r.schedules, 1u);
  EXPECT_TRUE(r.pass);
}

// Oracle for two actors of a and b atomic steps with no preemption bound:
// C(a+b, a) interleavings.
TEST(Interleave, UnboundedCountMatchesBinomial) {
  Scenario sc = parse_scenario(
      "spawn t1\nt0: getpid expect ok\nt1: getpid expect ok\n");
  auto r = interleave_explore(parse_variant("disp_eph"), sc, at_depth(100));
  // Each syscall is 4 phase steps; C(8,4) = 70.
  EXPECT_EQ(r.schedules, 70u);
}

TEST(Interleave, BudgetExceededThrows) {
  Scenario sc = parse_scenario(
      "spawn t1\nt0: getpid expect ok\nt1: getpid expect ok\n");
  ExploreOptions o;
  o.depth = 100;
  o.budget = 10;
  EXPECT_THROW(interleave_explore(parse_variant("secc_eph"), sc, o), BudgetExceeded);
}

TEST(Interleave, ControlsFindTheRaces) {
  for (const char* f : {"race_pwritev_nocopy.scn", "race_lseek_nolock.scn"}) {
    Scenario sc = load_scenario(kCorpus / "controls" / f);
    auto r = interleave_explore(resolve_config(sc, std::nullopt), sc, at_depth(6));
    EXPECT_TRUE(r.pass) << f;
    EXPECT_GT(r.bypassing, 0u) << f;
  }
}

TEST(Attacks, MatrixMatchesExpected) {
  AttackMatrix m = run_attack_suite(1, kCorpus);
  EXPECT_EQ(m, AttackMatrix::expected()) << m.to_table();
  EXPECT_EQ(m.rows.size(), 15u);
}

TEST(MonteCarlo, RejectsTinyTrialCounts) {
  EXPECT_THROW(monte_carlo_guess(16, 32, 100, 1), std::invalid_argument);
}

TEST(MonteCarlo, SmallRunIsPlausible) {
  auto r = monte_carlo_guess(16, 32, 100000, 5);
  EXPECT_EQ(r.formula_rate, Probability(1, 1024));
  // One window succeeds with 1-(1-1/65534)^32; 5 sigma band.
  const double p = 1 - std::pow(1 - 1.0 / 65534, 32);
  const double sigma = std::sqrt(p * (1 - p) / 1e5);
  EXPECT_NEAR(r.empirical_rate, p, 5 * sigma);
  EXPECT_EQ(monte_carlo_guess(16, 32, 100000, 5).bypasses, r.bypasses);
}

TEST(Fuzz, SmallRunIsClean) {
  FuzzStats st = fuzz(200, 100, 9);
  EXPECT_EQ(st.traces, 200u);
  EXPECT_EQ(st.sp_violations, 0u);
  EXPECT_EQ(st.breaches, 0u);
  EXPECT_EQ(st.ephemeral_violations, 0u);
  EXPECT_EQ(st.invariant_failures, 0u) << st.first_failure;
  EXPECT_GT(st.commits, 0u);
  EXPECT_GT(st.denials, 0u);
}

}  // namespace
}  // namespace endosim

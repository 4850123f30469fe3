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

// Scenario runner, interleaving explorer, attack suite, and the two
// statistical drivers (Monte Carlo gadget guessing, safety fuzzing).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "endosim/machine.hpp"
#include "endosim/nexpoline.hpp"

namespace endosim {

// ---------------------------------------------------------------------------
// Scenarios.
//
//   # comment
//   name <text>
//   config <variant> | config <key>=<value>
//   spawn t<N>
//   file <path> [sensitive] [content=<text>]
//   outcome deny|bypass
//   t<N>: <verb> <args...> expect <ok|deny|fault|bypass> [rand=..] [eph=..] [cet=..]
//   kernel: signal <signo> t<N>

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class Expect { Ok, Deny, Fault, Bypass };

const char* to_string(Expect e);
std::optional<Expect> parse_expect(std::string_view s);

struct Event {
  int line = 0;
  std::optional<Tid> tid;  // nullopt: the kernel actor
  std::string verb;
  std::vector<std::string> args;
  Expect expect = Expect::Ok;
  std::map<GateKind, Expect> expect_for;
  std::string text;

  Expect expected(GateKind k) const;
};

struct FileSpec {
  std::string path;
  bool sensitive = false;
  std::string content;
};

struct Scenario {
  std::string name;
  std::optional<std::string> variant;
  std::map<std::string, std::string> options;
  std::vector<Tid> spawned;
  std::vector<FileSpec> files;
  std::vector<Event> events;
  std::optional<Expect> outcome;

  std::vector<Tid> threads() const;
};

Scenario parse_scenario(std::string_view text, std::string name = "");
Scenario load_scenario(const std::filesystem::path& path);

// ENDOSIM_SCENARIO_DIR, else the corpus the build was configured with.
std::filesystem::path scenario_dir();

bool is_syscall_verb(std::string_view verb);

// Applies the scenario's setup lines (options, files, spawns) to `s`.
void apply_setup(MachineState& s, const Scenario& sc);

// Variant precedence: explicit override, then the scenario's config line,
// then secc_eph.
GateConfig resolve_config(const Scenario& sc,
                          const std::optional<std::string>& override_variant);

// ---------------------------------------------------------------------------
// Reports.

struct EventRecord {
  int line = 0;
  std::string actor;
  std::string text;
  Expect expected = Expect::Ok;
  Expect actual = Expect::Ok;
  std::string detail;
  int pkru_transitions = 0;
  bool match = true;
};

struct Report {
  std::string scenario;
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<EventRecord> events;
  std::size_t sp_violations = 0;
  bool breach = false;
  std::string breach_detail;
  std::uint64_t exposures = 0;
  bool bypassed = false;
  std::int64_t pkru_transitions = 0;
  std::optional<Expect> outcome;
  bool outcome_met = true;
  bool pass = true;

  int exit_code() const { return breach ? 2 : pass ? 0 : 1; }
  nlohmann::ordered_json to_json() const;
};

Report run_scenario(const GateConfig& config, const Scenario& sc,
                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Interleaving exploration.

class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(std::size_t cap)
      : std::runtime_error("schedule budget of " + std::to_string(cap) +
                           " exceeded") {}
};

// Extra per-step check; returns a description of the problem, empty if none.
using InvariantHook = std::function<std::string(const MachineState&)>;

struct InterleaveReport {
  std::string scenario;
  std::string variant;
  int depth = 0;
  std::size_t schedules = 0;
  std::size_t failing = 0;
  std::size_t bypassing = 0;
  std::size_t breaches = 0;
  std::vector<std::string> first_failure;
  std::string first_failure_reason;
  bool pass = true;

  int exit_code() const { return breaches ? 2 : pass ? 0 : 1; }
  nlohmann::ordered_json to_json() const;
};

struct ExploreOptions {
  int depth = 6;
  std::uint64_t seed = 0;
  std::size_t budget = 2'000'000;
  InvariantHook hook;
};

InterleaveReport interleave_explore(const GateConfig& config,
                                    const Scenario& sc,
                                    const ExploreOptions& opts);

// ---------------------------------------------------------------------------
// Attack suite.

enum class Cell { Prevented, Vulnerable };

const char* to_string(Cell c);

struct AttackRow {
  int number = 0;
  std::string name;
  std::vector<std::string> files;
};

// The 15 rows, each with the corpus files (under scenarios/attacks) it runs.
const std::vector<AttackRow>& attack_rows();

// Variant strings of the three columns.
const std::vector<std::string>& attack_columns();

struct AttackMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> cells;  // [row][column]
  std::vector<std::vector<std::string>> notes;

  // All Prevented except (Fork Bomb, rand) and (TSX, rand).
  static AttackMatrix expected();
  bool operator==(const AttackMatrix& o) const {
    return rows == o.rows && columns == o.columns && cells == o.cells;
  }
  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
};

AttackMatrix run_attack_suite(std::uint64_t seed,
                              const std::filesystem::path& dir = scenario_dir());

// Windows the fork-bomb attacker gets: enough that a per-window success
// probability of guess_probability() would fail with chance < e^-20.
std::uint64_t forkbomb_windows(const GateConfig& c);

// ---------------------------------------------------------------------------
// Monte Carlo gadget guessing. A trial is one rerandomization window: the
// victim moves the gadget, then the attacker forks `freq` children, each
// jumping to an independently guessed position.

struct MonteCarloResult {
  std::uint32_t pages = 0;
  std::uint32_t freq = 0;
  std::uint64_t trials = 0;
  std::uint64_t bypasses = 0;
  double empirical_rate = 0;
  Probability formula_rate;
  double formula_value = 0;

  nlohmann::ordered_json to_json() const;
};

MonteCarloResult monte_carlo_guess(std::uint32_t pages, std::uint32_t freq,
                                   std::uint64_t trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Safety fuzzing over random well-formed syscall traces.

struct FuzzStats {
  std::uint64_t traces = 0;
  std::uint64_t steps = 0;
  std::uint64_t commits = 0;
  std::uint64_t denials = 0;
  std::uint64_t sp_violations = 0;
  std::uint64_t breaches = 0;
  // Commits with an untrusted thread and a syscall byte in a trampoline,
  // counted for the ephemeral variants only.
  std::uint64_t ephemeral_violations = 0;
  std::uint64_t ephemeral_checks = 0;
  std::uint64_t invariant_failures = 0;
  std::map<std::string, std::uint64_t> calls;
  std::string first_failure;

  nlohmann::ordered_json to_json() const;
};

// Trace i runs under variant i mod 5.
FuzzStats fuzz(std::uint64_t traces, std::uint64_t length, std::uint64_t seed);

// The five variant strings, in fuzz rotation order.
const std::vector<std::string>& all_variants();

}  // namespace endosim

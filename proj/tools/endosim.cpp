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

// endosim: scenario runner, interleaving explorer, attack suite, and
// statistical drivers.
//
// Exit codes: 0 pass, 1 expectation mismatch, 2 safety breach, 3 bad input.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "endosim/harness.hpp"
#include "endosim/nexpoline.hpp"

namespace fs = std::filesystem;
using namespace endosim;

namespace {

constexpr int kBadInput = 3;

fs::path find_scenario(const std::string& arg) {
  fs::path p(arg);
  if (fs::exists(p)) return p;
  fs::path in_dir = scenario_dir() / p;
  if (fs::exists(in_dir)) return in_dir;
  throw std::runtime_error("scenario not found: " + arg);
}

void write_json(const std::string& out, const nlohmann::ordered_json& j) {
  if (out.empty()) return;
  if (out == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << j.dump(2) << "\n";
}

std::optional<std::string> opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

int cmd_run(const std::string& variant, const std::string& file, std::uint64_t seed,
            const std::string& json) {
  const Scenario sc = load_scenario(find_scenario(file));
  const GateConfig cfg = resolve_config(sc, opt(variant));
  const Report r = run_scenario(cfg, sc, seed);
  std::cout << r.scenario << " [" << r.variant << "] seed " << seed << "\n";
  for (const EventRecord& e : r.events) {
    std::cout << (e.match ? "  ok   " : "  FAIL ") << "line " << e.line << " " << e.text << " -> " << to_string(e.actual);
    if (!e.match) std::cout << " (expected " << to_string(e.expected) << ")";
    if (!e.detail.empty()) std::cout << "  " << e.detail;
    std::cout << "\n";
  }
  if (r.outcome) {
    std::cout << "  outcome " << to_string(*r.outcome) << ": "
              << (r.outcome_met ? "met" : "NOT met") << "\n";
  }
  if (r.breach) std::cout << "  SAFETY BREACH: " << r.breach_detail << "\n";
  std::cout << (r.pass ? "PASS" : "FAIL") << " (pkru transitions " << r.pkru_transitions
            << ", sp violations " << r.sp_violations << ")\n";
  write_json(json, r.to_json());
  return r.exit_code();
}

int cmd_interleave(const std::string& variant, const std::string& file, int depth,
                   std::uint64_t seed, std::size_t budget, const std::string& json) {
  const Scenario sc = load_scenario(find_scenario(file));
  const GateConfig cfg = resolve_config(sc, opt(variant));
  ExploreOptions o;
  o.depth = depth;
  o.seed = seed;
  o.budget = budget;
  const InterleaveReport r = interleave_explore(cfg, sc, o);
  std::cout << r.scenario << " [" << r.variant << "] depth " << depth << ": " << r.schedules
            << " schedules, " << r.failing << " failing, " << r.bypassing << " bypassing, "
            << r.breaches << " breaches\n";
  if (!r.first_failure_reason.empty()) {
    std::cout << "first failure: " << r.first_failure_reason << "\n  schedule:";
    for (const std::string& s : r.first_failure) std::cout << " " << s;
    std::cout << "\n";
  }
  std::cout << (r.pass ? "PASS" : "FAIL") << "\n";
  write_json(json, r.to_json());
  return r.exit_code();
}

int cmd_attacks(std::uint64_t seed, const std::string& json) {
  const AttackMatrix m = run_attack_suite(seed);
  std::cout << m.to_table();
  const bool ok = m == AttackMatrix::expected();
  std::cout << (ok ? "matrix matches the expected table\n" : "matrix DIFFERS from the expected table\n");
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      if (!m.notes[i][c].empty()) {
        std::cout << "  " << m.rows[i] << " / " << m.columns[c] << ": " << m.notes[i][c] << "\n";
      }
    }
  }
  write_json(json, m.to_json());
  return ok ? 0 : 1;
}

int cmd_montecarlo(std::uint32_t pages, std::uint32_t freq, std::uint64_t trials,
                   std::uint64_t seed, const std::string& json) {
  const MonteCarloResult r = monte_carlo_guess(pages, freq, trials, seed);
  std::cout << r.to_json().dump(2) << "\n";
  write_json(json, r.to_json());
  return 0;
}

int cmd_fuzz(std::uint64_t traces, std::uint64_t length, std::uint64_t seed,
             const std::string& json) {
  const FuzzStats st = fuzz(traces, length, seed);
  nlohmann::ordered_json j = st.to_json();
  std::cout << j.dump(2) << "\n";
  write_json(json, j);
  if (st.breaches || st.sp_violations) return 2;
  return st.ephemeral_violations || st.invariant_failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"endosim - intra-process isolation monitor simulator"};
  app.require_subcommand(1);

  std::string variant, scenario, json;
  std::uint64_t seed = 0;
  int depth = 6;
  std::size_t budget = ExploreOptions{}.budget;
  std::uint32_t pages = kRandomPages, freq = 32;
  std::uint64_t trials = 1'000'000, traces = 10'000, length = 100;

  auto* run = app.add_subcommand("run", "run a scenario linearly");
  run->add_option("--variant", variant, "secc_rand:<freq>|secc_eph|disp_eph|secc_cet|disp_cet");
  run->add_option("--scenario", scenario, "scenario file")->required();
  run->add_option("--seed", seed);
  run->add_option("--json", json, "write the report here ('-' for stdout)");

  auto* inter = app.add_subcommand("interleave", "explore thread interleavings");
  inter->add_option("--scenario", scenario, "scenario file")->required();
  inter->add_option("--depth", depth, "preemption bound")->check(CLI::NonNegativeNumber);
  inter->add_option("--variant", variant);
  inter->add_option("--seed", seed);
  inter->add_option("--budget", budget, "schedule cap");
  inter->add_option("--json", json);

  auto* attacks = app.add_subcommand("attacks", "run the attack matrix");
  attacks->add_option("--seed", seed);
  attacks->add_option("--json", json);

  auto* mc = app.add_subcommand("montecarlo", "fork-bomb guessing experiment");
  mc->add_option("--pages", pages)->check(CLI::Range(1u, 4096u));
  mc->add_option("--freq", freq)->check(CLI::Range(1u, 1u << 20));
  mc->add_option("--trials", trials);
  mc->add_option("--seed", seed);
  mc->add_option("--json", json);

  auto* fz = app.add_subcommand("fuzz", "random syscall traces against the safety check");
  fz->add_option("--traces", traces);
  fz->add_option("--length", length);
  fz->add_option("--seed", seed);
  fz->add_option("--json", json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kBadInput;
  }

  try {
    if (*run) return cmd_run(variant, scenario, seed, json);
    if (*inter) return cmd_interleave(variant, scenario, depth, seed, budget, json);
    if (*attacks) return cmd_attacks(seed, json);
    if (*mc) return cmd_montecarlo(pages, freq, trials, seed, json);
    if (*fz) return cmd_fuzz(traces, length, seed, json);
  } catch (const BudgetExceeded& e) {
    std::cerr << "endosim: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "endosim: " << e.what() << "\n";
    return kBadInput;
  }
  return kBadInput;
}

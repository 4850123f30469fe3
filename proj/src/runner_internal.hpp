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

// Event engine shared by the linear runner, the explorer, and the suites.

#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "endosim/harness.hpp"

namespace endosim::detail {

struct Outcome {
  Expect actual = Expect::Ok;
  std::string detail;
  int pkru = 0;
};

struct Actor {
  std::string label;
  std::optional<Tid> tid;
  std::vector<std::size_t> events;  // indices into the scenario
  std::size_t cursor = 0;
  bool in_call = false;
  std::uint64_t exposures_before = 0;
};

struct World {
  MachineState s;
  const std::vector<Event>* events = nullptr;
  GateKind kind = GateKind::Ephemeral;
  std::vector<Actor> actors;
  std::vector<std::size_t> actor_of;
  std::vector<std::optional<EventRecord>> records;
  std::map<Tid, std::int64_t> last;
  std::optional<std::int64_t> last_fd;
  std::map<Tid, std::int64_t> last_map;  // last mmap/mremap result per thread
  std::map<Tid, std::vector<std::pair<Phase, int>>> inject;
  std::mt19937_64 attacker;
  bool breach = false;
  std::string breach_detail;
  std::size_t sp_violations = 0;
  bool bypassed = false;
  std::string hook_failure;
};

std::int64_t eval_symbol(const World& w, Tid tid, std::string_view sym);
std::int64_t eval(const World& w, Tid tid, std::string_view expr);
SyscallArg eval_arg(const World& w, Tid tid, const std::string& tok);
DomainId parse_domain(const World& w, Tid tid, const std::string& tok);
Expect map_status(const SyscallResult& r);
std::optional<Phase> parse_phase(std::string_view s);

World make_world(const GateConfig& config, const Scenario& sc, std::uint64_t seed);
bool actor_enabled(const World& w, std::size_t a);
// Runs one scheduling step of actor `a`; returns a label for traces.
std::string step_actor(World& w, std::size_t a);
void check_step(World& w, const InvariantHook& hook);
void fill_unrun(World& w);

}  // namespace endosim::detail

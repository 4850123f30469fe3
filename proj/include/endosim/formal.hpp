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

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "endosim/machine.hpp"

namespace endosim {

/// The state every process starts in: monitor loaded in trusted memory, the
/// application image mapped, no files opened or mapped, a single thread still
/// executing the monitor's loader.
MachineState new_initial(const GateConfig& gate = {}, std::uint64_t seed = 0);

/// Maps the application image (code, data, thread `tid`'s stack) in U0.
void load_app_image(MachineState& s, Tid tid);

/// new_initial() followed by the loader's hand-off of thread 0 to the
/// application domain. This is where every harness run starts.
MachineState boot(const GateConfig& gate = {}, std::uint64_t seed = 0);

/// Drops a thread that sits in the monitor to untrusted domain `d`.
void switch_to_untrusted(MachineState& s, Tid tid, DomainId d);

// Hardware view of a user-mode access: the PKRU grant (or an active page
// grant) for the page's key AND the page-table permission bit.
bool user_can_access(const MachineState& s, DomainId running, const Pkru& pkru,
                     PageNo p, bool write);

bool readable(const MachineState& s, const ThreadCtx& t, PageNo p);
bool writeable(const MachineState& s, const ThreadCtx& t, PageNo p);

enum class SafetyProperty { SP1, SP2, SP3, SP4 };

const char* to_string(SafetyProperty p);

struct Violation {
  SafetyProperty property = SafetyProperty::SP1;
  PageNo page = 0;
  std::optional<Tid> tid;
  std::optional<FileMappingRecord> first;
  std::optional<FileMappingRecord> second;
};

struct SafetyVerdict {
  std::vector<Violation> violations;
  bool safe() const { return violations.empty(); }
  std::string describe() const;
};

bool offset_intersects(const FileMappingRecord& a, const FileMappingRecord& b);

SafetyVerdict safety_check(const MachineState& s);

// A transition mutates a scratch copy of the state and reports what the
// simulated caller observes. A non-Ok result means the precondition failed.
struct Transition {
  std::string name;
  std::function<SyscallResult(MachineState&)> effect;
};

Transition noop_transition();

struct TransitionResult {
  enum class Kind { Committed, PolicyDenied, SafetyBreach };
  Kind kind = Kind::Committed;
  MachineState state;
  SyscallResult result;
  SafetyVerdict breach;
};

const char* to_string(TransitionResult::Kind k);

TransitionResult apply_transition(const MachineState& s, const Transition& t);

struct TraceReport {
  MachineState final_state;
  std::size_t committed = 0;
  std::size_t denials = 0;
  bool breach = false;
  SafetyVerdict breach_verdict;
  std::vector<SyscallResult> results;
};

TraceReport run_trace(const MachineState& s0, std::span<const Transition> ts);

}  // namespace endosim

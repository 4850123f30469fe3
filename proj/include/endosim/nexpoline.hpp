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

// Syscall call gates. Every thread owns a trampoline region; the sysret
// gadget (syscall; ret) is the only place the kernel-side filter lets a
// syscall instruction execute from.
//
//   Random     gadget always present at a secret, periodically moved offset
//   Ephemeral  gadget written on entry, overwritten with int3 on exit
//   Cet        gadget at a fixed public offset, guarded by endbr/shadow stack

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

#include "endosim/machine.hpp"

namespace endosim {

class BadVariant : public std::runtime_error {
 public:
  explicit BadVariant(const std::string& v)
      : std::runtime_error("unknown variant: " + v) {}
};

// `secc_rand:<freq>`, `secc_eph`, `disp_eph`, `secc_cet`, `disp_cet`.
GateConfig parse_variant(std::string_view text);
std::string variant_name(const GateConfig& c);

inline constexpr std::uint32_t kRandomPages = 16;

// Number of offsets the gadget can start at in a region of `pages` pages.
std::uint64_t position_count(std::uint32_t pages);

using Probability = boost::rational<std::int64_t>;

// 2·freq / (4096·pages), exact.
Probability guess_probability(std::uint32_t pages, std::uint32_t freq);

// Uniform integer in [0, n) by rejection sampling; unlike
// std::uniform_int_distribution its output is the same on every library.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

// Allocates and maps the trampoline region for `tid`.
void install_gate(MachineState& s, Tid tid);

// Untrusted -> trusted: the first of the two PKRU transitions of a call.
void gate_enter(MachineState& s, Tid tid);

enum class GateFault { None, CetControlFault, GadgetVisible };

const char* to_string(GateFault f);

// Trusted -> `resume`; the ephemeral variant runs the cleanup transaction
// before the domain drop.
GateFault gate_exit(MachineState& s, Tid tid, DomainId resume);

void rerandomize(MachineState& s, Tid tid);

// Corrupts the regular-stack return slot of an in-flight CET gate call.
void tamper_return_slot(MachineState& s, Tid tid, Addr value);

// Byte class at `a`; nullopt if `a` is in no trampoline region.
std::optional<ByteClass> trampoline_byte(const MachineState& s, Addr a);
std::optional<Tid> region_owner(const MachineState& s, Addr a);

Addr region_begin(const ThreadGate& g);
Addr region_end(const ThreadGate& g);
std::optional<Addr> gadget_addr(const MachineState& s, Tid tid);

enum class ProbeOutcome {
  KilledByFilter,
  Int3Fault,
  CetControlFault,
  UncheckedSyscallExecuted,
  TxAbort,
  TxCommit,
};

const char* to_string(ProbeOutcome o);

ProbeOutcome attack_jump(const MachineState& s, Tid tid, Addr target);

// nullopt when TSX is disabled (the probe is refused).
std::optional<ProbeOutcome> tsx_probe(const MachineState& s, Tid tid,
                                      Addr target);

// Thread creation through the Queen (seccomp) or directly (dispatch).
SyscallResult spawn_thread(MachineState& s, Tid parent, DomainId domain);

// A clone issued straight from a filtered thread. Under seccomp the child
// would inherit the parent's filter, so the monitor refuses.
SyscallResult direct_clone(MachineState& s, Tid parent);

// Ephemeral cleanup: overwrite the three gadget bytes, then commit.
inline constexpr int kCleanupSteps = 4;

struct Interrupt {
  int step = 0;  // cleanup step the signal lands in front of
  int signo = 0;
};

struct CleanupReport {
  int passes = 0;
  int restarts = 0;
  bool gadget_absent = true;
};

// Runs the cleanup, restarting from step 0 whenever an interrupt lands
// mid-way. Interrupts are consumed in order; one whose signo is already
// queued does not preempt (the kernel holds it), which bounds the restarts by
// the number of distinct signals.
CleanupReport cleanup_transaction(MachineState& s, Tid tid,
                                  std::span<const Interrupt> interrupts = {});

// Ephemeral: no syscall byte exists while any thread runs untrusted.
bool ephemeral_clean(const MachineState& s);
// Per-thread form: the thread's own region holds no syscall byte while it
// runs untrusted.
bool ephemeral_clean_for(const MachineState& s, Tid tid);

}  // namespace endosim

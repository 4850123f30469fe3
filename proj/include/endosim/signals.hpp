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

// Signal virtualization. The kernel model only ever knows the monitor's
// entrypoint; user handlers live in a virtual table and are invoked by the
// monitor on the way back to untrusted code.

#pragma once

#include <optional>
#include <string>

#include "endosim/machine.hpp"

namespace endosim {

bool catchable(int signo);
bool reserved(int signo);
bool default_ignored(int signo);

SyscallResult vsigaction(MachineState& s, Tid tid, int signo,
                         std::optional<Addr> handler, SigSet mask);

// how: 0 block, 1 unblock, 2 set. Returns the previous mask.
SyscallResult vsigprocmask(MachineState& s, Tid tid, int how, SigSet set);

SyscallResult vsigaltstack(MachineState& s, Tid tid, Addr base,
                           std::uint64_t len);

enum class Interrupted { InUntrusted, InMonitor, InSubdomain };

const char* to_string(Interrupted i);

Interrupted interrupted_context(const MachineState& s, Tid tid);

// A signal arriving from the kernel for thread `tid`.
void kernel_deliver(MachineState& s, Tid tid, int signo);

enum class ForgedLanding { Start, AtSwitch, PastCheck };

const char* to_string(ForgedLanding l);

struct ForgedFrame {
  ForgedLanding landing = ForgedLanding::Start;
  Pkru pkru = Pkru::all();  // what the attacker wrote into the frame
  Addr rip = 0;
};

enum class ForgedOutcome { Rejected, Accepted };

ForgedOutcome forged_entry(MachineState& s, Tid tid, const ForgedFrame& f);

// Lowest pending unmasked signo. Consumes the override mask when it selects.
std::optional<int> select_pending(MachineState& s, Tid tid);

void deliver_to_untrusted(MachineState& s, Tid tid, int signo);

// Delivers whatever is deliverable right now (nothing while the thread is
// in the monitor or in a signal-blocked subdomain).
void deliver_pending(MachineState& s, Tid tid);

SyscallResult vsigreturn(MachineState& s, Tid tid, const SigFrame& presented);

// The frame the monitor most recently handed to `tid`, if any.
std::optional<SigFrame> current_frame(const MachineState& s, Tid tid);

void set_override_mask(MachineState& s, Tid tid, SigSet mask);

// Pending-slot occupancy <=> kernel-mask bit, for every thread and signo.
bool queue_consistent(const MachineState& s);
// Every issued frame carries an untrusted PKRU image.
bool frames_untrusted(const MachineState& s);
// Accepted signals are delivered, defaulted, or still pending.
bool signals_conserved(const MachineState& s);

}  // namespace endosim

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

// The nested monitor's syscall path: classification, argument screening,
// locking, and the file / mapping / process virtualization handlers.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "endosim/formal.hpp"
#include "endosim/machine.hpp"

namespace endosim {

// ---------------------------------------------------------------------------
// Classification.

enum class Handler { File, Mem, Proc, Signal, Domain };

const char* to_string(Handler h);

struct SyscallClass {
  enum class Kind { Passthrough, Virtualized, Denied };
  Kind kind = Kind::Denied;
  Handler handler = Handler::File;  // meaningful for Virtualized only

  friend bool operator==(const SyscallClass&, const SyscallClass&) = default;
};

std::string to_string(const SyscallClass& c);

class UnknownSyscall : public std::runtime_error {
 public:
  explicit UnknownSyscall(const std::string& name)
      : std::runtime_error("unknown syscall: " + name) {}
};

class SyscallTableError : public std::runtime_error {
 public:
  SyscallTableError(int line, const std::string& msg)
      : std::runtime_error("syscall table line " + std::to_string(line) +
                           ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

using SyscallTable = std::map<std::string, SyscallClass, std::less<>>;

// Line format: `<name> <passthrough|virt:<handler>|deny>`, '#' comments.
SyscallTable parse_syscall_table(std::string_view text);

// The table compiled into the monitor; config/syscalls.tbl mirrors it.
std::string_view builtin_syscall_table_text();
const SyscallTable& builtin_syscall_table();

// Throws UnknownSyscall for names outside the table.
SyscallClass classify(std::string_view name);

// ---------------------------------------------------------------------------
// Flag constants used by argument encodings (Linux values).

namespace sysflag {
inline constexpr std::int64_t kProtRead = 0x1;
inline constexpr std::int64_t kProtWrite = 0x2;
inline constexpr std::int64_t kProtExec = 0x4;
inline constexpr std::int64_t kMapShared = 0x01;
inline constexpr std::int64_t kMapPrivate = 0x02;
inline constexpr std::int64_t kMapFixed = 0x10;
inline constexpr std::int64_t kMapAnonymous = 0x20;
inline constexpr std::int64_t kCloneVm = 0x00000100;
inline constexpr std::int64_t kCloneThread = 0x00010000;
inline constexpr std::int64_t kPrGetSeccomp = 21;
inline constexpr std::int64_t kPrSetSeccomp = 22;
}  // namespace sysflag

std::int64_t prot_bits(PermSet p);
PermSet perms_from_prot(std::int64_t prot);

// ---------------------------------------------------------------------------
// Argument screening.

ArgSnapshot screen_args(const MachineState& s, const SyscallRequest& req,
                        DomainId caller);

// ---------------------------------------------------------------------------
// Dispatch. A syscall runs through four phases: Enter (gate entry), Screen
// (copy and check pointer arguments, take locks), Handle, Exit (release
// locks, gate exit, pending signal delivery). dispatch() runs all of them;
// begin_syscall()/step_syscall() expose them one at a time for the
// interleaving explorer.

SyscallResult dispatch(MachineState& s, const SyscallRequest& req);

Transition syscall_transition(SyscallRequest req);

// Installs the call as the thread's in-flight syscall. Returns a result
// right away (and installs nothing) when the call never reaches the gate:
// the thread is not running untrusted code or is already mid-call.
std::optional<SyscallResult> begin_syscall(MachineState& s,
                                          const SyscallRequest& req);

struct StepOutcome {
  enum class Kind { Progressed, Blocked, Completed };
  Kind kind = Kind::Progressed;
  Phase phase = Phase::Enter;  // the phase that ran (or would have run)
  SyscallResult result;        // valid when Completed
};

StepOutcome step_syscall(MachineState& s, Tid tid);

// True if the thread's next phase cannot run because a lock it needs is
// held by another thread.
bool syscall_blocked(const MachineState& s, Tid tid);

// ---------------------------------------------------------------------------
// Handlers. They run with the monitor's authority: they consult only the
// snapshot and must leave the state untouched when they deny.

SyscallResult file_ops(MachineState& s, const InFlight& call);
SyscallResult mem_ops(MachineState& s, const InFlight& call);
SyscallResult proc_ops(MachineState& s, const InFlight& call);
SyscallResult passthrough_ops(MachineState& s, const InFlight& call);

// ---------------------------------------------------------------------------
// Code scanning.

struct ScanResult {
  bool ok = true;
  std::size_t offset = 0;

  static ScanResult clean() { return {}; }
  static ScanResult found(std::size_t off) { return {false, off}; }
  friend bool operator==(const ScanResult&, const ScanResult&) = default;
};

inline constexpr std::uint8_t kWrpkru[] = {0x0f, 0x01, 0xef};
inline constexpr std::uint8_t kSyscallOpcode[] = {0x0f, 0x05};

// Flags the first occurrence (at any alignment) of WRPKRU and, if
// `include_syscall` is set, of the syscall opcode.
ScanResult code_scan(std::span<const std::uint8_t> bytes,
                     bool include_syscall = false);

// The monitor's own re-check of the mapping rules, independent of
// safety_check: no W+X page, no executable page with a file backing, no file
// region mapped into pages of two domains. Returns a description of the first
// problem, empty if none.
std::string monitor_invariants(const MachineState& s);

// ---------------------------------------------------------------------------
// Request construction helpers.

SyscallArg scalar(std::int64_t v);
SyscallArg pointer(Addr addr, std::uint64_t len);
SyscallArg path_arg(const MachineState& s, Tid tid, const std::string& path);
SyscallArg path_at(Addr addr, const std::string& path);

SyscallRequest make_request(Tid tid, std::string name,
                            std::vector<SyscallArg> args = {});

// Address of a scratch buffer inside the thread's own stack.
Addr thread_buffer(const MachineState& s, Tid tid);

}  // namespace endosim

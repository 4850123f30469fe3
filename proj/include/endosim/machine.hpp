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

// Data model of the simulated process: memory map, file objects, threads,
// call-gate state, signal state, and endoprocess table. Everything here is a
// plain value type; copying a MachineState yields an independent machine.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "endosim/core.hpp"
#include "endosim/memory.hpp"
#include "endosim/result.hpp"

namespace endosim {

// ---------------------------------------------------------------------------
// Fixed address-space layout. All values are page numbers.
namespace layout {
inline constexpr PageNo kMonitorCode = 0x100;
inline constexpr std::uint64_t kMonitorCodePages = 4;
inline constexpr PageNo kMonitorData = 0x200;
inline constexpr std::uint64_t kMonitorDataPages = 4;
// The secret the attack suite tries to steal lives at the start of monitor
// data; the from-kernel signal flag lives on the next page.
inline constexpr PageNo kSecretPage = kMonitorData;
inline constexpr PageNo kFlagPage = kMonitorData + 1;
inline constexpr PageNo kStubArea = 0x300;
inline constexpr PageNo kTrampolineArea = 0x1000;
inline constexpr PageNo kAppCode = 0x10000;
inline constexpr std::uint64_t kAppCodePages = 4;
inline constexpr PageNo kAppData = 0x10100;
inline constexpr std::uint64_t kAppDataPages = 16;
inline constexpr PageNo kStackArea = 0x20000;
inline constexpr std::uint64_t kStackPages = 4;
inline constexpr PageNo kMmapArea = 0x40000;

inline constexpr Addr kSecretAddr = page_addr(kSecretPage);
inline constexpr Addr kFlagAddr = page_addr(kFlagPage);
inline constexpr Addr kGateEntry = page_addr(kMonitorCode);
inline constexpr Addr kSignalEntry = page_addr(kMonitorCode) + 0x100;
inline constexpr Addr kXcallEntry = page_addr(kMonitorCode) + 0x200;
inline constexpr Addr kAppEntry = page_addr(kAppCode);

// Each thread's untrusted stack; the lowest page doubles as a scratch buffer.
constexpr PageNo stack_base(Tid t) { return kStackArea + t * kStackPages; }
constexpr Addr stack_top(Tid t) {
  return page_addr(stack_base(t) + kStackPages) - 0x80;
}
}  // namespace layout

// ---------------------------------------------------------------------------
// Memory map (M, MP, MF).

enum class PageAttr { Exec, Retired, Shared, DomainPrivate };

const char* to_string(PageAttr a);

struct FileBacking {
  Inode inode = 0;
  std::uint64_t offset = 0;
  friend bool operator==(const FileBacking&, const FileBacking&) = default;
};

struct PageRecord {
  DomainId domain = DomainId::trusted();
  PermSet perms;
  PageAttr attr = PageAttr::DomainPrivate;
  std::optional<FileBacking> backing;
  friend bool operator==(const PageRecord&, const PageRecord&) = default;
};

struct FileMappingRecord {
  Fd fd = -1;
  std::uint64_t off = 0;
  std::uint64_t len = 0;
  Addr addr = 0;
  friend bool operator==(const FileMappingRecord&,
                         const FileMappingRecord&) = default;
};

// ---------------------------------------------------------------------------
// Files (OF, FS).

struct OpenFile {
  Fd fd = -1;
  Inode inode = 0;
  std::string path;
  std::uint64_t offset = 0;
  bool sensitive = false;
  friend bool operator==(const OpenFile&, const OpenFile&) = default;
};

struct InodeRecord {
  std::shared_ptr<const std::vector<std::uint8_t>> content;
  friend bool operator==(const InodeRecord& a, const InodeRecord& b) {
    auto size = [](const InodeRecord& r) { return r.content ? r.content->size() : 0; };
    if (size(a) != size(b)) return false;
    return size(a) == 0 || a.content == b.content || *a.content == *b.content;
  }
};

struct Filesystem {
  std::map<std::string, Inode> paths;
  std::map<Inode, InodeRecord> inodes;
  std::set<Inode> sensitive;
  Inode next_inode = 1;

  std::optional<Inode> lookup(const std::string& path) const;
  Inode create(const std::string& path);
  bool is_sensitive_path(const std::string& path) const;
  friend bool operator==(const Filesystem&, const Filesystem&) = default;
};

// ---------------------------------------------------------------------------
// Syscall requests as they travel through the gate.

struct PointerArg {
  Addr addr = 0;
  std::uint64_t len = 0;
  // Decoded string payload for path-like arguments.
  std::string text;
  friend bool operator==(const PointerArg&, const PointerArg&) = default;
};

using SyscallArg = std::variant<std::int64_t, PointerArg>;

struct SyscallRequest {
  Tid tid = 0;
  std::string name;
  std::vector<SyscallArg> args;
  friend bool operator==(const SyscallRequest&, const SyscallRequest&) = default;
};

enum class ScreenVerdict { Ok, PointsIntoTrusted, PointsIntoForeignDomain };

const char* to_string(ScreenVerdict v);

struct IoVec {
  Addr base = 0;
  std::uint64_t len = 0;
  friend bool operator==(const IoVec&, const IoVec&) = default;
};

// Monitor-owned copies of every pointer argument. Handlers read only these.
struct ArgSnapshot {
  struct Copy {
    std::size_t index = 0;
    std::vector<std::uint8_t> bytes;
    friend bool operator==(const Copy&, const Copy&) = default;
  };
  std::vector<Copy> copies;
  std::vector<IoVec> iov;
  ScreenVerdict verdict = ScreenVerdict::Ok;
  Addr offending = 0;
  friend bool operator==(const ArgSnapshot&, const ArgSnapshot&) = default;
};

enum class Phase { Enter, Screen, Handle, Exit, Done };

const char* to_string(Phase p);

struct InFlight {
  SyscallRequest req;
  Phase next = Phase::Enter;
  DomainId caller = DomainId::untrusted(0);
  DomainId caller_stack = DomainId::untrusted(0);
  Addr caller_sp = 0;
  ArgSnapshot snapshot;
  // Inode each fd argument referred to when it was screened.
  std::map<Fd, Inode> screened_fds;
  SyscallResult result;
  bool settled = false;  // result decided before Handle (screen denial)
  std::vector<Fd> held_fds;
  bool holds_mapping = false;
  bool holds_signal = false;
  friend bool operator==(const InFlight& a, const InFlight& b) {
    return a.req == b.req && a.next == b.next && a.caller == b.caller &&
           a.caller_stack == b.caller_stack && a.caller_sp == b.caller_sp &&
           a.snapshot == b.snapshot && a.screened_fds == b.screened_fds &&
           a.settled == b.settled &&
           a.held_fds == b.held_fds && a.holds_mapping == b.holds_mapping &&
           a.holds_signal == b.holds_signal &&
           a.result.status == b.result.status &&
           a.result.value == b.result.value &&
           a.result.reason == b.result.reason &&
           a.result.pkru_transitions == b.result.pkru_transitions;
  }
};

// ---------------------------------------------------------------------------
// Signals.

inline constexpr int kMaxSignal = 64;
inline constexpr int kSigInt = 2;
inline constexpr int kSigIll = 4;
inline constexpr int kSigKill = 9;
inline constexpr int kSigUsr1 = 10;
inline constexpr int kSigSegv = 11;
inline constexpr int kSigUsr2 = 12;
inline constexpr int kSigChld = 17;
inline constexpr int kSigCont = 18;
inline constexpr int kSigStop = 19;
inline constexpr int kSigUrg = 23;
inline constexpr int kSigWinch = 28;
inline constexpr int kSigSys = 31;

using SigSet = std::uint64_t;

constexpr SigSet sig_bit(int signo) { return SigSet{1} << (signo - 1); }

struct SigAction {
  std::optional<Addr> handler;  // nullopt = default action
  SigSet mask = 0;
  friend bool operator==(const SigAction&, const SigAction&) = default;
};

struct SigInfo {
  int signo = 0;
  std::uint64_t seq = 0;
  friend bool operator==(const SigInfo&, const SigInfo&) = default;
};

struct SigFrame {
  int signo = 0;
  Addr handler = 0;
  Addr frame_addr = 0;
  bool on_altstack = false;
  // Saved interrupted context.
  Addr rip = 0;
  Addr rsp = 0;
  std::int64_t rax = 0;
  DomainId domain = DomainId::untrusted(0);
  Pkru pkru;
  SigSet saved_user_mask = 0;
  std::uint64_t token = 0;
  friend bool operator==(const SigFrame&, const SigFrame&) = default;
};

struct AltStack {
  Addr base = 0;
  std::uint64_t len = 0;
  friend bool operator==(const AltStack&, const AltStack&) = default;
};

struct ThreadSignals {
  SigSet user_mask = 0;
  // Bit set while the monitor's slot for that signo is occupied; the kernel
  // model then holds further instances itself.
  SigSet kernel_mask = 0;
  SigSet kernel_held = 0;
  std::map<int, SigInfo> slots;
  std::optional<SigSet> override_mask;
  std::optional<AltStack> altstack;
  // Monitor-held copies of the frames handed to untrusted handlers.
  std::vector<SigFrame> issued;
  friend bool operator==(const ThreadSignals&, const ThreadSignals&) = default;
};

struct SignalState {
  std::map<int, SigAction> table;
  // Kernel-side registration: always the monitor entrypoint.
  std::map<int, Addr> kernel_handlers;
  std::uint64_t from_kernel_flag = 0;
  bool in_entry = false;
  std::uint64_t next_seq = 1;
  std::uint64_t accepted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t forged_rejected = 0;
  // Instances the kernel model coalesced because one was already held.
  std::uint64_t coalesced = 0;
  // Deliveries resolved by the default action (ignored or fatal).
  std::uint64_t defaulted = 0;
  bool terminated = false;
  friend bool operator==(const SignalState&, const SignalState&) = default;
};

// ---------------------------------------------------------------------------
// Threads.

struct ReturnFrame {
  DomainId caller = DomainId::untrusted(0);
  Addr return_addr = 0;
  Addr caller_sp = 0;
  DomainId caller_stack_domain = DomainId::untrusted(0);
  bool caller_sig_blocked = false;
  friend bool operator==(const ReturnFrame&, const ReturnFrame&) = default;
};

struct ThreadCtx {
  Tid tid = 0;
  DomainId current_domain = DomainId::trusted();
  Pkru pkru = Pkru::all();
  bool in_monitor = true;
  bool sig_blocked = false;
  DomainId stack_domain = DomainId::trusted();
  Addr stack_ptr = 0;
  Addr rip = 0;
  std::int64_t rax = 0;
  std::vector<ReturnFrame> return_chain;
  ThreadSignals sig;
  std::optional<InFlight> inflight;
  friend bool operator==(const ThreadCtx&, const ThreadCtx&) = default;
};

// ---------------------------------------------------------------------------
// Call gate (nexpoline).

enum class FilterKind { Seccomp, Dispatch };
enum class GateKind { Random, Ephemeral, Cet };

struct GateConfig {
  FilterKind filter = FilterKind::Seccomp;
  GateKind kind = GateKind::Ephemeral;
  std::uint32_t pages = 1;
  std::uint32_t rerand_freq = 1;
  bool tsx_enabled = true;
  friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

enum class ByteClass { Int3, SyscallByte, RetByte };

const char* to_string(ByteClass b);

inline constexpr std::uint32_t kGadgetLen = 3;

struct ThreadGate {
  PageNo region_base = 0;
  std::uint32_t pages = 1;
  std::optional<std::uint32_t> gadget_at;
  std::uint32_t rerand_counter = 0;
  std::uint64_t rerandomizations = 0;
  bool filter_installed = false;
  // CET: hardware shadow stack and the regular-stack return slot it guards.
  std::vector<Addr> shadow_stack;
  std::vector<Addr> return_slots;
  friend bool operator==(const ThreadGate&, const ThreadGate&) = default;
};

struct TrampolineState {
  GateConfig config;
  std::map<Tid, ThreadGate> threads;
  std::set<Addr> endbr;
  bool queen_present = false;
  PageNo next_region = layout::kTrampolineArea;
  std::mt19937_64 rng;
  friend bool operator==(const TrampolineState&,
                         const TrampolineState&) = default;
};

// ---------------------------------------------------------------------------
// Endoprocesses.

struct Endoprocess {
  DomainId id = DomainId::untrusted(0);
  Ring ring = Ring::Unbox;
  std::vector<PageNo> code_pages;
  std::vector<PageNo> data_pages;
  std::vector<PageNo> stack_pages;
  std::vector<Addr> entrypoints;
  std::vector<Addr> stubs;
  Addr xcall_stub = 0;
  Addr stack_top = 0;
  friend bool operator==(const Endoprocess&, const Endoprocess&) = default;
};

struct GrantRecord {
  PageNo page = 0;
  DomainId owner = DomainId::untrusted(0);
  DomainId grantee = DomainId::untrusted(0);
  bool active = false;
  friend bool operator==(const GrantRecord&, const GrantRecord&) = default;
};

struct DomainTable {
  std::map<int, Endoprocess> endoprocesses;  // keyed by untrusted index
  std::vector<GrantRecord> grants;
  bool exec_locked = false;
  std::size_t xcall_arg_slots = 6;
  friend bool operator==(const DomainTable&, const DomainTable&) = default;
};

// ---------------------------------------------------------------------------
// Locks.

struct LockTable {
  std::map<Fd, Tid> per_fd;
  std::optional<Tid> mapping_global;
  std::optional<Tid> signal_global;
  friend bool operator==(const LockTable&, const LockTable&) = default;
};

struct MachineState;

struct ChildProcess {
  int pid = 0;
  bool from_vfork = false;
  std::shared_ptr<const MachineState> state;
  friend bool operator==(const ChildProcess& a, const ChildProcess& b) {
    return a.pid == b.pid && a.from_vfork == b.from_vfork && a.state == b.state;
  }
};

struct MonitorOptions {
  // Copy pointer arguments into monitor storage before use. Disabling it
  // exists only to show that the interleaving explorer finds the race.
  bool copy_args = true;
  // Per-fd locks; off only for the matching negative test.
  bool fd_locks = true;
  friend bool operator==(const MonitorOptions&, const MonitorOptions&) = default;
};

// ---------------------------------------------------------------------------

struct MachineState {
  int pid = 1000;
  std::map<PageNo, PageRecord> pages;
  std::vector<FileMappingRecord> file_mappings;
  std::map<Fd, OpenFile> open_files;
  Filesystem fs;
  std::map<Tid, ThreadCtx> threads;
  TrampolineState trampoline;
  SignalState signals;
  LockTable locks;
  DomainTable domains;
  ByteMemory memory;
  std::vector<ChildProcess> children;
  MonitorOptions options;
  PageNo next_mmap = layout::kMmapArea;
  Tid next_tid = 1;
  int next_pid = 1001;
  // Audit: times a handler consumed memory its caller could not access.
  std::uint64_t exposures = 0;

  ThreadCtx& thread(Tid tid);
  const ThreadCtx& thread(Tid tid) const;
  const PageRecord* page(PageNo p) const;

  friend bool operator==(const MachineState&, const MachineState&) = default;
};

// The untrusted domain a thread acts for: its caller while it sits in the
// monitor on behalf of a syscall, otherwise the domain it runs in.
DomainId acting_domain(const ThreadCtx& t);

// Ring of a domain under the nested-boxing order.
Ring ring_of(const MachineState& s, DomainId d);

// PKRU image a thread running in `d` carries.
Pkru pkru_for(DomainId d);

}  // namespace endosim

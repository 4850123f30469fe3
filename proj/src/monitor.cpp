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

#include "endosim/monitor.hpp"

#include <algorithm>
#include <sstream>

#include "endosim/domains.hpp"
#include "endosim/nexpoline.hpp"
#include "endosim/signals.hpp"
#include "monitor_internal.hpp"

namespace endosim {

namespace {

constexpr std::string_view kBuiltinTable = R"(# name               class
read                 virt:file
write                virt:file
pread64              virt:file
pwritev              virt:file
readv                virt:file
open                 virt:file
openat               virt:file
close                virt:file
lseek                virt:file
dup                  virt:file
dup2                 virt:file
link                 virt:file
symlink              virt:file
unlink               virt:file
mmap                 virt:mem
mprotect             virt:mem
munmap               virt:mem
mremap               virt:mem
madvise              virt:mem
fork                 virt:proc
vfork                virt:proc
clone                virt:proc
execve               virt:proc
process_vm_readv     virt:proc
process_vm_writev    virt:proc
prctl                virt:proc
rt_sigaction         virt:signal
rt_sigprocmask       virt:signal
rt_sigreturn         virt:signal
sigaltstack          virt:signal
iv_create_domain     virt:domain
getpid               passthrough
getppid              passthrough
gettid               passthrough
clock_gettime        passthrough
nanosleep            passthrough
sched_yield          passthrough
uname                passthrough
ioctl                passthrough
sendto               passthrough
rename               passthrough
kill                 passthrough
pkey_alloc           deny
pkey_free            deny
pkey_mprotect        deny
modify_ldt           deny
rt_tgsigqueueinfo    deny
seccomp              deny
ptrace               deny
shmat                deny
shmdt                deny
userfaultfd          deny
)";

bool is_one_of(std::string_view name, std::initializer_list<std::string_view> set) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

bool has_grant(const MachineState& s, PageNo p, DomainId d) {
  for (const GrantRecord& g : s.domains.grants) {
    if (g.active && g.page == p && g.grantee == d) return true;
  }
  return false;
}

// Checks [a, a+len) against the caller; records the first offending address.
bool screen_range(const MachineState& s, DomainId caller, Addr a,
                  std::uint64_t len, ArgSnapshot& snap) {
  if (len == 0) return true;
  if (a + (len - 1) < a) {
    snap.verdict = ScreenVerdict::PointsIntoTrusted;
    snap.offending = a;
    return false;
  }
  const PageNo first = page_of(a);
  const PageNo last = page_of(a + len - 1);
  for (auto it = s.pages.lower_bound(first);
       it != s.pages.end() && it->first <= last; ++it) {
    const auto& [p, rec] = *it;
    if (rec.domain == caller || has_grant(s, p, caller)) continue;
    snap.verdict = rec.domain.is_trusted()
                       ? ScreenVerdict::PointsIntoTrusted
                       : ScreenVerdict::PointsIntoForeignDomain;
    snap.offending = std::max(a, page_addr(p));
    return false;
  }
  return true;
}

bool has_iov(std::string_view name) { return is_one_of(name, {"pwritev", "readv"}); }

// Fd arguments: indices the call uses, and whether each must be open.
struct FdArg {
  std::size_t index;
  bool must_be_open;
};

std::vector<FdArg> fd_args(const SyscallRequest& req) {
  const std::string& n = req.name;
  if (is_one_of(n, {"read", "write", "pread64", "pwritev", "readv", "lseek",
                    "close", "dup", "ioctl", "sendto"})) {
    return {{0, true}};
  }
  if (n == "dup2") return {{0, true}, {1, false}};
  if (n == "mmap" && req.args.size() > 4) {
    const auto* flags = std::get_if<std::int64_t>(&req.args[3]);
    if (flags && !(*flags & sysflag::kMapAnonymous)) return {{4, true}};
  }
  return {};
}

std::optional<Fd> fd_value(const SyscallRequest& req, std::size_t i) {
  if (i >= req.args.size()) return std::nullopt;
  if (const auto* v = std::get_if<std::int64_t>(&req.args[i])) {
    return static_cast<Fd>(*v);
  }
  return std::nullopt;
}

struct LockNeeds {
  std::vector<Fd> fds;
  bool mapping = false;
  bool signal = false;
};

LockNeeds lock_needs(const MachineState& s, const SyscallRequest& req) {
  LockNeeds n;
  if (s.options.fd_locks) {
    for (const FdArg& a : fd_args(req)) {
      if (auto fd = fd_value(req, a.index)) n.fds.push_back(*fd);
    }
    std::sort(n.fds.begin(), n.fds.end());
    n.fds.erase(std::unique(n.fds.begin(), n.fds.end()), n.fds.end());
  }
  n.mapping = is_one_of(req.name, {"mmap", "mprotect", "munmap", "mremap",
                                   "madvise", "fork", "vfork", "clone",
                                   "execve", "iv_create_domain"});
  n.signal = is_one_of(req.name, {"rt_sigaction", "rt_sigprocmask",
                                  "rt_sigreturn", "sigaltstack"});
  return n;
}

bool lock_conflict(const MachineState& s, Tid tid, const LockNeeds& n) {
  for (Fd fd : n.fds) {
    auto it = s.locks.per_fd.find(fd);
    if (it != s.locks.per_fd.end() && it->second != tid) return true;
  }
  if (n.mapping && s.locks.mapping_global && *s.locks.mapping_global != tid) {
    return true;
  }
  if (n.signal && s.locks.signal_global && *s.locks.signal_global != tid) {
    return true;
  }
  return false;
}

void release_locks(MachineState& s, Tid tid, InFlight& f) {
  for (Fd fd : f.held_fds) {
    auto it = s.locks.per_fd.find(fd);
    if (it != s.locks.per_fd.end() && it->second == tid) s.locks.per_fd.erase(it);
  }
  f.held_fds.clear();
  if (f.holds_mapping && s.locks.mapping_global == tid) s.locks.mapping_global.reset();
  if (f.holds_signal && s.locks.signal_global == tid) s.locks.signal_global.reset();
  f.holds_mapping = f.holds_signal = false;
}

DenyReason screen_reason(ScreenVerdict v) {
  return v == ScreenVerdict::PointsIntoTrusted
             ? DenyReason::PointsIntoTrusted
             : DenyReason::PointsIntoForeignDomain;
}

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

SyscallResult signal_ops(MachineState& s, const InFlight& call) {
  using detail::int_arg;
  const Tid tid = call.req.tid;
  const std::string& n = call.req.name;
  if (n == "rt_sigaction") {
    auto signo = int_arg(call, 0);
    if (!signo) return SyscallResult::denied(DenyReason::InvalidArgument);
    auto h = int_arg(call, 1).value_or(0);
    auto mask = int_arg(call, 2).value_or(0);
    std::optional<Addr> handler;
    if (h != 0) handler = static_cast<Addr>(h);
    return vsigaction(s, tid, static_cast<int>(*signo), handler,
                      static_cast<SigSet>(mask));
  }
  if (n == "rt_sigprocmask") {
    auto how = int_arg(call, 0);
    auto set = int_arg(call, 1);
    if (!how || !set) return SyscallResult::denied(DenyReason::InvalidArgument);
    return vsigprocmask(s, tid, static_cast<int>(*how), static_cast<SigSet>(*set));
  }
  if (n == "rt_sigreturn") {
    auto f = current_frame(s, tid);
    if (!f) return SyscallResult::denied(DenyReason::NoFrame);
    // The frame the caller presents is whatever sits at its stack pointer.
    SigFrame presented = *f;
    presented.frame_addr = call.caller_sp;
    presented.token = s.memory.load64(call.caller_sp);
    const std::uint64_t image = s.memory.load64(call.caller_sp + 8);
    presented.pkru.read = static_cast<std::uint16_t>(image & 0xffff);
    presented.pkru.write = static_cast<std::uint16_t>((image >> 16) & 0xffff);
    return vsigreturn(s, tid, presented);
  }
  if (n == "sigaltstack") {
    auto base = int_arg(call, 0);
    auto len = int_arg(call, 1);
    if (!base || !len) return SyscallResult::denied(DenyReason::InvalidArgument);
    return vsigaltstack(s, tid, static_cast<Addr>(*base),
                        static_cast<std::uint64_t>(*len));
  }
  return SyscallResult::denied(DenyReason::UnknownSyscall, n);
}

SyscallResult domain_ops(MachineState& s, const InFlight& call) {
  using detail::int_arg;
  auto code = int_arg(call, 0);
  auto ncode = int_arg(call, 1);
  auto data = int_arg(call, 2);
  auto ndata = int_arg(call, 3);
  auto nentry = int_arg(call, 4);
  if (!code || !ncode || !data || !ndata || !nentry || *ncode <= 0 ||
      *ndata < 0 || *nentry <= 0 || *ncode > 64 || *ndata > 64 ||
      *nentry > 64 || !page_aligned(*code) || !page_aligned(*data)) {
    return SyscallResult::denied(DenyReason::InvalidArgument);
  }
  DomainSpec spec;
  for (std::int64_t i = 0; i < *ncode; ++i) spec.code_pages.push_back(page_of(*code) + i);
  for (std::int64_t i = 0; i < *ndata; ++i) spec.data_pages.push_back(page_of(*data) + i);
  for (std::int64_t i = 0; i < *nentry; ++i) {
    spec.entrypoints.push_back(static_cast<Addr>(*code) + 0x40 * i);
  }
  spec.ring = int_arg(call, 5).value_or(2) == 0 ? Ring::Sandbox : Ring::Safebox;
  spec.make_stubs = int_arg(call, 6).value_or(1) != 0;
  return iv_create_domain(s, call.req.tid, spec);
}

SyscallResult run_handler(MachineState& s, const InFlight& call) {
  const SyscallClass c = classify(call.req.name);
  switch (c.kind) {
    case SyscallClass::Kind::Passthrough:
      return passthrough_ops(s, call);
    case SyscallClass::Kind::Denied:
      return SyscallResult::denied(DenyReason::ForbiddenSyscall);
    case SyscallClass::Kind::Virtualized:
      break;
  }
  switch (c.handler) {
    case Handler::File: return file_ops(s, call);
    case Handler::Mem: return mem_ops(s, call);
    case Handler::Proc: return proc_ops(s, call);
    case Handler::Signal: return signal_ops(s, call);
    case Handler::Domain: return domain_ops(s, call);
  }
  return SyscallResult::denied(DenyReason::UnknownSyscall);
}

void settle(InFlight& f, SyscallResult r) {
  r.pkru_transitions = f.result.pkru_transitions;
  r.lock_waits = f.result.lock_waits;
  f.result = std::move(r);
  f.settled = true;
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(Handler h) {
  switch (h) {
    case Handler::File: return "file";
    case Handler::Mem: return "mem";
    case Handler::Proc: return "proc";
    case Handler::Signal: return "signal";
    case Handler::Domain: return "domain";
  }
  return "?";
}

std::string to_string(const SyscallClass& c) {
  switch (c.kind) {
    case SyscallClass::Kind::Passthrough: return "passthrough";
    case SyscallClass::Kind::Denied: return "deny";
    case SyscallClass::Kind::Virtualized:
      return std::string("virt:") + to_string(c.handler);
  }
  return "?";
}

SyscallTable parse_syscall_table(std::string_view text) {
  SyscallTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name, cls, extra;
    if (!(ls >> name)) continue;
    if (!(ls >> cls)) throw SyscallTableError(lineno, "missing class for " + name);
    if (ls >> extra) throw SyscallTableError(lineno, "trailing token '" + extra + "'");
    SyscallClass c;
    if (cls == "passthrough") {
      c.kind = SyscallClass::Kind::Passthrough;
    } else if (cls == "deny") {
      c.kind = SyscallClass::Kind::Denied;
    } else if (cls.rfind("virt:", 0) == 0) {
      c.kind = SyscallClass::Kind::Virtualized;
      const std::string h = cls.substr(5);
      if (h == "file") c.handler = Handler::File;
      else if (h == "mem") c.handler = Handler::Mem;
      else if (h == "proc") c.handler = Handler::Proc;
      else if (h == "signal") c.handler = Handler::Signal;
      else if (h == "domain") c.handler = Handler::Domain;
      else throw SyscallTableError(lineno, "unknown handler '" + h + "'");
    } else {
      throw SyscallTableError(lineno, "unknown class '" + cls + "'");
    }
    if (!table.emplace(name, c).second) {
      throw SyscallTableError(lineno, "duplicate entry " + name);
    }
  }
  return table;
}

std::string_view builtin_syscall_table_text() { return kBuiltinTable; }

const SyscallTable& builtin_syscall_table() {
  static const SyscallTable table = parse_syscall_table(kBuiltinTable);
  return table;
}

SyscallClass classify(std::string_view name) {
  const SyscallTable& t = builtin_syscall_table();
  auto it = t.find(name);
  if (it == t.end()) throw UnknownSyscall(std::string(name));
  return it->second;
}

std::int64_t prot_bits(PermSet p) {
  return (p.r ? sysflag::kProtRead : 0) | (p.w ? sysflag::kProtWrite : 0) |
         (p.x ? sysflag::kProtExec : 0);
}

PermSet perms_from_prot(std::int64_t prot) {
  return {(prot & sysflag::kProtRead) != 0, (prot & sysflag::kProtWrite) != 0,
          (prot & sysflag::kProtExec) != 0};
}

ArgSnapshot screen_args(const MachineState& s, const SyscallRequest& req,
                        DomainId caller) {
  ArgSnapshot snap;
  for (std::size_t i = 0; i < req.args.size(); ++i) {
    const auto* p = std::get_if<PointerArg>(&req.args[i]);
    if (!p) continue;
    if (!screen_range(s, caller, p->addr, p->len, snap)) return snap;
    snap.copies.push_back(
        {i, s.memory.read(p->addr, std::min(p->len, detail::kMaxArgLen))});
    if (i != 1 || !has_iov(req.name)) continue;

    std::optional<std::int64_t> count;
    if (req.args.size() > 2) {
      if (const auto* c = std::get_if<std::int64_t>(&req.args[2])) count = *c;
    }
    snap.iov = detail::decode_iov(snap.copies.back().bytes, count);
    for (std::size_t k = 0; k < snap.iov.size(); ++k) {
      const IoVec& v = snap.iov[k];
      if (!screen_range(s, caller, v.base, v.len, snap)) return snap;
      if (req.name == "pwritev") {
        snap.copies.push_back({detail::kIovCopyBase + k,
                               s.memory.read(v.base, std::min(v.len, detail::kMaxArgLen))});
      }
    }
  }
  return snap;
}

// ---------------------------------------------------------------------------
// Dispatch.

std::optional<SyscallResult> begin_syscall(MachineState& s,
                                          const SyscallRequest& req) {
  ThreadCtx& t = s.thread(req.tid);
  if (s.signals.terminated) {
    return SyscallResult::denied(DenyReason::NotUntrusted, "process terminated");
  }
  if (t.inflight) {
    return SyscallResult::denied(DenyReason::InvalidArgument, "call in flight");
  }
  if (!t.current_domain.is_untrusted() || t.in_monitor) {
    return SyscallResult::denied(DenyReason::NotUntrusted);
  }
  InFlight f;
  f.req = req;
  f.caller = t.current_domain;
  f.caller_stack = t.stack_domain;
  f.caller_sp = t.stack_ptr;
  t.inflight = std::move(f);
  return std::nullopt;
}

bool syscall_blocked(const MachineState& s, Tid tid) {
  const ThreadCtx& t = s.thread(tid);
  if (!t.inflight || t.inflight->next != Phase::Screen || t.inflight->settled) {
    return false;
  }
  return lock_conflict(s, tid, lock_needs(s, t.inflight->req));
}

StepOutcome step_syscall(MachineState& s, Tid tid) {
  ThreadCtx& t = s.thread(tid);
  if (!t.inflight) throw std::logic_error("step_syscall: nothing in flight");
  InFlight& f = *t.inflight;
  StepOutcome out;
  out.phase = f.next;

  switch (f.next) {
    case Phase::Enter: {
      gate_enter(s, tid);
      f.result.pkru_transitions = 1;
      try {
        const SyscallClass c = classify(f.req.name);
        if (c.kind == SyscallClass::Kind::Denied) {
          settle(f, SyscallResult::denied(DenyReason::ForbiddenSyscall, f.req.name));
        }
      } catch (const UnknownSyscall&) {
        settle(f, SyscallResult::denied(DenyReason::UnknownSyscall, f.req.name));
      }
      f.next = Phase::Screen;
      return out;
    }

    case Phase::Screen: {
      if (!f.settled) {
        const LockNeeds needs = lock_needs(s, f.req);
        if (lock_conflict(s, tid, needs)) {
          ++f.result.lock_waits;
          out.kind = StepOutcome::Kind::Blocked;
          return out;
        }
        for (const SyscallArg& a : f.req.args) {
          const auto* p = std::get_if<PointerArg>(&a);
          if (p && p->len > detail::kMaxArgLen) {
            settle(f, SyscallResult::denied(DenyReason::InvalidArgument,
                                            "argument too large"));
            break;
          }
        }
        if (!f.settled) {
          f.snapshot = screen_args(s, f.req, f.caller);
          if (f.snapshot.verdict != ScreenVerdict::Ok) {
            settle(f, SyscallResult::denied(screen_reason(f.snapshot.verdict),
                                            hex(f.snapshot.offending)));
          }
        }
        if (!f.settled) {
          for (const FdArg& a : fd_args(f.req)) {
            auto fd = fd_value(f.req, a.index);
            if (!fd) continue;
            auto it = s.open_files.find(*fd);
            if (it != s.open_files.end()) {
              f.screened_fds[*fd] = it->second.inode;
            } else if (a.must_be_open) {
              settle(f, SyscallResult::denied(DenyReason::BadFd));
              break;
            }
          }
        }
        if (!f.settled) {
          for (Fd fd : needs.fds) {
            s.locks.per_fd[fd] = tid;
            f.held_fds.push_back(fd);
          }
          if (needs.mapping) {
            s.locks.mapping_global = tid;
            f.holds_mapping = true;
          }
          if (needs.signal) {
            s.locks.signal_global = tid;
            f.holds_signal = true;
          }
        }
      }
      f.next = Phase::Handle;
      return out;
    }

    case Phase::Handle: {
      if (!f.settled) {
        const InFlight call = f;
        MachineState before = s;
        SyscallResult r = run_handler(s, call);
        if (!r.is_ok()) {
          // Handlers validate before they mutate; the rollback is a backstop.
          const std::uint64_t exposures = s.exposures;
          s = std::move(before);
          s.exposures = exposures;
        }
        InFlight& g = *s.thread(tid).inflight;
        r.pkru_transitions = g.result.pkru_transitions;
        r.lock_waits = g.result.lock_waits;
        g.result = std::move(r);
        g.next = Phase::Exit;
      } else {
        f.next = Phase::Exit;
      }
      return out;
    }

    case Phase::Exit: {
      release_locks(s, tid, f);
      SyscallResult r = f.result;
      const DomainId caller = f.caller;
      const DomainId caller_stack = f.caller_stack;
      const GateFault gf = gate_exit(s, tid, caller);
      ThreadCtx& u = s.thread(tid);
      u.stack_domain = caller_stack;
      ++r.pkru_transitions;
      if (gf == GateFault::CetControlFault) {
        SyscallResult fault = SyscallResult::fault("cet control fault on gate return");
        fault.pkru_transitions = r.pkru_transitions;
        fault.lock_waits = r.lock_waits;
        r = fault;
        // #CP is fatal.
        s.signals.terminated = true;
      } else if (gf == GateFault::GadgetVisible) {
        r.detail = "gadget visible after gate exit";
      }
      if (r.is_ok()) u.rax = r.value;
      u.inflight.reset();
      deliver_pending(s, tid);
      out.kind = StepOutcome::Kind::Completed;
      out.result = std::move(r);
      return out;
    }

    case Phase::Done:
      break;
  }
  throw std::logic_error("step_syscall: bad phase");
}

SyscallResult dispatch(MachineState& s, const SyscallRequest& req) {
  if (auto r = begin_syscall(s, req)) return *r;
  for (;;) {
    StepOutcome o = step_syscall(s, req.tid);
    if (o.kind == StepOutcome::Kind::Completed) return o.result;
    if (o.kind == StepOutcome::Kind::Blocked) {
      // Only possible when another thread is parked mid-call, which a plain
      // dispatch never leaves behind.
      throw std::logic_error("dispatch: " + req.name + " blocked on a lock");
    }
  }
}

Transition syscall_transition(SyscallRequest req) {
  std::string name = req.name;
  return {std::move(name),
          [req = std::move(req)](MachineState& s) { return dispatch(s, req); }};
}

// ---------------------------------------------------------------------------

ScanResult code_scan(std::span<const std::uint8_t> bytes, bool include_syscall) {
  auto first = [&](std::span<const std::uint8_t> pat) {
    auto it = std::search(bytes.begin(), bytes.end(), pat.begin(), pat.end());
    return static_cast<std::size_t>(it - bytes.begin());
  };
  std::size_t at = first(kWrpkru);
  if (include_syscall) at = std::min(at, first(kSyscallOpcode));
  if (at >= bytes.size()) return ScanResult::clean();
  return ScanResult::found(at);
}

std::string monitor_invariants(const MachineState& s) {
  for (const auto& [p, rec] : s.pages) {
    if (rec.perms.w && rec.perms.x) return "W+X page " + hex(page_addr(p));
    if (rec.attr == PageAttr::Exec && rec.backing) {
      return "file-backed exec page " + hex(page_addr(p));
    }
  }
  auto inode_of = [&](Fd fd) -> std::optional<Inode> {
    auto it = s.open_files.find(fd);
    if (it == s.open_files.end()) return std::nullopt;
    return it->second.inode;
  };
  const auto& mf = s.file_mappings;
  for (std::size_t i = 0; i < mf.size(); ++i) {
    for (std::size_t j = i + 1; j < mf.size(); ++j) {
      const bool same = mf[i].fd == mf[j].fd ||
                        (inode_of(mf[i].fd) && inode_of(mf[i].fd) == inode_of(mf[j].fd));
      if (!same || !offset_intersects(mf[i], mf[j])) continue;
      const PageRecord* a = s.page(page_of(mf[i].addr));
      const PageRecord* b = s.page(page_of(mf[j].addr));
      if (a && b && a->domain != b->domain) {
        return "file region aliased at " + hex(mf[i].addr) + " and " + hex(mf[j].addr);
      }
    }
  }
  return {};
}

// ---------------------------------------------------------------------------

SyscallArg scalar(std::int64_t v) { return v; }

SyscallArg pointer(Addr addr, std::uint64_t len) { return PointerArg{addr, len, {}}; }

SyscallArg path_at(Addr addr, const std::string& path) {
  return PointerArg{addr, path.size() + 1, path};
}

SyscallArg path_arg(const MachineState& s, Tid tid, const std::string& path) {
  return path_at(thread_buffer(s, tid) + 0x800, path);
}

SyscallRequest make_request(Tid tid, std::string name, std::vector<SyscallArg> args) {
  return {tid, std::move(name), std::move(args)};
}

Addr thread_buffer(const MachineState&, Tid tid) {
  return page_addr(layout::stack_base(tid));
}

// ---------------------------------------------------------------------------

namespace detail {

std::optional<std::int64_t> int_arg(const InFlight& c, std::size_t i) {
  if (i >= c.req.args.size()) return std::nullopt;
  if (const auto* v = std::get_if<std::int64_t>(&c.req.args[i])) return *v;
  return static_cast<std::int64_t>(std::get<PointerArg>(c.req.args[i]).addr);
}

const PointerArg* ptr_arg(const InFlight& c, std::size_t i) {
  if (i >= c.req.args.size()) return nullptr;
  return std::get_if<PointerArg>(&c.req.args[i]);
}

bool caller_can(const MachineState& s, const InFlight& c, Addr a,
                std::uint64_t len, bool write) {
  if (len == 0) return true;
  if (a + (len - 1) < a) return false;
  const Pkru pkru = pkru_for(c.caller);
  for (PageNo p = page_of(a); p <= page_of(a + len - 1); ++p) {
    if (!user_can_access(s, c.caller, pkru, p, write)) return false;
  }
  return true;
}

namespace {

std::vector<std::uint8_t> live_read(MachineState& s, const InFlight& c, Addr a,
                                    std::uint64_t len) {
  len = std::min(len, kMaxArgLen);
  if (!caller_can(s, c, a, len, false)) ++s.exposures;
  return s.memory.read(a, len);
}

const ArgSnapshot::Copy* find_copy(const InFlight& c, std::size_t index) {
  for (const auto& copy : c.snapshot.copies) {
    if (copy.index == index) return &copy;
  }
  return nullptr;
}

}  // namespace

std::vector<std::uint8_t> arg_bytes(MachineState& s, const InFlight& c,
                                    std::size_t i) {
  const PointerArg* p = ptr_arg(c, i);
  if (!p) return {};
  if (s.options.copy_args) {
    const auto* copy = find_copy(c, i);
    return copy ? copy->bytes : std::vector<std::uint8_t>{};
  }
  return live_read(s, c, p->addr, p->len);
}

std::vector<IoVec> decode_iov(const std::vector<std::uint8_t>& raw,
                              std::optional<std::int64_t> count) {
  std::size_t n = raw.size() / 16;
  if (count && *count >= 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(*count));
  std::vector<IoVec> out;
  auto word = [&](std::size_t off) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | raw[off + b];
    return v;
  };
  for (std::size_t k = 0; k < n; ++k) out.push_back({word(16 * k), word(16 * k + 8)});
  return out;
}

std::vector<IoVec> arg_iov(MachineState& s, const InFlight& c, std::size_t i) {
  if (s.options.copy_args) return c.snapshot.iov;
  const PointerArg* p = ptr_arg(c, i);
  if (!p) return {};
  return decode_iov(live_read(s, c, p->addr, p->len), int_arg(c, i + 1));
}

std::vector<std::uint8_t> iov_bytes(MachineState& s, const InFlight& c,
                                    std::size_t i, std::size_t k) {
  if (s.options.copy_args) {
    const auto* copy = find_copy(c, kIovCopyBase + k);
    return copy ? copy->bytes : std::vector<std::uint8_t>{};
  }
  const std::vector<IoVec> iov = arg_iov(s, c, i);
  if (k >= iov.size()) return {};
  return live_read(s, c, iov[k].base, iov[k].len);
}

}  // namespace detail

}  // namespace endosim

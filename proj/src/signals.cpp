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
#include "endosim/signals.hpp"

#include <stdexcept>

#include "endosim/formal.hpp"

namespace endosim {

namespace {

constexpr SigSet kUnblockable = sig_bit(kSigKill) | sig_bit(kSigStop);
constexpr std::uint64_t kFrameSize = 0x240;

bool valid_signo(int signo) { return signo >= 1 && signo <= kMaxSignal; }

std::uint64_t frame_token(std::uint64_t seq, int pid) {
  // splitmix64 finalizer over the issue sequence number.
  std::uint64_t z = seq * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(pid);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// The kernel runs the monitor's signal entrypoint: raise the from-kernel
// flag (legal only with the kernel-default PKRU), check it, reset it, and
// queue the signal.
void enter_monitor_entry(MachineState& s, ThreadCtx& t, int signo) {
  SignalState& ss = s.signals;
  if (ss.in_entry) throw std::logic_error("signal entrypoint re-entered");
  ss.in_entry = true;
  ss.from_kernel_flag = 1;
  s.memory.store64(layout::kFlagAddr, 1);
  const bool genuine = ss.from_kernel_flag == 1;
  ss.from_kernel_flag = 0;
  s.memory.store64(layout::kFlagAddr, 0);
  if (genuine) {
    t.sig.slots[signo] = SigInfo{signo, ss.next_seq++};
    t.sig.kernel_mask |= sig_bit(signo);
    ++ss.accepted;
  }
  ss.in_entry = false;
}

}  // namespace

bool catchable(int signo) { return signo != kSigKill && signo != kSigStop; }
bool reserved(int signo) { return signo == kSigSys; }
bool default_ignored(int signo) {
  return signo == kSigChld || signo == kSigCont || signo == kSigUrg ||
         signo == kSigWinch;
}

SyscallResult vsigaction(MachineState& s, Tid, int signo,
                         std::optional<Addr> handler, SigSet mask) {
  if (!valid_signo(signo)) {
    return SyscallResult::denied(DenyReason::InvalidArgument, "bad signo");
  }
  if (reserved(signo)) return SyscallResult::denied(DenyReason::ReservedSignal);
  if (!catchable(signo)) {
    return SyscallResult::denied(DenyReason::InvalidArgument,
                                 "signal cannot be caught");
  }
  s.signals.table[signo] = SigAction{handler, mask & ~kUnblockable};
  // The kernel only ever learns about the monitor entrypoint.
  s.signals.kernel_handlers[signo] = layout::kSignalEntry;
  return SyscallResult::ok();
}

SyscallResult vsigprocmask(MachineState& s, Tid tid, int how, SigSet set) {
  ThreadSignals& ts = s.thread(tid).sig;
  SigSet old = ts.user_mask;
  set &= ~kUnblockable;
  switch (how) {
    case 0: ts.user_mask |= set; break;
    case 1: ts.user_mask &= ~set; break;
    case 2: ts.user_mask = set; break;
    default:
      return SyscallResult::denied(DenyReason::InvalidArgument, "bad how");
  }
  return SyscallResult::ok(static_cast<std::int64_t>(old));
}

SyscallResult vsigaltstack(MachineState& s, Tid tid, Addr base,
                           std::uint64_t len) {
  ThreadCtx& t = s.thread(tid);
  if (len == 0) {
    t.sig.altstack.reset();
    return SyscallResult::ok();
  }
  DomainId d = acting_domain(t);
  for (PageNo p = page_of(base); p <= page_of(base + len - 1); ++p) {
    const PageRecord* rec = s.page(p);
    if (!rec) return SyscallResult::denied(DenyReason::NotMapped);
    if (rec->domain.is_trusted()) {
      return SyscallResult::denied(DenyReason::PointsIntoTrusted);
    }
    if (rec->domain != d) {
      return SyscallResult::denied(DenyReason::PointsIntoForeignDomain);
    }
  }
  t.sig.altstack = AltStack{base, len};
  return SyscallResult::ok();
}

const char* to_string(Interrupted i) {
  switch (i) {
    case Interrupted::InUntrusted: return "untrusted";
    case Interrupted::InMonitor: return "monitor";
    case Interrupted::InSubdomain: return "subdomain";
  }
  return "?";
}

Interrupted interrupted_context(const MachineState& s, Tid tid) {
  const ThreadCtx& t = s.thread(tid);
  if (t.in_monitor || t.current_domain.is_trusted()) return Interrupted::InMonitor;
  if (t.sig_blocked) return Interrupted::InSubdomain;
  return Interrupted::InUntrusted;
}

void kernel_deliver(MachineState& s, Tid tid, int signo) {
  if (!valid_signo(signo) || s.signals.terminated) return;
  if (signo == kSigKill) {
    s.signals.terminated = true;
    return;
  }
  if (signo == kSigStop) return;  // job control is not modeled
  ThreadCtx& t = s.thread(tid);
  const SigSet bit = sig_bit(signo);
  if (t.sig.kernel_mask & bit) {
    // Slot occupied: the kernel keeps (at most) one more instance itself.
    if (t.sig.kernel_held & bit) {
      ++s.signals.coalesced;
    } else {
      t.sig.kernel_held |= bit;
    }
    return;
  }
  enter_monitor_entry(s, t, signo);
  // Interrupted untrusted code: resumption is rewritten to the exit path,
  // which delivers right away. In the monitor or a signal-blocked subdomain
  // the signal waits in the queue.
  deliver_pending(s, tid);
}

const char* to_string(ForgedLanding l) {
  switch (l) {
    case ForgedLanding::Start: return "start";
    case ForgedLanding::AtSwitch: return "switch";
    case ForgedLanding::PastCheck: return "past_check";
  }
  return "?";
}

ForgedOutcome forged_entry(MachineState& s, Tid tid, const ForgedFrame& f) {
  // Whatever the crafted frame says, the entrypoint trusts only the flag, and
  // the flag lives on a trusted page.
  ThreadCtx& t = s.thread(tid);
  const DomainId caller = t.current_domain;
  const Pkru caller_pkru = t.pkru;
  auto flag_store_allowed = [&](const Pkru& pkru) {
    return user_can_access(s, caller, pkru, layout::kFlagPage, true);
  };

  bool accepted = false;
  switch (f.landing) {
    case ForgedLanding::Start:
      // movq $1, __flag_from_kernel with the caller's PKRU.
      if (flag_store_allowed(caller_pkru)) {
        s.signals.from_kernel_flag = 1;
        accepted = true;
      }
      break;
    case ForgedLanding::AtSwitch: {
      // The switch sequence raises PKRU, then `cmpq $1, flag; jne __sigexit`
      // sees the untouched flag and __sigexit switches straight back.
      accepted = s.signals.from_kernel_flag == 1;
      break;
    }
    case ForgedLanding::PastCheck:
      // movq $0, flag still runs with the caller's PKRU and faults.
      accepted = flag_store_allowed(caller_pkru);
      break;
  }

  if (accepted) return ForgedOutcome::Accepted;
  t.current_domain = caller;
  t.pkru = caller_pkru;
  ++s.signals.forged_rejected;
  return ForgedOutcome::Rejected;
}

std::optional<int> select_pending(MachineState& s, Tid tid) {
  ThreadSignals& ts = s.thread(tid).sig;
  const SigSet mask = ts.override_mask ? *ts.override_mask : ts.user_mask;
  for (const auto& [signo, info] : ts.slots) {
    if (mask & sig_bit(signo)) continue;
    ts.override_mask.reset();
    return signo;
  }
  return std::nullopt;
}

void deliver_to_untrusted(MachineState& s, Tid tid, int signo) {
  ThreadCtx& t = s.thread(tid);
  ThreadSignals& ts = t.sig;
  const SigSet bit = sig_bit(signo);
  ts.slots.erase(signo);
  ts.kernel_mask &= ~bit;
  if (ts.kernel_held & bit) {
    // The kernel releases the instance it was holding; it goes through the
    // entrypoint like any other.
    ts.kernel_held &= ~bit;
    enter_monitor_entry(s, t, signo);
  }

  SigAction action;
  if (auto it = s.signals.table.find(signo); it != s.signals.table.end()) {
    action = it->second;
  }
  if (!action.handler) {
    ++s.signals.defaulted;
    if (!default_ignored(signo)) s.signals.terminated = true;
    return;
  }

  const DomainId d = acting_domain(t);
  const bool on_alt = ts.altstack && !(t.stack_ptr >= ts.altstack->base &&
                                       t.stack_ptr < ts.altstack->base +
                                                         ts.altstack->len);
  const Addr sp = on_alt ? ts.altstack->base + ts.altstack->len : t.stack_ptr;
  const Addr frame_addr = (sp - kFrameSize) & ~Addr{0xf};
  // The frame goes on memory the interrupted domain may write, or nowhere.
  for (PageNo p = page_of(frame_addr); p <= page_of(frame_addr + kFrameSize - 1);
       ++p) {
    if (!user_can_access(s, d, pkru_for(d), p, true)) {
      ++s.signals.defaulted;
      s.signals.terminated = true;
      return;
    }
  }

  SigFrame f;
  f.signo = signo;
  f.handler = *action.handler;
  f.frame_addr = frame_addr;
  f.on_altstack = on_alt;
  f.rip = t.rip;
  f.rsp = t.stack_ptr;
  f.rax = t.rax;
  f.domain = d;
  f.pkru = pkru_for(d);
  f.saved_user_mask = ts.user_mask;
  f.token = frame_token(s.signals.next_seq++, s.pid);
  s.memory.store64(frame_addr, f.token);
  s.memory.store64(frame_addr + 8, (std::uint64_t{f.pkru.write} << 16) | f.pkru.read);
  s.memory.store64(frame_addr + 16, f.rip);
  ts.issued.push_back(f);

  t.rip = f.handler;
  t.stack_ptr = frame_addr;
  ts.user_mask |= action.mask | bit;
  ++s.signals.delivered;
}

void deliver_pending(MachineState& s, Tid tid) {
  // One handler frame at a time; default-action signals resolve in passing.
  while (!s.signals.terminated &&
         interrupted_context(s, tid) == Interrupted::InUntrusted) {
    auto signo = select_pending(s, tid);
    if (!signo) return;
    auto frames = s.thread(tid).sig.issued.size();
    deliver_to_untrusted(s, tid, *signo);
    if (s.thread(tid).sig.issued.size() != frames) return;
  }
}

SyscallResult vsigreturn(MachineState& s, Tid tid, const SigFrame& presented) {
  ThreadCtx& t = s.thread(tid);
  if (t.sig.issued.empty()) return SyscallResult::denied(DenyReason::NoFrame);
  const SigFrame f = t.sig.issued.back();
  if (presented.token != f.token || presented.frame_addr != f.frame_addr) {
    return SyscallResult::denied(DenyReason::TamperedFrame, "token mismatch");
  }
  if (presented.pkru != pkru_for(f.domain)) {
    return SyscallResult::denied(DenyReason::TamperedFrame, "pkru image edited");
  }
  t.sig.issued.pop_back();
  // Restore from the monitor's copy, never from user memory.
  t.rip = f.rip;
  t.stack_ptr = f.rsp;
  t.rax = f.rax;
  t.sig.user_mask = f.saved_user_mask & ~kUnblockable;
  if (!t.in_monitor) {
    t.current_domain = f.domain;
    t.pkru = pkru_for(f.domain);
    deliver_pending(s, tid);
  }
  return SyscallResult::ok(f.rax);
}

std::optional<SigFrame> current_frame(const MachineState& s, Tid tid) {
  const ThreadCtx& t = s.thread(tid);
  if (t.sig.issued.empty()) return std::nullopt;
  return t.sig.issued.back();
}

void set_override_mask(MachineState& s, Tid tid, SigSet mask) {
  s.thread(tid).sig.override_mask = mask;
}

bool queue_consistent(const MachineState& s) {
  for (const auto& [tid, t] : s.threads) {
    for (int signo = 1; signo <= kMaxSignal; ++signo) {
      bool occupied = t.sig.slots.count(signo) > 0;
      bool masked = (t.sig.kernel_mask & sig_bit(signo)) != 0;
      if (occupied != masked) return false;
    }
  }
  return true;
}

bool frames_untrusted(const MachineState& s) {
  for (const auto& [tid, t] : s.threads) {
    for (const SigFrame& f : t.sig.issued) {
      if (!f.domain.is_untrusted()) return false;
      if (f.pkru.can_read(DomainId::trusted()) ||
          f.pkru.can_write(DomainId::trusted())) {
        return false;
      }
    }
  }
  return true;
}

bool signals_conserved(const MachineState& s) {
  std::uint64_t pending = 0;
  for (const auto& [tid, t] : s.threads) pending += t.sig.slots.size();
  return s.signals.accepted ==
         s.signals.delivered + s.signals.defaulted + pending;
}

}  // namespace endosim

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
#include "endosim/nexpoline.hpp"

#include <limits>
#include <stdexcept>

#include "endosim/signals.hpp"

namespace endosim {

GateConfig parse_variant(std::string_view text) {
  GateConfig c;
  const std::string_view rand_prefix = "secc_rand:";
  if (text.starts_with(rand_prefix)) {
    auto digits = text.substr(rand_prefix.size());
    if (digits.empty() || digits.size() > 9 ||
        digits.find_first_not_of("0123456789") != std::string_view::npos) {
      throw BadVariant(std::string(text));
    }
    c.filter = FilterKind::Seccomp;
    c.kind = GateKind::Random;
    c.pages = kRandomPages;
    c.rerand_freq = static_cast<std::uint32_t>(std::stoul(std::string(digits)));
    if (c.rerand_freq == 0) throw BadVariant(std::string(text));
    return c;
  }
  if (text == "secc_eph") {
    c.filter = FilterKind::Seccomp;
    c.kind = GateKind::Ephemeral;
  } else if (text == "disp_eph") {
    c.filter = FilterKind::Dispatch;
    c.kind = GateKind::Ephemeral;
  } else if (text == "secc_cet") {
    c.filter = FilterKind::Seccomp;
    c.kind = GateKind::Cet;
  } else if (text == "disp_cet") {
    c.filter = FilterKind::Dispatch;
    c.kind = GateKind::Cet;
  } else {
    throw BadVariant(std::string(text));
  }
  return c;
}

std::string variant_name(const GateConfig& c) {
  std::string f = c.filter == FilterKind::Seccomp ? "secc" : "disp";
  switch (c.kind) {
    case GateKind::Random:
      return f + "_rand:" + std::to_string(c.rerand_freq);
    case GateKind::Ephemeral:
      return f + "_eph";
    case GateKind::Cet:
      return f + "_cet";
  }
  return f;
}

std::uint64_t position_count(std::uint32_t pages) {
  return std::uint64_t{pages} * kPageSize - kGadgetLen + 1;
}

Probability guess_probability(std::uint32_t pages, std::uint32_t freq) {
  if (pages == 0 || freq == 0) {
    throw std::invalid_argument("guess_probability: pages and freq must be >= 1");
  }
  return Probability(2 * std::int64_t{freq},
                     static_cast<std::int64_t>(kPageSize) * pages);
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below(0)");
  // Reject the 2^64 mod n lowest outputs so every residue is equally likely.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

Addr region_begin(const ThreadGate& g) { return page_addr(g.region_base); }
Addr region_end(const ThreadGate& g) {
  return page_addr(g.region_base + g.pages);
}

void install_gate(MachineState& s, Tid tid) {
  TrampolineState& tr = s.trampoline;
  ThreadGate g;
  g.pages = tr.config.kind == GateKind::Random ? tr.config.pages : 1;
  g.region_base = tr.next_region;
  tr.next_region += g.pages;
  for (PageNo p = g.region_base; p < g.region_base + g.pages; ++p) {
    s.pages[p] = PageRecord{DomainId::trusted(), PermSet::rx(), PageAttr::Exec,
                            std::nullopt};
  }
  g.filter_installed = true;
  if (tr.config.kind == GateKind::Cet) g.gadget_at = 0;
  tr.threads[tid] = g;
  if (tr.config.kind == GateKind::Random) rerandomize(s, tid);
}

void rerandomize(MachineState& s, Tid tid) {
  TrampolineState& tr = s.trampoline;
  if (tr.config.kind != GateKind::Random) {
    throw std::logic_error("rerandomize: not a random gate");
  }
  ThreadGate& g = tr.threads.at(tid);
  // The old location reverts to int3 simply by moving gadget_at.
  g.gadget_at = static_cast<std::uint32_t>(
      uniform_below(tr.rng, position_count(g.pages)));
  g.rerand_counter = 0;
  ++g.rerandomizations;
}

void gate_enter(MachineState& s, Tid tid) {
  TrampolineState& tr = s.trampoline;
  ThreadGate& g = tr.threads.at(tid);
  ThreadCtx& t = s.thread(tid);
  switch (tr.config.kind) {
    case GateKind::Random:
      if (g.rerand_counter >= tr.config.rerand_freq) rerandomize(s, tid);
      ++g.rerand_counter;
      break;
    case GateKind::Ephemeral:
      g.gadget_at = 0;
      break;
    case GateKind::Cet: {
      Addr ret = t.rip + 2;
      g.shadow_stack.push_back(ret);
      g.return_slots.push_back(ret);
      break;
    }
  }
  t.current_domain = DomainId::trusted();
  t.pkru = Pkru::all();
  t.in_monitor = true;
  t.stack_domain = DomainId::trusted();
}

const char* to_string(GateFault f) {
  switch (f) {
    case GateFault::None: return "none";
    case GateFault::CetControlFault: return "cet_control_fault";
    case GateFault::GadgetVisible: return "gadget_visible";
  }
  return "?";
}

GateFault gate_exit(MachineState& s, Tid tid, DomainId resume) {
  TrampolineState& tr = s.trampoline;
  ThreadGate& g = tr.threads.at(tid);
  GateFault fault = GateFault::None;
  switch (tr.config.kind) {
    case GateKind::Random:
      break;
    case GateKind::Ephemeral:
      cleanup_transaction(s, tid);
      if (g.gadget_at) fault = GateFault::GadgetVisible;
      break;
    case GateKind::Cet:
      if (g.shadow_stack.empty() || g.return_slots.empty() ||
          g.shadow_stack.back() != g.return_slots.back()) {
        fault = GateFault::CetControlFault;
      }
      if (!g.shadow_stack.empty()) g.shadow_stack.pop_back();
      if (!g.return_slots.empty()) g.return_slots.pop_back();
      break;
  }
  ThreadCtx& t = s.thread(tid);
  t.current_domain = resume;
  t.pkru = pkru_for(resume);
  t.in_monitor = resume.is_trusted();
  t.stack_domain = resume;
  return fault;
}

void tamper_return_slot(MachineState& s, Tid tid, Addr value) {
  ThreadGate& g = s.trampoline.threads.at(tid);
  if (g.return_slots.empty()) {
    throw std::logic_error("tamper_return_slot: no gate call in flight");
  }
  g.return_slots.back() = value;
}

std::optional<Tid> region_owner(const MachineState& s, Addr a) {
  for (const auto& [tid, g] : s.trampoline.threads) {
    if (a >= region_begin(g) && a < region_end(g)) return tid;
  }
  return std::nullopt;
}

std::optional<ByteClass> trampoline_byte(const MachineState& s, Addr a) {
  auto owner = region_owner(s, a);
  if (!owner) return std::nullopt;
  const ThreadGate& g = s.trampoline.threads.at(*owner);
  Addr off = a - region_begin(g);
  if (g.gadget_at && off >= *g.gadget_at && off < *g.gadget_at + kGadgetLen) {
    return off - *g.gadget_at < 2 ? ByteClass::SyscallByte : ByteClass::RetByte;
  }
  return ByteClass::Int3;
}

std::optional<Addr> gadget_addr(const MachineState& s, Tid tid) {
  const ThreadGate& g = s.trampoline.threads.at(tid);
  if (!g.gadget_at) return std::nullopt;
  return region_begin(g) + *g.gadget_at;
}

const char* to_string(ProbeOutcome o) {
  switch (o) {
    case ProbeOutcome::KilledByFilter: return "KilledByFilter";
    case ProbeOutcome::Int3Fault: return "Int3Fault";
    case ProbeOutcome::CetControlFault: return "CetControlFault";
    case ProbeOutcome::UncheckedSyscallExecuted: return "UncheckedSyscallExecuted";
    case ProbeOutcome::TxAbort: return "TxAbort";
    case ProbeOutcome::TxCommit: return "TxCommit";
  }
  return "?";
}

ProbeOutcome attack_jump(const MachineState& s, Tid tid, Addr target) {
  // A syscall reached from anywhere but the thread's own region is stopped
  // by the per-thread filter.
  auto owner = region_owner(s, target);
  if (!owner || *owner != tid) return ProbeOutcome::KilledByFilter;
  ByteClass b = *trampoline_byte(s, target);
  if (b == ByteClass::Int3) return ProbeOutcome::Int3Fault;
  if (s.trampoline.config.kind == GateKind::Cet &&
      s.trampoline.endbr.count(target) == 0) {
    return ProbeOutcome::CetControlFault;
  }
  if (gadget_addr(s, tid) == target) {
    return ProbeOutcome::UncheckedSyscallExecuted;
  }
  // Mid-gadget or the bare ret: no syscall runs, the child dies on the
  // following trap.
  return ProbeOutcome::Int3Fault;
}

std::optional<ProbeOutcome> tsx_probe(const MachineState& s, Tid,
                                      Addr target) {
  if (!s.trampoline.config.tsx_enabled) return std::nullopt;
  auto b = trampoline_byte(s, target);
  if (b == ByteClass::RetByte) return ProbeOutcome::TxCommit;
  return ProbeOutcome::TxAbort;
}

SyscallResult spawn_thread(MachineState& s, Tid parent, DomainId domain) {
  if (s.trampoline.config.filter == FilterKind::Seccomp &&
      !s.trampoline.queen_present) {
    return SyscallResult::denied(DenyReason::QueenRequired);
  }
  if (!domain.is_untrusted()) {
    return SyscallResult::denied(DenyReason::NotUntrusted);
  }
  Tid tid = s.next_tid;
  PageNo base = layout::stack_base(tid);
  for (PageNo p = base; p < base + layout::kStackPages; ++p) {
    if (s.page(p)) {
      return SyscallResult::denied(DenyReason::InvalidArgument,
                                   "stack area already mapped");
    }
  }
  ++s.next_tid;
  for (PageNo p = base; p < base + layout::kStackPages; ++p) {
    s.pages[p] = PageRecord{domain, PermSet::rw(), PageAttr::Retired,
                            std::nullopt};
  }
  ThreadCtx t;
  t.tid = tid;
  t.current_domain = domain;
  t.pkru = pkru_for(domain);
  t.in_monitor = false;
  t.stack_domain = domain;
  t.stack_ptr = layout::stack_top(tid);
  t.rip = layout::kAppEntry;
  if (auto it = s.threads.find(parent); it != s.threads.end()) {
    t.sig.user_mask = it->second.sig.user_mask;
  }
  s.threads[tid] = t;
  // Under seccomp the Queen (which carries no filter) creates the thread and
  // installs a fresh per-thread filter; under dispatch the region is simply
  // set for the child.
  install_gate(s, tid);
  return SyscallResult::ok(tid);
}

SyscallResult direct_clone(MachineState& s, Tid parent) {
  if (s.trampoline.config.filter == FilterKind::Seccomp) {
    return SyscallResult::denied(DenyReason::QueenRequired,
                                 "seccomp filter would be inherited");
  }
  return spawn_thread(s, parent, s.thread(parent).current_domain);
}

CleanupReport cleanup_transaction(MachineState& s, Tid tid,
                                  std::span<const Interrupt> interrupts) {
  CleanupReport rep;
  ThreadGate& g = s.trampoline.threads.at(tid);
  if (s.trampoline.config.kind != GateKind::Ephemeral) {
    // Nothing to clean: the gadget is permanent outside the ephemeral design.
    rep.passes = 1;
    rep.gadget_absent = !g.gadget_at.has_value();
    return rep;
  }
  std::size_t next = 0;
  for (;;) {
    ++rep.passes;
    std::uint32_t cleared = 0;
    bool restarted = false;
    for (int step = 0; step < kCleanupSteps; ++step) {
      while (next < interrupts.size() && interrupts[next].step == step) {
        const Interrupt& irq = interrupts[next++];
        const ThreadCtx& t = s.thread(tid);
        bool already_queued =
            (t.sig.kernel_mask & sig_bit(irq.signo)) != 0;
        kernel_deliver(s, tid, irq.signo);
        if (!already_queued) {
          // The monitor entrypoint resets rip to the start of the cleanup.
          restarted = true;
          break;
        }
      }
      if (restarted) break;
      if (step < static_cast<int>(kGadgetLen)) cleared = step + 1;
    }
    if (restarted) {
      ++rep.restarts;
      continue;
    }
    if (cleared == kGadgetLen) {
      s.trampoline.threads.at(tid).gadget_at.reset();
    }
    break;
  }
  rep.gadget_absent = !s.trampoline.threads.at(tid).gadget_at.has_value();
  return rep;
}

bool ephemeral_clean(const MachineState& s) {
  if (s.trampoline.config.kind != GateKind::Ephemeral) return true;
  bool any_untrusted = false;
  for (const auto& [tid, t] : s.threads) {
    if (t.current_domain.is_untrusted()) any_untrusted = true;
  }
  if (!any_untrusted) return true;
  for (const auto& [tid, g] : s.trampoline.threads) {
    if (g.gadget_at) return false;
  }
  return true;
}

bool ephemeral_clean_for(const MachineState& s, Tid tid) {
  if (s.trampoline.config.kind != GateKind::Ephemeral) return true;
  const ThreadCtx& t = s.thread(tid);
  if (!t.current_domain.is_untrusted()) return true;
  return !s.trampoline.threads.at(tid).gadget_at.has_value();
}

}  // namespace endosim

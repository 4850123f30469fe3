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
#include "endosim/domains.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "endosim/formal.hpp"
#include "endosim/signals.hpp"

namespace endosim {

namespace {

constexpr std::uint64_t kDomainStackPages = 2;
constexpr Addr kStubSize = 0x20;

bool contains(const std::vector<PageNo>& v, PageNo p) {
  return std::find(v.begin(), v.end(), p) != v.end();
}

SyscallResult with_transitions(SyscallResult r) {
  // Every mediated switch goes through the monitor: in, then out.
  if (r.is_ok()) r.pkru_transitions = 2;
  return r;
}

}  // namespace

SyscallResult iv_create_domain(MachineState& s, Tid tid,
                               const DomainSpec& spec) {
  const DomainId caller = acting_domain(s.thread(tid));
  if (!caller.is_untrusted()) {
    return SyscallResult::denied(DenyReason::NotUntrusted);
  }
  int index = -1;
  for (int i = 1; i < kMaxUntrusted; ++i) {
    if (!s.domains.endoprocesses.count(i)) {
      index = i;
      break;
    }
  }
  if (index < 0) return SyscallResult::denied(DenyReason::DomainsExhausted);
  if (spec.ring == Ring::Endokernel || spec.code_pages.empty()) {
    return SyscallResult::denied(DenyReason::InvalidArgument);
  }

  std::set<PageNo> rekeyed;
  for (const auto* group : {&spec.code_pages, &spec.data_pages}) {
    for (PageNo p : *group) {
      const PageRecord* rec = s.page(p);
      if (!rec) return SyscallResult::denied(DenyReason::NotMapped);
      if (rec->domain != caller || !rekeyed.insert(p).second) {
        return SyscallResult::denied(DenyReason::PageOwnedElsewhere);
      }
    }
  }
  for (Addr e : spec.entrypoints) {
    if (!contains(spec.code_pages, page_of(e))) {
      return SyscallResult::denied(DenyReason::BadEntrypoint,
                                   "entrypoint outside code pages");
    }
  }
  // Re-keying must not split one file region across two domains.
  for (const FileMappingRecord& a : s.file_mappings) {
    if (!rekeyed.count(page_of(a.addr))) continue;
    for (const FileMappingRecord& b : s.file_mappings) {
      if (rekeyed.count(page_of(b.addr)) || a.fd != b.fd) continue;
      if (offset_intersects(a, b)) {
        return SyscallResult::denied(DenyReason::AliasViolation);
      }
    }
  }

  const DomainId id = DomainId::untrusted(index);
  Endoprocess ep;
  ep.id = id;
  ep.ring = spec.ring;
  ep.code_pages = spec.code_pages;
  ep.data_pages = spec.data_pages;
  ep.entrypoints = spec.entrypoints;
  for (PageNo p : rekeyed) s.pages[p].domain = id;
  std::erase_if(s.domains.grants,
                [&](const GrantRecord& g) { return rekeyed.count(g.page) > 0; });

  PageNo stack = s.next_mmap;
  s.next_mmap += kDomainStackPages;
  for (PageNo p = stack; p < stack + kDomainStackPages; ++p) {
    s.pages[p] = PageRecord{id, PermSet::rw(), PageAttr::Retired, std::nullopt};
    ep.stack_pages.push_back(p);
  }
  ep.stack_top = page_addr(stack + kDomainStackPages) - 0x80;

  if (spec.make_stubs) {
    std::size_t existing = 0;
    for (const auto& [i, other] : s.domains.endoprocesses) {
      existing += other.stubs.size();
    }
    for (std::size_t i = 0; i < spec.entrypoints.size(); ++i) {
      ep.stubs.push_back(page_addr(layout::kStubArea) +
                         (existing + i) * kStubSize);
    }
  }
  ep.xcall_stub = layout::kXcallEntry;
  s.domains.endoprocesses[index] = std::move(ep);
  s.domains.exec_locked = true;
  return SyscallResult::ok(index);
}

SyscallResult xcall(MachineState& s, Tid tid, DomainId target,
                    std::size_t entry_id, std::span<const std::int64_t> args) {
  ThreadCtx& t = s.thread(tid);
  const DomainId caller = t.current_domain;
  if (!caller.is_untrusted() || t.in_monitor) {
    return SyscallResult::denied(DenyReason::NotUntrusted);
  }
  auto it = target.is_untrusted()
                ? s.domains.endoprocesses.find(target.index())
                : s.domains.endoprocesses.end();
  if (it == s.domains.endoprocesses.end()) {
    return SyscallResult::denied(DenyReason::BadEntrypoint, "no such domain");
  }
  if (caller == target) return SyscallResult::denied(DenyReason::SameDomain);
  if (args.size() > s.domains.xcall_arg_slots) {
    return SyscallResult::denied(DenyReason::TooManyArgs);
  }
  const Endoprocess& ep = it->second;
  if (entry_id >= ep.entrypoints.size()) {
    return SyscallResult::denied(DenyReason::BadEntrypoint);
  }
  if (ring_of(s, caller) == Ring::Safebox && ep.ring == Ring::Safebox) {
    return SyscallResult::denied(DenyReason::LateralCall);
  }

  t.return_chain.push_back(ReturnFrame{caller, t.rip, t.stack_ptr,
                                       t.stack_domain, t.sig_blocked});
  t.current_domain = target;
  t.pkru = pkru_for(target);
  t.stack_domain = target;
  t.stack_ptr = ep.stack_top;
  t.rip = ep.entrypoints[entry_id];
  t.rax = args.empty() ? 0 : args[0];
  t.sig_blocked = true;
  return with_transitions(SyscallResult::ok());
}

SyscallResult xreturn(MachineState& s, Tid tid,
                      std::optional<DomainId> claimed_caller) {
  ThreadCtx& t = s.thread(tid);
  if (t.return_chain.empty() || t.in_monitor) {
    return SyscallResult::denied(DenyReason::ReturnOrder, "no open xcall");
  }
  const ReturnFrame top = t.return_chain.back();
  if (claimed_caller && *claimed_caller != top.caller) {
    return SyscallResult::denied(DenyReason::ReturnOrder,
                                 "return skips a nesting level");
  }
  t.return_chain.pop_back();
  t.current_domain = top.caller;
  t.pkru = pkru_for(top.caller);
  t.stack_domain = top.caller_stack_domain;
  t.stack_ptr = top.caller_sp;
  t.rip = top.return_addr;
  t.sig_blocked = top.caller_sig_blocked;
  // Signals held during the call go out now.
  deliver_pending(s, tid);
  return with_transitions(SyscallResult::ok());
}

SyscallResult grant(MachineState& s, Tid tid, PageNo page, DomainId grantee) {
  const ThreadCtx& t = s.thread(tid);
  const DomainId owner = t.current_domain;
  const PageRecord* rec = s.page(page);
  if (!rec) return SyscallResult::denied(DenyReason::NotMapped);
  if (!owner.is_untrusted() || rec->domain != owner) {
    return SyscallResult::denied(DenyReason::NotOwner);
  }
  if (!grantee.is_untrusted() ||
      !s.domains.endoprocesses.count(grantee.index())) {
    return SyscallResult::denied(DenyReason::InvalidArgument, "no such grantee");
  }
  if (ring_of(s, grantee) >= ring_of(s, owner)) {
    return SyscallResult::denied(DenyReason::UpwardGrant);
  }
  for (GrantRecord& g : s.domains.grants) {
    if (g.page == page && g.grantee == grantee) {
      g.owner = owner;
      g.active = true;
      return SyscallResult::ok();
    }
  }
  s.domains.grants.push_back(GrantRecord{page, owner, grantee, true});
  return SyscallResult::ok();
}

SyscallResult revoke(MachineState& s, Tid tid, PageNo page) {
  const ThreadCtx& t = s.thread(tid);
  const PageRecord* rec = s.page(page);
  if (!rec) return SyscallResult::denied(DenyReason::NotMapped);
  if (rec->domain != t.current_domain) {
    return SyscallResult::denied(DenyReason::NotOwner);
  }
  // Total and idempotent: every grant of the page disappears.
  std::erase_if(s.domains.grants,
                [&](const GrantRecord& g) { return g.page == page; });
  return SyscallResult::ok();
}

SyscallResult isolate_library(MachineState& s, Tid tid,
                              std::vector<PageNo> code_pages,
                              std::vector<PageNo> data_pages,
                              std::vector<Addr> exports) {
  DomainSpec spec;
  spec.code_pages = std::move(code_pages);
  spec.data_pages = std::move(data_pages);
  spec.entrypoints = std::move(exports);
  spec.ring = Ring::Safebox;
  spec.make_stubs = true;
  return iv_create_domain(s, tid, spec);
}

SyscallResult direct_jump(MachineState& s, Tid tid, Addr target) {
  // No monitor involvement, so no domain switch: landing in another domain's
  // code grants nothing.
  s.thread(tid).rip = target;
  return SyscallResult::ok();
}

SyscallResult callback(MachineState& s, Tid tid, Addr target) {
  // Transitions only go one way; code reached from the library runs with
  // the library's rights.
  return direct_jump(s, tid, target);
}

SyscallResult user_load(const MachineState& s, Tid tid, Addr a) {
  const ThreadCtx& t = s.thread(tid);
  if (!readable(s, t, page_of(a)) || !readable(s, t, page_of(a + 7))) {
    return SyscallResult::fault("load denied by pkru or page permissions");
  }
  return SyscallResult::ok(static_cast<std::int64_t>(s.memory.load64(a)));
}

SyscallResult user_store(MachineState& s, Tid tid, Addr a, std::uint64_t v) {
  const ThreadCtx& t = s.thread(tid);
  if (!writeable(s, t, page_of(a)) || !writeable(s, t, page_of(a + 7))) {
    return SyscallResult::fault("store denied by pkru or page permissions");
  }
  s.memory.store64(a, v);
  return SyscallResult::ok();
}

// ---------------------------------------------------------------------------

const char* to_string(ModeCheck m) {
  return m == ModeCheck::Pass ? "Pass" : "InvalidOpcodeTrap";
}

namespace {

constexpr std::array<std::uint8_t, 17> kModeCheck = {
    0x48, 0xd1, 0xe0,        // shl rax, 1
    0x48, 0xff, 0xc0,        // inc rax
    0x0f, 0xba, 0xe0, 0x00,  // bt eax, 0
    0x72, 0x02,              // jc +2
    0x0f, 0x0b,              // ud2
    0x48, 0xd1, 0xe8,        // shr rax, 1
};

}  // namespace

std::span<const std::uint8_t> mode_check_code() { return kModeCheck; }

ModeCheckResult mode_check(MiniCpu cpu) {
  // A decoder for exactly the opcodes above, in either mode. In 32-bit code
  // 0x48 is `dec eax` rather than a REX.W prefix and operands are 32 bits.
  const bool long_mode = cpu.mode == CpuMode::Long64;
  const auto code = mode_check_code();
  std::size_t ip = 0;
  auto width_mask = [](bool wide) {
    return wide ? ~std::uint64_t{0} : std::uint64_t{0xffffffff};
  };
  auto write = [&](std::uint64_t v, bool wide) {
    // 32-bit writes zero-extend in long mode; in compat mode only eax exists.
    cpu.rax = v & width_mask(wide);
  };

  while (ip < code.size()) {
    bool rex_w = false;
    std::uint8_t op = code[ip];
    if (op == 0x48) {
      if (long_mode) {
        rex_w = true;
        op = code[++ip];
      } else {
        write((cpu.rax - 1), false);  // dec eax; CF untouched
        ++ip;
        continue;
      }
    }
    const std::uint64_t m = width_mask(rex_w);
    const int top_bit = rex_w ? 63 : 31;
    if (op == 0xd1) {
      std::uint8_t modrm = code[ip + 1];
      std::uint64_t v = cpu.rax & m;
      if ((modrm >> 3 & 7) == 4) {  // shl r/m, 1
        cpu.cf = (v >> top_bit) & 1;
        write(v << 1, rex_w);
      } else {  // shr r/m, 1
        cpu.cf = v & 1;
        write(v >> 1, rex_w);
      }
      ip += 2;
    } else if (op == 0xff) {  // inc r/m; CF untouched
      write((cpu.rax & m) + 1, rex_w);
      ip += 2;
    } else if (op == 0x0f && code[ip + 1] == 0xba) {  // bt r/m32, imm8
      std::uint8_t bit = code[ip + 3] & 31;
      cpu.cf = (cpu.rax >> bit) & 1;
      ip += 4;
    } else if (op == 0x72) {  // jc rel8
      auto rel = static_cast<std::int8_t>(code[ip + 1]);
      ip += 2;
      if (cpu.cf) ip += rel;
    } else if (op == 0x0f && code[ip + 1] == 0x0b) {  // ud2
      return {cpu, ModeCheck::InvalidOpcodeTrap};
    } else {
      return {cpu, ModeCheck::InvalidOpcodeTrap};
    }
  }
  return {cpu, ModeCheck::Pass};
}

}  // namespace endosim

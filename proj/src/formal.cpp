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
#include "endosim/formal.hpp"

#include <sstream>

#include "endosim/nexpoline.hpp"

namespace endosim {

namespace {

void map_range(MachineState& s, PageNo first, std::uint64_t count, DomainId d,
               PermSet perms, PageAttr attr) {
  for (PageNo p = first; p < first + count; ++p) {
    s.pages[p] = PageRecord{d, perms, attr, std::nullopt};
  }
}

constexpr std::uint64_t kSecretValue = 0x2154455243455321;  // "!SECRET!"

}  // namespace

MachineState new_initial(const GateConfig& gate, std::uint64_t seed) {
  using namespace layout;
  MachineState s;
  const DomainId t = DomainId::trusted();

  map_range(s, kMonitorCode, kMonitorCodePages, t, PermSet::rx(),
            PageAttr::Exec);
  map_range(s, kMonitorData, kMonitorDataPages, t, PermSet::rw(),
            PageAttr::DomainPrivate);
  map_range(s, kStubArea, 1, t, PermSet::rx(), PageAttr::Exec);
  s.memory.store64(kSecretAddr, kSecretValue);
  load_app_image(s, 0);

  // procfs memory files share one inode.
  Inode mem = s.fs.create("/proc/self/mem");
  s.fs.paths["/proc/" + std::to_string(s.pid) + "/mem"] = mem;
  s.fs.sensitive.insert(mem);

  s.trampoline.config = gate;
  s.trampoline.rng.seed(seed);
  s.trampoline.endbr = {kGateEntry, kSignalEntry, kXcallEntry};
  s.trampoline.queen_present = gate.filter == FilterKind::Seccomp;

  ThreadCtx t0;
  t0.tid = 0;
  t0.current_domain = t;
  t0.pkru = Pkru::all();
  t0.in_monitor = true;
  t0.stack_domain = t;
  t0.stack_ptr = stack_top(0);
  t0.rip = kGateEntry;
  s.threads[0] = t0;
  install_gate(s, 0);
  return s;
}

void load_app_image(MachineState& s, Tid tid) {
  using namespace layout;
  const DomainId u0 = DomainId::untrusted(0);
  map_range(s, kAppCode, kAppCodePages, u0, PermSet::rx(), PageAttr::Exec);
  map_range(s, kAppData, kAppDataPages, u0, PermSet::rw(), PageAttr::Retired);
  map_range(s, stack_base(tid), kStackPages, u0, PermSet::rw(),
            PageAttr::Retired);

  Endoprocess app;
  app.id = u0;
  app.ring = Ring::Unbox;
  for (PageNo p = kAppCode; p < kAppCode + kAppCodePages; ++p) {
    app.code_pages.push_back(p);
  }
  for (PageNo p = kAppData; p < kAppData + kAppDataPages; ++p) {
    app.data_pages.push_back(p);
  }
  app.entrypoints.push_back(kAppEntry);
  app.stack_top = stack_top(tid);
  s.domains.endoprocesses[0] = app;
}

MachineState boot(const GateConfig& gate, std::uint64_t seed) {
  MachineState s = new_initial(gate, seed);
  switch_to_untrusted(s, 0, DomainId::untrusted(0));
  s.thread(0).rip = layout::kAppEntry;
  return s;
}

void switch_to_untrusted(MachineState& s, Tid tid, DomainId d) {
  ThreadCtx& t = s.thread(tid);
  t.current_domain = d;
  t.pkru = pkru_for(d);
  t.in_monitor = false;
  t.stack_domain = d;
}

bool user_can_access(const MachineState& s, DomainId running, const Pkru& pkru,
                     PageNo p, bool write) {
  const PageRecord* rec = s.page(p);
  if (!rec) return false;
  if (!(write ? rec->perms.w : rec->perms.r)) return false;
  if (write ? pkru.can_write(rec->domain) : pkru.can_read(rec->domain)) {
    return true;
  }
  for (const GrantRecord& g : s.domains.grants) {
    if (g.active && g.page == p && g.grantee == running) return true;
  }
  return false;
}

bool readable(const MachineState& s, const ThreadCtx& t, PageNo p) {
  return user_can_access(s, t.current_domain, t.pkru, p, false);
}

bool writeable(const MachineState& s, const ThreadCtx& t, PageNo p) {
  return user_can_access(s, t.current_domain, t.pkru, p, true);
}

const char* to_string(SafetyProperty p) {
  switch (p) {
    case SafetyProperty::SP1: return "SP1";
    case SafetyProperty::SP2: return "SP2";
    case SafetyProperty::SP3: return "SP3";
    case SafetyProperty::SP4: return "SP4";
  }
  return "?";
}

std::string SafetyVerdict::describe() const {
  if (violations.empty()) return "safe";
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const Violation& v = violations[i];
    if (i) os << "; ";
    os << to_string(v.property) << " page 0x" << std::hex << v.page << std::dec;
    if (v.tid) os << " tid " << *v.tid;
    if (v.first && v.second) {
      os << " fd " << v.first->fd << " [" << v.first->off << ","
         << v.first->off + v.first->len << ") vs [" << v.second->off << ","
         << v.second->off + v.second->len << ")";
    }
  }
  return os.str();
}

bool offset_intersects(const FileMappingRecord& a,
                       const FileMappingRecord& b) {
  // Half-open [off, off+len); empty intervals intersect nothing.
  if (a.len == 0 || b.len == 0) return false;
  return a.off < b.off + b.len && b.off < a.off + a.len;
}

SafetyVerdict safety_check(const MachineState& s) {
  SafetyVerdict v;
  const DomainId trusted = DomainId::trusted();

  bool trusted_grants = false;
  for (const GrantRecord& g : s.domains.grants) {
    const PageRecord* rec = s.page(g.page);
    if (g.active && rec && rec->domain.is_trusted()) trusted_grants = true;
  }

  for (const auto& [tid, t] : s.threads) {
    if (!t.current_domain.is_untrusted()) continue;
    if (!trusted_grants && !t.pkru.can_read(trusted) &&
        !t.pkru.can_write(trusted)) {
      continue;
    }
    for (const auto& [p, rec] : s.pages) {
      if (!rec.domain.is_trusted()) continue;
      if (readable(s, t, p)) {
        v.violations.push_back({SafetyProperty::SP1, p, tid, {}, {}});
      }
      if (writeable(s, t, p)) {
        v.violations.push_back({SafetyProperty::SP2, p, tid, {}, {}});
      }
    }
  }

  for (const auto& [p, rec] : s.pages) {
    if (rec.perms.w && rec.perms.x) {
      v.violations.push_back({SafetyProperty::SP3, p, {}, {}, {}});
    }
  }

  const auto& mf = s.file_mappings;
  for (std::size_t i = 0; i < mf.size(); ++i) {
    for (std::size_t j = i + 1; j < mf.size(); ++j) {
      if (mf[i].fd != mf[j].fd || !offset_intersects(mf[i], mf[j])) continue;
      const PageRecord* a = s.page(page_of(mf[i].addr));
      const PageRecord* b = s.page(page_of(mf[j].addr));
      DomainId da = a ? a->domain : trusted;
      DomainId db = b ? b->domain : trusted;
      if (da != db) {
        v.violations.push_back(
            {SafetyProperty::SP4, page_of(mf[i].addr), {}, mf[i], mf[j]});
      }
    }
  }
  return v;
}

Transition noop_transition() {
  return {"noop", [](MachineState&) { return SyscallResult::ok(); }};
}

const char* to_string(TransitionResult::Kind k) {
  switch (k) {
    case TransitionResult::Kind::Committed: return "committed";
    case TransitionResult::Kind::PolicyDenied: return "policy_denied";
    case TransitionResult::Kind::SafetyBreach: return "safety_breach";
  }
  return "?";
}

TransitionResult apply_transition(const MachineState& s, const Transition& t) {
  TransitionResult out;
  MachineState next = s;
  out.result = t.effect(next);
  if (!out.result.is_ok()) {
    out.kind = TransitionResult::Kind::PolicyDenied;
    out.state = s;
    return out;
  }
  out.breach = safety_check(next);
  if (!out.breach.safe()) {
    out.kind = TransitionResult::Kind::SafetyBreach;
    out.state = s;
    return out;
  }
  out.kind = TransitionResult::Kind::Committed;
  out.state = std::move(next);
  return out;
}

TraceReport run_trace(const MachineState& s0, std::span<const Transition> ts) {
  TraceReport rep;
  rep.final_state = s0;
  for (const Transition& t : ts) {
    TransitionResult r = apply_transition(rep.final_state, t);
    rep.results.push_back(r.result);
    if (r.kind == TransitionResult::Kind::SafetyBreach) {
      rep.breach = true;
      rep.breach_verdict = std::move(r.breach);
      break;
    }
    if (r.kind == TransitionResult::Kind::PolicyDenied) {
      ++rep.denials;
    } else {
      ++rep.committed;
      rep.final_state = std::move(r.state);
    }
  }
  return rep;
}

}  // namespace endosim

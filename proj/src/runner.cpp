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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "endosim/domains.hpp"
#include "endosim/formal.hpp"
#include "endosim/harness.hpp"
#include "endosim/monitor.hpp"
#include "endosim/nexpoline.hpp"
#include "endosim/signals.hpp"
#include "runner_internal.hpp"

namespace endosim {

namespace detail {

namespace {

const std::map<std::string, std::int64_t, std::less<>>& constants() {
  static const std::map<std::string, std::int64_t, std::less<>> c = {
      {"PROT_NONE", 0},
      {"PROT_READ", sysflag::kProtRead},
      {"PROT_WRITE", sysflag::kProtWrite},
      {"PROT_EXEC", sysflag::kProtExec},
      {"MAP_SHARED", sysflag::kMapShared},
      {"MAP_PRIVATE", sysflag::kMapPrivate},
      {"MAP_FIXED", sysflag::kMapFixed},
      {"MAP_ANONYMOUS", sysflag::kMapAnonymous},
      {"MAP_ANON", sysflag::kMapAnonymous},
      {"CLONE_VM", sysflag::kCloneVm},
      {"CLONE_FS", 0x200},
      {"CLONE_FILES", 0x400},
      {"CLONE_SIGHAND", 0x800},
      {"CLONE_THREAD", sysflag::kCloneThread},
      {"PR_GET_SECCOMP", sysflag::kPrGetSeccomp},
      {"PR_SET_SECCOMP", sysflag::kPrSetSeccomp},
      {"PR_SET_NAME", 15},
      {"SEEK_SET", 0},
      {"SEEK_CUR", 1},
      {"SEEK_END", 2},
      {"MADV_DONTNEED", 4},
      {"MREMAP_MAYMOVE", 1},
      {"MREMAP_FIXED", 2},
      {"SIG_BLOCK", 0},
      {"SIG_UNBLOCK", 1},
      {"SIG_SETMASK", 2},
      {"SIGINT", kSigInt},
      {"SIGILL", kSigIll},
      {"SIGKILL", kSigKill},
      {"SIGUSR1", kSigUsr1},
      {"SIGSEGV", kSigSegv},
      {"SIGUSR2", kSigUsr2},
      {"SIGALRM", 14},
      {"SIGTERM", 15},
      {"SIGCHLD", kSigChld},
      {"SIGCONT", kSigCont},
      {"SIGSTOP", kSigStop},
      {"SIGURG", kSigUrg},
      {"SIGWINCH", kSigWinch},
      {"SIGSYS", kSigSys},
      {"PAGE", static_cast<std::int64_t>(kPageSize)},
      {"WRPKRU", 0xef010f},
      {"SYSCALL", 0x050f},
  };
  return c;
}

std::optional<std::uint32_t> trailing_number(std::string_view s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string_view::npos ||
      s.size() > 4) {
    return std::nullopt;
  }
  return static_cast<std::uint32_t>(std::stoul(std::string(s)));
}

}  // namespace

std::int64_t eval_symbol(const World& w, Tid tid, std::string_view sym) {
  using namespace layout;
  const MachineState& s = w.s;
  auto thread_of = [&](std::string_view prefix) -> std::optional<Tid> {
    if (sym == prefix) return tid;
    if (sym.starts_with(prefix)) return trailing_number(sym.substr(prefix.size()));
    return std::nullopt;
  };
  if (sym == "secret") return static_cast<std::int64_t>(kSecretAddr);
  if (sym == "flag") return static_cast<std::int64_t>(kFlagAddr);
  if (sym == "appcode") return static_cast<std::int64_t>(page_addr(kAppCode));
  if (sym == "appdata") return static_cast<std::int64_t>(page_addr(kAppData));
  if (sym == "monitor_code") return static_cast<std::int64_t>(page_addr(kMonitorCode));
  if (sym == "monitor_data") return static_cast<std::int64_t>(page_addr(kMonitorData));
  if (sym == "pid") return s.pid;
  if (sym == "last") {
    auto it = w.last.find(tid);
    return it == w.last.end() ? 0 : it->second;
  }
  if (sym == "fd") return w.last_fd.value_or(-1);
  if (sym.starts_with("map")) {
    if (auto t = thread_of("map")) {
      auto it = w.last_map.find(*t);
      return it == w.last_map.end() ? 0 : it->second;
    }
  }
  if (sym == "frame") {
    if (!s.threads.count(tid)) return 0;
    return static_cast<std::int64_t>(s.thread(tid).stack_ptr);
  }
  if (sym.starts_with("stack")) {
    if (auto t = thread_of("stack")) return static_cast<std::int64_t>(thread_buffer(s, *t));
  }
  if (sym.starts_with("region")) {
    if (auto t = thread_of("region")) {
      auto it = s.trampoline.threads.find(*t);
      if (it == s.trampoline.threads.end()) throw std::runtime_error("no region for t" + std::to_string(*t));
      return static_cast<std::int64_t>(region_begin(it->second));
    }
  }
  if (sym.starts_with("gadget")) {
    if (auto t = thread_of("gadget")) {
      if (auto a = gadget_addr(s, *t)) return static_cast<std::int64_t>(*a);
      auto it = s.trampoline.threads.find(*t);
      if (it == s.trampoline.threads.end()) throw std::runtime_error("no region for t" + std::to_string(*t));
      return static_cast<std::int64_t>(region_begin(it->second));
    }
  }
  throw std::runtime_error("unknown symbol $" + std::string(sym));
}

std::int64_t eval(const World& w, Tid tid, std::string_view expr) {
  if (expr.empty()) throw std::runtime_error("empty expression");
  std::int64_t acc = 0;
  char op = '+';
  std::size_t i = 0;
  bool first = true;
  while (i <= expr.size()) {
    std::size_t j = i;
    // A leading minus belongs to the first term.
    if (first && j < expr.size() && expr[j] == '-') ++j;
    while (j < expr.size() && expr[j] != '+' && expr[j] != '|' &&
           !(expr[j] == '-' && j > i)) {
      ++j;
    }
    std::string_view term = expr.substr(i, j - i);
    std::int64_t v = 0;
    if (term.empty()) throw std::runtime_error("bad expression '" + std::string(expr) + "'");
    if (term[0] == '$') {
      v = eval_symbol(w, tid, term.substr(1));
    } else if (auto it = constants().find(term); it != constants().end()) {
      v = it->second;
    } else {
      std::string t(term);
      char* end = nullptr;
      const bool neg = t[0] == '-';
      const unsigned long long mag = std::strtoull(t.c_str() + (neg ? 1 : 0), &end, 0);
      if (end == t.c_str() + (neg ? 1 : 0) || *end != '\0') {
        throw std::runtime_error("bad term '" + t + "'");
      }
      v = neg ? -static_cast<std::int64_t>(mag) : static_cast<std::int64_t>(mag);
    }
    switch (op) {
      case '+': acc += v; break;
      case '-': acc -= v; break;
      case '|': acc |= v; break;
    }
    first = false;
    if (j >= expr.size()) break;
    op = expr[j];
    i = j + 1;
  }
  return acc;
}

SyscallArg eval_arg(const World& w, Tid tid, const std::string& tok) {
  if (!tok.empty() && tok[0] == '/') return path_arg(w.s, tid, tok);
  if (!tok.empty() && tok[0] == '@') {
    const std::string body = tok.substr(1);
    const auto colon = body.rfind(':');
    if (colon == std::string::npos) {
      return pointer(static_cast<Addr>(eval(w, tid, body)), 8);
    }
    return pointer(static_cast<Addr>(eval(w, tid, body.substr(0, colon))),
                   static_cast<std::uint64_t>(eval(w, tid, body.substr(colon + 1))));
  }
  return scalar(eval(w, tid, tok));
}

DomainId parse_domain(const World& w, Tid tid, const std::string& tok) {
  if (tok == "T") return DomainId::trusted();
  if (tok.size() > 1 && tok[0] == 'U') {
    return DomainId::untrusted(static_cast<int>(std::stoi(tok.substr(1))));
  }
  return DomainId::untrusted(static_cast<int>(eval(w, tid, tok)));
}

Expect map_status(const SyscallResult& r) {
  switch (r.status) {
    case Status::Ok: return Expect::Ok;
    case Status::Denied: return Expect::Deny;
    case Status::Fault: return Expect::Fault;
  }
  return Expect::Fault;
}

std::optional<Phase> parse_phase(std::string_view s) {
  if (s == "enter") return Phase::Enter;
  if (s == "screen") return Phase::Screen;
  if (s == "handle") return Phase::Handle;
  if (s == "exit") return Phase::Exit;
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------

namespace {

using namespace detail;

std::string describe(const SyscallResult& r) {
  std::string d = to_string(r.status);
  if (r.is_denied()) d += std::string(" ") + to_string(r.reason);
  if (r.is_ok()) d += " " + std::to_string(r.value);
  if (!r.detail.empty()) d += " (" + r.detail + ")";
  return d;
}

Outcome from_result(const SyscallResult& r) {
  return {map_status(r), describe(r), r.pkru_transitions};
}

Outcome run_forkbomb(World& w, Tid tid) {
  const GateConfig& c = w.s.trampoline.config;
  const auto& g = w.s.trampoline.threads.at(tid);
  MachineState victim = w.s;
  const std::uint64_t windows = forkbomb_windows(c);
  const std::uint32_t guesses = c.kind == GateKind::Random ? c.rerand_freq : 32;
  const std::uint64_t positions = position_count(g.pages);
  const Addr base = region_begin(g);
  for (std::uint64_t win = 0; win < windows; ++win) {
    if (c.kind == GateKind::Random) rerandomize(victim, tid);
    for (std::uint32_t i = 0; i < guesses; ++i) {
      const Addr target = base + uniform_below(w.attacker, positions);
      if (attack_jump(victim, tid, target) == ProbeOutcome::UncheckedSyscallExecuted) {
        std::ostringstream os;
        os << "child " << win * guesses + i << " reached the gadget";
        return {Expect::Bypass, os.str(), 0};
      }
    }
  }
  return {Expect::Fault, "every child crashed (" + std::to_string(windows * guesses) + ")", 0};
}

Outcome run_tsx_scan(World& w, Tid tid) {
  const MachineState& s = w.s;
  if (!s.trampoline.config.tsx_enabled) return {Expect::Deny, "tsx disabled", 0};
  const auto& g = s.trampoline.threads.at(tid);
  for (Addr a = region_begin(g); a < region_end(g); ++a) {
    if (tsx_probe(s, tid, a) != ProbeOutcome::TxCommit) continue;
    const Addr gadget = a - 2;
    ProbeOutcome o = attack_jump(s, tid, gadget);
    if (o == ProbeOutcome::UncheckedSyscallExecuted) {
      std::ostringstream os;
      os << "ret at 0x" << std::hex << a << ", syscall executed";
      return {Expect::Bypass, os.str(), 0};
    }
    return {Expect::Fault, std::string("ret found, jump: ") + to_string(o), 0};
  }
  return {Expect::Fault, "no transaction committed", 0};
}

Outcome run_scan(World& w, Tid tid, const Event& e) {
  const Addr a = static_cast<Addr>(eval(w, tid, e.args[0]));
  const auto len = static_cast<std::uint64_t>(eval(w, tid, e.args[1]));
  if (len == 0) return {Expect::Ok, "empty", 0};
  for (PageNo p = page_of(a); p <= page_of(a + len - 1); ++p) {
    const PageRecord* rec = w.s.page(p);
    if (!rec || rec->attr != PageAttr::Exec || !rec->domain.is_untrusted()) continue;
    auto bytes = w.s.memory.page_bytes(p);
    auto next = w.s.memory.read(page_addr(p + 1), 2);
    bytes.insert(bytes.end(), next.begin(), next.end());
    if (auto r = code_scan(bytes); !r.ok) {
      std::ostringstream os;
      os << "wrpkru in executable page at 0x" << std::hex << page_addr(p) + r.offset;
      return {Expect::Bypass, os.str(), 0};
    }
  }
  return {Expect::Ok, "clean", 0};
}

Outcome run_special(World& w, Tid tid, const Event& e) {
  MachineState& s = w.s;
  const std::string& v = e.verb;
  auto arg = [&](std::size_t i) { return eval(w, tid, e.args.at(i)); };

  if (v == "poke") {
    return from_result(user_store(s, tid, static_cast<Addr>(arg(0)),
                                  static_cast<std::uint64_t>(arg(1))));
  }
  if (v == "peek") {
    const Addr a = static_cast<Addr>(arg(0));
    SyscallResult r = user_load(s, tid, a);
    if (r.is_ok()) {
      w.last[tid] = r.value;
      const PageRecord* rec = s.page(page_of(a));
      if (rec && rec->domain.is_trusted()) return {Expect::Bypass, "read trusted memory", 0};
    }
    return from_result(r);
  }
  if (v == "jump") {
    Addr target = 0;
    if (e.args[0] == "guess") {
      const auto& g = s.trampoline.threads.at(tid);
      target = region_begin(g) + uniform_below(w.attacker, position_count(g.pages));
    } else {
      target = static_cast<Addr>(arg(0));
    }
    ProbeOutcome o = attack_jump(s, tid, target);
    if (o == ProbeOutcome::UncheckedSyscallExecuted) return {Expect::Bypass, to_string(o), 0};
    return {Expect::Fault, to_string(o), 0};
  }
  if (v == "tsx") {
    auto o = tsx_probe(s, tid, static_cast<Addr>(arg(0)));
    if (!o) return {Expect::Deny, "tsx disabled", 0};
    return {*o == ProbeOutcome::TxCommit ? Expect::Ok : Expect::Fault, to_string(*o), 0};
  }
  if (v == "tsx_scan") return run_tsx_scan(w, tid);
  if (v == "forkbomb") return run_forkbomb(w, tid);
  if (v == "forge_signal") {
    ForgedFrame f;
    f.rip = layout::kAppEntry;
    for (const std::string& a : e.args) {
      if (a == "land=start") f.landing = ForgedLanding::Start;
      else if (a == "land=switch") f.landing = ForgedLanding::AtSwitch;
      else if (a == "land=past_check") f.landing = ForgedLanding::PastCheck;
      else if (a == "pkru=trusted") f.pkru = Pkru::all();
      else throw std::runtime_error("forge_signal: bad argument " + a);
    }
    if (forged_entry(s, tid, f) == ForgedOutcome::Accepted) {
      return {Expect::Bypass, "forged frame accepted", 0};
    }
    return {Expect::Deny, "rejected", 0};
  }
  if (v == "sigreturn") {
    if (!e.args.empty()) {
      if (e.args[0] != "tamper") throw std::runtime_error("sigreturn [tamper]");
      // Rewrite the PKRU image in the frame to the all-access value.
      SyscallResult r = user_store(s, tid, s.thread(tid).stack_ptr + 8, 0xffffffffULL);
      if (!r.is_ok()) return from_result(r);
    }
    const std::uint64_t before = s.exposures;
    SyscallResult r = dispatch(s, make_request(tid, "rt_sigreturn"));
    if (s.exposures != before) return {Expect::Bypass, describe(r), r.pkru_transitions};
    return from_result(r);
  }
  if (v == "check_frame") {
    if (!current_frame(s, tid)) return {Expect::Fault, "no frame", 0};
    if (!frames_untrusted(s)) return {Expect::Bypass, "trusted pkru in frame", 0};
    return {Expect::Ok, "frame pkru untrusted", 0};
  }
  if (v == "scan") return run_scan(w, tid, e);
  if (v == "sigoverride") {
    set_override_mask(s, tid, static_cast<SigSet>(arg(0)));
    return {Expect::Ok, "", 0};
  }
  if (v == "signal") {
    const int signo = static_cast<int>(arg(0));
    if (e.args.size() == 3) {
      auto phase = parse_phase(e.args[2]);
      if (!phase) throw std::runtime_error("bad phase " + e.args[2]);
      w.inject[tid].push_back({*phase, signo});
      return {Expect::Ok, "armed", 0};
    }
    kernel_deliver(s, tid, signo);
    return {Expect::Ok, "delivered", 0};
  }
  if (v == "xcall") {
    std::vector<std::int64_t> args;
    for (std::size_t i = 2; i < e.args.size(); ++i) args.push_back(arg(i));
    return from_result(xcall(s, tid, parse_domain(w, tid, e.args[0]),
                             static_cast<std::size_t>(arg(1)), args));
  }
  if (v == "xreturn") {
    std::optional<DomainId> claimed;
    if (!e.args.empty()) claimed = parse_domain(w, tid, e.args[0]);
    return from_result(xreturn(s, tid, claimed));
  }
  if (v == "grant") {
    return from_result(grant(s, tid, page_of(static_cast<Addr>(arg(0))),
                             parse_domain(w, tid, e.args[1])));
  }
  if (v == "revoke") return from_result(revoke(s, tid, page_of(static_cast<Addr>(arg(0)))));
  if (v == "isolate_lib") {
    const Addr code = static_cast<Addr>(arg(0));
    const Addr data = static_cast<Addr>(arg(2));
    std::vector<PageNo> cp, dp;
    std::vector<Addr> exports;
    for (std::int64_t i = 0; i < arg(1); ++i) cp.push_back(page_of(code) + i);
    for (std::int64_t i = 0; i < arg(3); ++i) dp.push_back(page_of(data) + i);
    for (std::int64_t i = 0; i < arg(4); ++i) exports.push_back(code + 0x40 * i);
    SyscallResult r = isolate_library(s, tid, cp, dp, exports);
    if (r.is_ok()) w.last[tid] = r.value;
    return from_result(r);
  }
  if (v == "callback") return from_result(callback(s, tid, static_cast<Addr>(arg(0))));
  if (v == "jumpcode") return from_result(direct_jump(s, tid, static_cast<Addr>(arg(0))));
  if (v == "modecheck") {
    MiniCpu cpu;
    if (e.args[0] == "long64") cpu.mode = CpuMode::Long64;
    else if (e.args[0] == "compat32") cpu.mode = CpuMode::Compat32;
    else throw std::runtime_error("modecheck long64|compat32 <rax>");
    cpu.rax = static_cast<std::uint64_t>(arg(1));
    ModeCheckResult r = mode_check(cpu);
    if (r.verdict == ModeCheck::InvalidOpcodeTrap) return {Expect::Fault, "#UD", 0};
    if (cpu.mode == CpuMode::Compat32 || r.cpu.rax != cpu.rax) {
      return {Expect::Bypass, "check passed in wrong mode", 0};
    }
    return {Expect::Ok, "pass", 0};
  }
  if (v == "clone_direct") return from_result(direct_clone(s, tid));
  throw std::runtime_error("unhandled verb " + v);
}

}  // namespace

namespace detail {

World make_world(const GateConfig& config, const Scenario& sc, std::uint64_t seed) {
  World w;
  w.s = boot(config, seed);
  apply_setup(w.s, sc);
  w.attacker.seed(seed ^ 0xa77ac4e5ULL);
  w.events = &sc.events;
  w.kind = config.kind;

  std::map<std::string, std::size_t> by_label;
  for (std::size_t i = 0; i < sc.events.size(); ++i) {
    const Event& e = sc.events[i];
    const std::string label = e.tid ? "t" + std::to_string(*e.tid) : "kernel";
    auto it = by_label.find(label);
    if (it == by_label.end()) {
      it = by_label.emplace(label, w.actors.size()).first;
      w.actors.push_back({label, e.tid, {}, 0, false, 0});
    }
    w.actors[it->second].events.push_back(i);
    w.actor_of.push_back(it->second);
  }
  w.records.resize(sc.events.size());
  return w;
}

bool actor_enabled(const World& w, std::size_t a) {
  const Actor& ac = w.actors[a];
  if (ac.cursor >= ac.events.size()) return false;
  if (ac.tid && !w.s.threads.count(*ac.tid)) return false;
  if (ac.in_call && syscall_blocked(w.s, *ac.tid)) return false;
  return true;
}

namespace {

void record(World& w, std::size_t idx, Outcome o) {
  const Event& e = (*w.events)[idx];
  EventRecord r;
  r.line = e.line;
  r.actor = e.tid ? "t" + std::to_string(*e.tid) : "kernel";
  r.text = e.text;
  r.expected = e.expected(w.kind);
  r.actual = o.actual;
  r.detail = std::move(o.detail);
  r.pkru_transitions = o.pkru;
  r.match = r.expected == r.actual;
  if (o.actual == Expect::Bypass) w.bypassed = true;
  w.records[idx] = std::move(r);
}

void inject_due(World& w, Tid tid) {
  auto it = w.inject.find(tid);
  if (it == w.inject.end()) return;
  const ThreadCtx& t = w.s.thread(tid);
  if (!t.inflight) return;
  auto& list = it->second;
  for (std::size_t i = 0; i < list.size();) {
    if (list[i].first == t.inflight->next) {
      const int signo = list[i].second;
      list.erase(list.begin() + static_cast<std::ptrdiff_t>(i));
      kernel_deliver(w.s, tid, signo);
    } else {
      ++i;
    }
  }
}

void finish_call(World& w, Actor& ac, const SyscallResult& r) {
  const std::size_t idx = ac.events[ac.cursor];
  const Event& e = (*w.events)[idx];
  Outcome o = from_result(r);
  if (w.s.exposures != ac.exposures_before) {
    o.actual = Expect::Bypass;
    o.detail += " [handler consumed memory the caller cannot access]";
  }
  if (r.is_ok()) {
    w.last[*ac.tid] = r.value;
    if (e.verb == "open" || e.verb == "openat" || e.verb == "dup") w.last_fd = r.value;
    if (e.verb == "mmap" || e.verb == "mremap") w.last_map[*ac.tid] = r.value;
  }
  record(w, idx, std::move(o));
  ac.in_call = false;
  ++ac.cursor;
}

}  // namespace

void check_step(World& w, const InvariantHook& hook) {
  const MachineState& s = w.s;
  SafetyVerdict v = safety_check(s);
  if (!v.safe()) {
    w.sp_violations += v.violations.size();
    if (!w.breach) w.breach_detail = v.describe();
    w.breach = true;
  }
  auto flag = [&](const std::string& what) {
    if (!w.breach) w.breach_detail = what;
    w.breach = true;
  };
  if (s.trampoline.config.kind == GateKind::Ephemeral) {
    for (const auto& [tid, t] : s.threads) {
      if (!ephemeral_clean_for(s, tid)) flag("syscall byte visible to untrusted t" + std::to_string(tid));
    }
  }
  if (!queue_consistent(s)) flag("pending slot without kernel mask bit");
  if (!frames_untrusted(s)) flag("frame with trusted pkru issued");
  if (!signals_conserved(s)) flag("accepted signal lost");
  if (auto m = monitor_invariants(s); !m.empty()) flag(m);
  if (hook) {
    if (auto h = hook(s); !h.empty() && w.hook_failure.empty()) w.hook_failure = h;
  }
}

std::string step_actor(World& w, std::size_t a) {
  Actor& ac = w.actors[a];
  const std::size_t idx = ac.events[ac.cursor];
  const Event& e = (*w.events)[idx];
  std::string label = ac.label + ":" + e.verb;

  if (!ac.tid) {
    // kernel: signal <signo> t<N>
    const Tid target = static_cast<Tid>(std::stoul(e.args[1].substr(1)));
    if (w.s.threads.count(target)) {
      kernel_deliver(w.s, target, static_cast<int>(eval(w, target, e.args[0])));
      record(w, idx, {Expect::Ok, "delivered", 0});
    } else {
      record(w, idx, {Expect::Fault, "no such thread", 0});
    }
    ++ac.cursor;
    return label;
  }

  const Tid tid = *ac.tid;
  if (ac.in_call) {
    inject_due(w, tid);
    // The injected signal may have killed the process; the call still unwinds.
    const Phase phase = w.s.thread(tid).inflight->next;
    StepOutcome o = step_syscall(w.s, tid);
    if (o.kind == StepOutcome::Kind::Blocked) throw std::logic_error("stepped a blocked call");
    if (o.kind == StepOutcome::Kind::Completed) finish_call(w, ac, o.result);
    return label + "@" + to_string(phase);
  }

  if (is_syscall_verb(e.verb)) {
    std::vector<SyscallArg> args;
    for (const std::string& tok : e.args) args.push_back(eval_arg(w, tid, tok));
    SyscallRequest req = make_request(tid, e.verb, std::move(args));
    if (auto r = begin_syscall(w.s, req)) {
      finish_call(w, ac, *r);
      return label;
    }
    ac.in_call = true;
    ac.exposures_before = w.s.exposures;
    inject_due(w, tid);
    StepOutcome o = step_syscall(w.s, tid);
    if (o.kind == StepOutcome::Kind::Completed) finish_call(w, ac, o.result);
    return label + "@enter";
  }

  const std::uint64_t before = w.s.exposures;
  Outcome o = run_special(w, tid, e);
  if (w.s.exposures != before) o.actual = Expect::Bypass;
  record(w, idx, std::move(o));
  ++ac.cursor;
  return label;
}

void fill_unrun(World& w) {
  for (std::size_t i = 0; i < w.records.size(); ++i) {
    if (!w.records[i]) record(w, i, {Expect::Fault, "not run", 0});
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

using namespace detail;

nlohmann::ordered_json Report::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["variant"] = variant;
  j["seed"] = seed;
  auto& evs = j["events"] = nlohmann::ordered_json::array();
  for (const EventRecord& e : events) {
    nlohmann::ordered_json r;
    r["line"] = e.line;
    r["actor"] = e.actor;
    r["event"] = e.text;
    r["expected"] = to_string(e.expected);
    r["actual"] = to_string(e.actual);
    r["detail"] = e.detail;
    r["pkru_transitions"] = e.pkru_transitions;
    r["match"] = e.match;
    evs.push_back(std::move(r));
  }
  j["pkru_transitions"] = pkru_transitions;
  j["sp_violations"] = sp_violations;
  j["exposures"] = exposures;
  j["breach"] = breach;
  j["breach_detail"] = breach_detail;
  if (outcome) {
    j["outcome"] = to_string(*outcome);
  } else {
    j["outcome"] = nullptr;
  }
  j["outcome_met"] = outcome_met;
  j["pass"] = pass;
  j["exit_code"] = exit_code();
  return j;
}

Report run_scenario(const GateConfig& config, const Scenario& sc, std::uint64_t seed) {
  World w = make_world(config, sc, seed);
  check_step(w, {});
  // File order, each event run to completion before the next starts.
  for (std::size_t i = 0; i < sc.events.size() && !w.breach; ++i) {
    const std::size_t a = w.actor_of[i];
    if (!actor_enabled(w, a) || w.actors[a].events[w.actors[a].cursor] != i) continue;
    do {
      step_actor(w, a);
      check_step(w, {});
    } while (w.actors[a].in_call && !w.breach);
  }
  fill_unrun(w);

  Report r;
  r.scenario = sc.name;
  r.variant = variant_name(config);
  r.seed = seed;
  for (auto& rec : w.records) {
    r.pkru_transitions += rec->pkru_transitions;
    r.events.push_back(*rec);
  }
  r.sp_violations = w.sp_violations;
  r.breach = w.breach;
  r.breach_detail = w.breach_detail;
  r.exposures = w.s.exposures;
  r.bypassed = w.bypassed || w.s.exposures > 0;
  r.outcome = sc.outcome;
  if (sc.outcome == Expect::Deny) r.outcome_met = !r.bypassed;
  if (sc.outcome == Expect::Bypass) r.outcome_met = r.bypassed;
  r.pass = !r.breach && r.outcome_met &&
           std::all_of(r.events.begin(), r.events.end(),
                       [](const EventRecord& e) { return e.match; });
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct Explorer {
  const Scenario& sc;
  const ExploreOptions& opts;
  InterleaveReport rep;
  std::vector<std::string> trace;

  void leaf(World& w) {
    fill_unrun(w);
    ++rep.schedules;
    if (rep.schedules > opts.budget) throw BudgetExceeded(opts.budget);
    const bool bypassed = w.bypassed || w.s.exposures > 0;
    if (bypassed) ++rep.bypassing;
    if (w.breach) ++rep.breaches;
    std::string why;
    if (w.breach) {
      why = "breach: " + w.breach_detail;
    } else if (!w.hook_failure.empty()) {
      why = "invariant: " + w.hook_failure;
    } else if (sc.outcome == Expect::Deny) {
      if (bypassed) why = "bypass";
    } else if (!sc.outcome) {
      for (const auto& r : w.records) {
        if (!r->match) {
          why = "line " + std::to_string(r->line) + " expected " + to_string(r->expected) +
                " got " + to_string(r->actual) + " (" + r->detail + ")";
          break;
        }
      }
    }
    if (!why.empty()) {
      if (rep.failing++ == 0) {
        rep.first_failure = trace;
        rep.first_failure_reason = why;
      }
    }
  }

  void explore(World& w, std::optional<std::size_t> prev, int preemptions) {
    std::vector<std::size_t> enabled;
    for (std::size_t a = 0; a < w.actors.size(); ++a) {
      if (actor_enabled(w, a)) enabled.push_back(a);
    }
    if (enabled.empty() || w.breach) {
      leaf(w);
      return;
    }
    const bool prev_enabled =
        prev && std::find(enabled.begin(), enabled.end(), *prev) != enabled.end();
    for (std::size_t a : enabled) {
      const int cost = prev_enabled && a != *prev ? 1 : 0;
      if (preemptions + cost > opts.depth) continue;
      World child = w;
      trace.push_back(step_actor(child, a));
      check_step(child, opts.hook);
      explore(child, a, preemptions + cost);
      trace.pop_back();
    }
  }
};

}  // namespace

nlohmann::ordered_json InterleaveReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["variant"] = variant;
  j["depth"] = depth;
  j["schedules"] = schedules;
  j["failing"] = failing;
  j["bypassing"] = bypassing;
  j["breaches"] = breaches;
  j["first_failure"] = first_failure;
  j["first_failure_reason"] = first_failure_reason;
  j["pass"] = pass;
  j["exit_code"] = exit_code();
  return j;
}

InterleaveReport interleave_explore(const GateConfig& config, const Scenario& sc,
                                    const ExploreOptions& opts) {
  if (sc.threads().size() > 3) {
    throw std::invalid_argument("interleave_explore: more than 3 threads");
  }
  Explorer ex{sc, opts, {}, {}};
  ex.rep.scenario = sc.name;
  ex.rep.variant = variant_name(config);
  ex.rep.depth = opts.depth;
  World w = make_world(config, sc, opts.seed);
  check_step(w, opts.hook);
  ex.explore(w, std::nullopt, 0);
  if (sc.outcome == Expect::Bypass) {
    // A negative control: the race must be reachable in some schedule.
    ex.rep.pass = ex.rep.bypassing > 0 && ex.rep.breaches == 0;
  } else {
    ex.rep.pass = ex.rep.failing == 0;
  }
  return ex.rep;
}

}  // namespace endosim

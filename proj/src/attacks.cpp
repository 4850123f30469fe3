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

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "endosim/formal.hpp"
#include "endosim/harness.hpp"
#include "endosim/monitor.hpp"
#include "endosim/nexpoline.hpp"
#include "endosim/signals.hpp"

namespace endosim {

const char* to_string(Cell c) {
  return c == Cell::Prevented ? "Prevented" : "Vulnerable";
}

const std::vector<AttackRow>& attack_rows() {
  static const std::vector<AttackRow> rows = {
      {1, "Inconsistency of PKU Permission", {"01_pku_inconsistency.scn"}},
      {2, "Inconsistency of PT Permissions", {"02_pt_permissions.scn"}},
      {3, "Mappings with Mutable Backings", {"03_mutable_backings.scn"}},
      {4, "Changing Code by Relocation", {"04_relocation.scn"}},
      {5, "Modifying PKRU via sigreturn", {"05_sigreturn_pkru.scn"}},
      {6, "Race condition in Signal Delivery", {"06_signal_race.scn"}},
      {7, "Race condition in Scanning", {"07_scan_race.scn"}},
      {8, "Determination of Trusted Mappings", {"08_trusted_mappings.scn"}},
      {9, "Influencing Behavior with seccomp", {"09_seccomp.scn"}},
      {10, "Modifying Trusted Mappings", {"10_modify_trusted.scn"}},
      {11, "Forged Signal", {"11_forged_signal.scn"}},
      {12, "Fork Bomb", {"12_fork_bomb.scn"}},
      {13, "Syscall Arguments Abuse", {"13_args_abuse.scn"}},
      {14, "TSX attack", {"14_tsx.scn"}},
      {15,
       "Race condition",
       {"15_race_threads.scn", "15_race_pwritev.scn", "15_race_lseek.scn"}},
  };
  return rows;
}

const std::vector<std::string>& attack_columns() {
  static const std::vector<std::string> cols = {"secc_rand:32", "secc_eph",
                                                "secc_cet"};
  return cols;
}

AttackMatrix AttackMatrix::expected() {
  AttackMatrix m;
  for (const AttackRow& r : attack_rows()) m.rows.push_back(r.name);
  m.columns = attack_columns();
  m.cells.assign(m.rows.size(), std::vector<Cell>(m.columns.size(), Cell::Prevented));
  m.notes.assign(m.rows.size(), std::vector<std::string>(m.columns.size()));
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i] == "Fork Bomb" || m.rows[i] == "TSX attack") m.cells[i][0] = Cell::Vulnerable;
  }
  return m;
}

nlohmann::ordered_json AttackMatrix::to_json() const {
  nlohmann::ordered_json j;
  j["columns"] = columns;
  auto& rs = j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    nlohmann::ordered_json r;
    r["attack"] = rows[i];
    for (std::size_t c = 0; c < columns.size(); ++c) {
      nlohmann::ordered_json cell;
      cell["cell"] = to_string(cells[i][c]);
      cell["note"] = notes.empty() ? "" : notes[i][c];
      r[columns[c]] = std::move(cell);
    }
    rs.push_back(std::move(r));
  }
  j["matches_expected"] = *this == expected();
  return j;
}

std::string AttackMatrix::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(38) << "attack";
  for (const std::string& c : columns) os << std::setw(14) << c;
  os << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << std::setw(38) << rows[i];
    for (Cell c : cells[i]) os << std::setw(14) << to_string(c);
    os << "\n";
  }
  return os.str();
}

std::uint64_t forkbomb_windows(const GateConfig& c) {
  // Non-random gates get the budget the default random gate would need.
  const std::uint32_t pages = c.kind == GateKind::Random ? c.pages : kRandomPages;
  const std::uint32_t freq = c.kind == GateKind::Random ? c.rerand_freq : 32;
  const double p = boost::rational_cast<double>(guess_probability(pages, freq));
  return static_cast<std::uint64_t>(std::ceil(20.0 / p));
}

AttackMatrix run_attack_suite(std::uint64_t seed, const std::filesystem::path& dir) {
  AttackMatrix m = AttackMatrix::expected();
  for (std::size_t i = 0; i < attack_rows().size(); ++i) {
    const AttackRow& row = attack_rows()[i];
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      const GateConfig cfg = parse_variant(m.columns[c]);
      bool vulnerable = false;
      std::string note;
      for (const std::string& f : row.files) {
        const Scenario sc = load_scenario(dir / "attacks" / f);
        auto add = [&](const std::string& s) {
          if (!note.empty()) note += "; ";
          note += f + ": " + s;
        };
        if (sc.threads().size() > 1) {
          ExploreOptions o;
          o.depth = 6;
          o.seed = seed;
          InterleaveReport r = interleave_explore(cfg, sc, o);
          if (r.bypassing > 0 || r.breaches > 0) {
            vulnerable = true;
            add(std::to_string(r.bypassing) + "/" + std::to_string(r.schedules) +
                " schedules bypass");
          } else if (!r.pass) {
            add("mismatch: " + r.first_failure_reason);
          }
        } else {
          Report r = run_scenario(cfg, sc, seed);
          if (r.bypassed || r.exposures > 0 || r.breach) {
            vulnerable = true;
            for (const EventRecord& e : r.events) {
              if (e.actual == Expect::Bypass) add("line " + std::to_string(e.line) + ": " + e.detail);
            }
            if (r.breach) add("breach: " + r.breach_detail);
          }
          for (const EventRecord& e : r.events) {
            if (!e.match && e.actual != Expect::Bypass) {
              add("mismatch line " + std::to_string(e.line) + ": " + e.detail);
            }
          }
        }
      }
      m.cells[i][c] = vulnerable ? Cell::Vulnerable : Cell::Prevented;
      m.notes[i][c] = note;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json MonteCarloResult::to_json() const {
  nlohmann::ordered_json j;
  j["pages"] = pages;
  j["freq"] = freq;
  j["trials"] = trials;
  j["bypasses"] = bypasses;
  j["empirical_rate"] = empirical_rate;
  j["formula_rate"] = std::to_string(formula_rate.numerator()) + "/" +
                      std::to_string(formula_rate.denominator());
  j["formula_value"] = formula_value;
  j["ratio"] = empirical_rate > 0 ? formula_value / empirical_rate : 0.0;
  return j;
}

MonteCarloResult monte_carlo_guess(std::uint32_t pages, std::uint32_t freq,
                                   std::uint64_t trials, std::uint64_t seed) {
  if (trials < 10'000) throw std::invalid_argument("monte_carlo_guess: fewer than 10^4 trials");
  GateConfig c = parse_variant("secc_rand:" + std::to_string(freq));
  c.pages = pages;
  MachineState victim = boot(c, seed);
  std::mt19937_64 attacker(seed ^ 0x5eedf00dULL);
  const ThreadGate& g = victim.trampoline.threads.at(0);
  const std::uint64_t positions = position_count(pages);
  const Addr base = region_begin(g);

  MonteCarloResult r;
  r.pages = pages;
  r.freq = freq;
  r.trials = trials;
  for (std::uint64_t t = 0; t < trials; ++t) {
    rerandomize(victim, 0);
    for (std::uint32_t i = 0; i < freq; ++i) {
      const Addr guess = base + uniform_below(attacker, positions);
      if (attack_jump(victim, 0, guess) == ProbeOutcome::UncheckedSyscallExecuted) {
        ++r.bypasses;
        break;
      }
    }
  }
  r.empirical_rate = trials ? static_cast<double>(r.bypasses) / static_cast<double>(trials) : 0.0;
  r.formula_rate = guess_probability(pages, freq);
  r.formula_value = boost::rational_cast<double>(r.formula_rate);
  return r;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v = {"secc_rand:32", "secc_eph", "disp_eph",
                                             "secc_cet", "disp_cet"};
  return v;
}

nlohmann::ordered_json FuzzStats::to_json() const {
  nlohmann::ordered_json j;
  j["traces"] = traces;
  j["steps"] = steps;
  j["commits"] = commits;
  j["denials"] = denials;
  j["sp_violations"] = sp_violations;
  j["breaches"] = breaches;
  j["ephemeral_checks"] = ephemeral_checks;
  j["ephemeral_violations"] = ephemeral_violations;
  j["invariant_failures"] = invariant_failures;
  j["calls"] = calls;
  j["first_failure"] = first_failure;
  return j;
}

namespace {

class TraceGen {
 public:
  explicit TraceGen(std::uint64_t seed) : rng_(seed) {}

  SyscallRequest next(const MachineState& s) {
    std::vector<Tid> ready;
    for (const auto& [tid, t] : s.threads) {
      if (t.current_domain.is_untrusted() && !t.inflight) ready.push_back(tid);
    }
    const Tid tid = ready.empty() ? 0 : ready[below(ready.size())];
    const std::vector<std::string>& ops = op_names();
    const std::string& op = ops[below(ops.size())];
    return build(s, tid, op);
  }

 private:
  static const std::vector<std::string>& op_names() {
    // Repeats weight the common calls.
    static const std::vector<std::string> ops = {
        "getpid", "gettid", "sched_yield", "open", "open", "openat", "read", "read",
        "write", "write", "pread64", "lseek", "close", "dup", "dup2", "mmap", "mmap",
        "mmap", "mprotect", "mprotect", "munmap", "mremap", "madvise", "rt_sigaction",
        "rt_sigaction", "rt_sigprocmask", "kill", "kill", "kill", "rt_sigreturn",
        "sigaltstack", "clone", "fork", "link", "symlink", "unlink", "rename",
        "clock_gettime", "uname", "prctl", "process_vm_readv", "seccomp", "ptrace",
        "pkey_mprotect", "execve", "ioctl"};
    return ops;
  }

  std::uint64_t below(std::uint64_t n) { return uniform_below(rng_, n); }
  bool coin(int percent) { return below(100) < static_cast<std::uint64_t>(percent); }

  // A page address drawn from places both legitimate and hostile.
  Addr some_page(const MachineState& s, Tid tid) {
    using namespace layout;
    switch (below(9)) {
      case 0: return thread_buffer(s, tid);
      case 1: return kSecretAddr;
      case 2: return page_addr(kMonitorCode + below(kMonitorCodePages));
      case 3: return page_addr(kAppCode + below(kAppCodePages));
      case 4: return page_addr(kAppData + below(kAppDataPages));
      case 5: return page_addr(kTrampolineArea);
      case 6: return page_addr(stack_base(static_cast<Tid>(below(4))));
      default: return page_addr(kMmapArea + below(12));
    }
  }

  Fd some_fd(const MachineState& s) {
    if (s.open_files.empty() || coin(10)) return static_cast<Fd>(below(8));
    auto it = s.open_files.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(below(s.open_files.size())));
    return it->first;
  }

  std::string some_path() {
    static const char* paths[] = {"/tmp/a", "/tmp/b", "/etc/passwd", "/proc/self/mem",
                                  "/proc/1000/mem", "/tmp/link"};
    return paths[below(std::size(paths))];
  }

  std::int64_t prot() { return static_cast<std::int64_t>(below(8)); }

  SyscallRequest build(const MachineState& s, Tid tid, const std::string& op) {
    using namespace sysflag;
    std::vector<SyscallArg> a;
    const Addr buf = thread_buffer(s, tid);
    auto ptr_to = [&](std::uint64_t len) {
      return pointer(coin(70) ? buf + below(0x400) : some_page(s, tid) + below(64), len);
    };
    if (op == "open") {
      a = {path_arg(s, tid, some_path()), scalar(0)};
    } else if (op == "openat") {
      a = {scalar(-100), path_arg(s, tid, some_path()), scalar(0)};
    } else if (op == "read" || op == "write") {
      const std::uint64_t len = 1 + below(64);
      a = {scalar(some_fd(s)), ptr_to(len), scalar(static_cast<std::int64_t>(len))};
    } else if (op == "pread64") {
      const std::uint64_t len = 1 + below(64);
      a = {scalar(some_fd(s)), ptr_to(len), scalar(static_cast<std::int64_t>(len)),
           scalar(static_cast<std::int64_t>(below(32)))};
    } else if (op == "lseek") {
      a = {scalar(some_fd(s)), scalar(static_cast<std::int64_t>(below(64))),
           scalar(static_cast<std::int64_t>(below(3)))};
    } else if (op == "close" || op == "dup" || op == "ioctl") {
      a = {scalar(some_fd(s))};
    } else if (op == "dup2") {
      a = {scalar(some_fd(s)), scalar(static_cast<std::int64_t>(3 + below(6)))};
    } else if (op == "mmap") {
      std::int64_t flags = coin(50) ? kMapPrivate : kMapShared;
      if (coin(3)) flags |= kMapPrivate | kMapShared;
      const bool anon = coin(50);
      if (anon) flags |= kMapAnonymous;
      Addr addr = 0;
      if (coin(30)) {
        flags |= kMapFixed;
        addr = some_page(s, tid);
      }
      a = {scalar(static_cast<std::int64_t>(addr)),
           scalar(static_cast<std::int64_t>((1 + below(3)) * kPageSize)), scalar(prot()),
           scalar(flags), scalar(anon ? -1 : some_fd(s)),
           scalar(static_cast<std::int64_t>(below(2) * kPageSize))};
    } else if (op == "mprotect" || op == "munmap" || op == "madvise") {
      a = {scalar(static_cast<std::int64_t>(some_page(s, tid))),
           scalar(static_cast<std::int64_t>((1 + below(2)) * kPageSize))};
      if (op == "mprotect") a.push_back(scalar(prot()));
      if (op == "madvise") a.push_back(scalar(4));
    } else if (op == "mremap") {
      const bool fixed = coin(50);
      a = {scalar(static_cast<std::int64_t>(some_page(s, tid))),
           scalar(static_cast<std::int64_t>(kPageSize)),
           scalar(static_cast<std::int64_t>((1 + below(2)) * kPageSize)),
           scalar(fixed ? 3 : 1),
           scalar(static_cast<std::int64_t>(fixed ? some_page(s, tid) : 0))};
    } else if (op == "rt_sigaction") {
      static const int sigs[] = {kSigUsr1, kSigUsr2, kSigChld, kSigWinch, kSigUrg, kSigKill,
                                 kSigSegv};
      const int signo = sigs[below(std::size(sigs))];
      const Addr handler = coin(80) ? layout::kAppEntry + 0x100 : 0;
      a = {scalar(signo), scalar(static_cast<std::int64_t>(handler)),
           scalar(static_cast<std::int64_t>(below(4) << 9))};
    } else if (op == "rt_sigprocmask") {
      a = {scalar(static_cast<std::int64_t>(below(3))),
           scalar(static_cast<std::int64_t>(sig_bit(kSigUsr1) * below(2) |
                                            sig_bit(kSigUsr2) * below(2)))};
    } else if (op == "kill") {
      // Benign signals only: a handler is installed, or the default is to ignore.
      std::vector<int> ok = {kSigChld, kSigWinch, kSigUrg};
      for (int sig : {kSigUsr1, kSigUsr2}) {
        auto it = s.signals.table.find(sig);
        if (it != s.signals.table.end() && it->second.handler) ok.push_back(sig);
      }
      a = {scalar(s.pid), scalar(ok[below(ok.size())])};
    } else if (op == "sigaltstack") {
      a = {scalar(static_cast<std::int64_t>(some_page(s, tid))),
           scalar(static_cast<std::int64_t>(kPageSize))};
    } else if (op == "clone") {
      static const std::int64_t flags[] = {kCloneThread | kCloneVm, kCloneVm, 0};
      a = {scalar(flags[below(std::size(flags))])};
    } else if (op == "link" || op == "symlink" || op == "rename") {
      a = {path_arg(s, tid, some_path()), path_at(buf + 0xc00, "/tmp/n" + std::to_string(below(4)))};
    } else if (op == "unlink") {
      a = {path_arg(s, tid, "/tmp/n" + std::to_string(below(4)))};
    } else if (op == "clock_gettime") {
      a = {scalar(0), ptr_to(16)};
    } else if (op == "uname") {
      a = {ptr_to(390)};
    } else if (op == "prctl") {
      static const std::int64_t opts[] = {kPrGetSeccomp, kPrSetSeccomp, 15};
      a = {scalar(opts[below(std::size(opts))])};
    } else if (op == "process_vm_readv") {
      a = {scalar(coin(50) ? s.pid : s.pid + 1), ptr_to(8), ptr_to(8)};
    } else if (op == "execve") {
      // Rare: it resets most of the state the trace has built up.
      if (!coin(10)) return make_request(tid, "getpid");
      a = {path_arg(s, tid, coin(50) ? "/tmp/a" : "/proc/self/mem")};
    } else if (op == "seccomp" || op == "ptrace" || op == "pkey_mprotect") {
      a = {scalar(0)};
    }
    return make_request(tid, op, std::move(a));
  }

  std::mt19937_64 rng_;
};

}  // namespace

FuzzStats fuzz(std::uint64_t traces, std::uint64_t length, std::uint64_t seed) {
  FuzzStats st;
  for (std::uint64_t i = 0; i < traces; ++i) {
    const std::string& variant = all_variants()[i % all_variants().size()];
    const GateConfig cfg = parse_variant(variant);
    MachineState s = boot(cfg, seed + i);
    s.fs.create("/tmp/a");
    TraceGen gen(seed * 0x9e3779b97f4a7c15ULL + i);
    ++st.traces;
    for (std::uint64_t k = 0; k < length; ++k) {
      if (s.signals.terminated) break;
      SyscallRequest req = gen.next(s);
      ++st.steps;
      ++st.calls[req.name];
      const std::string label = variant + " trace " + std::to_string(i) + " step " +
                                std::to_string(k) + " " + req.name;
      TransitionResult r = apply_transition(s, syscall_transition(std::move(req)));
      if (r.kind == TransitionResult::Kind::SafetyBreach) {
        ++st.breaches;
        st.sp_violations += r.breach.violations.size();
        if (st.first_failure.empty()) st.first_failure = label + ": " + r.breach.describe();
        break;
      }
      if (r.kind == TransitionResult::Kind::PolicyDenied) {
        ++st.denials;
        continue;
      }
      ++st.commits;
      s = std::move(r.state);
      if (cfg.kind == GateKind::Ephemeral) {
        ++st.ephemeral_checks;
        if (!ephemeral_clean(s)) {
          ++st.ephemeral_violations;
          if (st.first_failure.empty()) st.first_failure = label + ": syscall byte visible";
        }
      }
      std::string inv = monitor_invariants(s);
      if (inv.empty() && !queue_consistent(s)) inv = "queue inconsistent";
      if (inv.empty() && !frames_untrusted(s)) inv = "trusted frame issued";
      if (inv.empty() && !signals_conserved(s)) inv = "signal lost";
      if (!inv.empty()) {
        ++st.invariant_failures;
        if (st.first_failure.empty()) st.first_failure = label + ": " + inv;
      }
    }
  }
  return st;
}

}  // namespace endosim

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

#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "endosim/signals.hpp"
#include "test_util.hpp"

namespace endosim {
namespace {

using testing::booted;
using testing::call;
using namespace sysflag;

TEST(SyscallTable, ConfigFileMatchesBuiltin) {
  std::ifstream in(std::string(ENDOSIM_SOURCE_DIR) + "/config/syscalls.tbl");
  ASSERT_TRUE(in) << "config/syscalls.tbl missing";
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(parse_syscall_table(ss.str()), builtin_syscall_table());
}

TEST(SyscallTable, Classification) {
  EXPECT_EQ(classify("getpid").kind, SyscallClass::Kind::Passthrough);
  EXPECT_EQ(classify("mmap"), (SyscallClass{SyscallClass::Kind::Virtualized, Handler::Mem}));
  EXPECT_EQ(classify("pkey_mprotect").kind, SyscallClass::Kind::Denied);
  EXPECT_THROW(classify("no_such_call"), UnknownSyscall);
}

TEST(SyscallTable, ParseErrorsCarryLineNumbers) {
  const char* bad[] = {"read virt:file\nwrite bogus\n", "read\n",
                       "read virt:nothing\n", "read deny\nread deny\n"};
  for (const char* text : bad) {
    try {
      parse_syscall_table(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const SyscallTableError& e) {
      EXPECT_GE(e.line(), 1);
      EXPECT_LE(e.line(), 2);
    }
  }
  auto t = parse_syscall_table("# comment\n\n  getpid   passthrough  # trailing\n");
  EXPECT_EQ(t.size(), 1u);
}

std::vector<std::uint8_t> bytes(std::initializer_list<std::uint8_t> b) { return b; }

// Naive oracle: first offset where either pattern starts.
ScanResult naive_scan(const std::vector<std::uint8_t>& b, bool sys) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i + 3 <= b.size() && b[i] == 0x0f && b[i + 1] == 0x01 && b[i + 2] == 0xef) {
      return ScanResult::found(i);
    }
    if (sys && i + 2 <= b.size() && b[i] == 0x0f && b[i + 1] == 0x05) {
      return ScanResult::found(i);
    }
  }
  return ScanResult::clean();
}

TEST(CodeScan, MatchesNaiveOracle) {
  std::mt19937_64 rng(7);
  // A skewed alphabet so the patterns show up often.
  const std::uint8_t alphabet[] = {0x0f, 0x01, 0xef, 0x05, 0x90, 0xc3};
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<std::uint8_t> b(rng() % 40);
    for (auto& x : b) x = alphabet[rng() % 6];
    for (bool sys : {false, true}) {
      ASSERT_EQ(code_scan(b, sys), naive_scan(b, sys)) << trial;
    }
  }
}

TEST(CodeScan, UnalignedAndEdges) {
  std::vector<std::uint8_t> b = {0x90, 0x90, 0x90, 0x0f, 0x01, 0xef};
  EXPECT_EQ(code_scan(b), ScanResult::found(3));
  b.pop_back();
  EXPECT_EQ(code_scan(b), ScanResult::clean());
  EXPECT_EQ(code_scan({}), ScanResult::clean());
}

TEST(Screening, StraddlingPointerIsCaughtOnTheSecondPage) {
  MachineState s = booted();
  // Last 4 bytes of the app data region plus 4 bytes past it, where nothing
  // is mapped: fine. Ending inside monitor data: rejected.
  const Addr end_of_data = page_addr(layout::kAppData + layout::kAppDataPages) - 4;
  auto ok = screen_args(s, make_request(0, "write", {scalar(1), pointer(end_of_data, 8), scalar(8)}),
                        DomainId::untrusted(0));
  EXPECT_EQ(ok.verdict, ScreenVerdict::Ok);

  const Addr before_monitor = page_addr(layout::kMonitorData) - 4;
  auto bad = screen_args(
      s, make_request(0, "write", {scalar(1), pointer(before_monitor, 8), scalar(8)}),
      DomainId::untrusted(0));
  EXPECT_EQ(bad.verdict, ScreenVerdict::PointsIntoTrusted);
  EXPECT_EQ(bad.offending, page_addr(layout::kMonitorData));
}

TEST(Screening, ForeignDomainAndWraparound) {
  MachineState s = booted();
  auto r = screen_args(s, make_request(0, "write", {scalar(1), pointer(~Addr{0} - 3, 8), scalar(8)}),
                       DomainId::untrusted(0));
  EXPECT_NE(r.verdict, ScreenVerdict::Ok);
  // From a subdomain, the application's data is foreign.
  auto f = screen_args(
      s, make_request(0, "write", {scalar(1), pointer(page_addr(layout::kAppData), 8), scalar(8)}),
      DomainId::untrusted(3));
  EXPECT_EQ(f.verdict, ScreenVerdict::PointsIntoForeignDomain);
}

TEST(Dispatch, PointerIntoMonitorDenied) {
  for (const std::string& v : testing::five_variants()) {
    MachineState s = booted(v);
    auto r = call(s, "write", {scalar(1), pointer(layout::kSecretAddr, 8), scalar(8)});
    EXPECT_EQ(r.reason, DenyReason::PointsIntoTrusted) << v;
  }
}

TEST(Dispatch, ExactlyTwoPkruTransitions) {
  // Every call that reaches the gate enters and leaves it once, whatever the
  // verdict.
  for (const std::string& v : testing::five_variants()) {
    MachineState s = booted(v);
    std::vector<SyscallRequest> reqs = {
        make_request(0, "getpid"),
        make_request(0, "open", {path_arg(s, 0, "/tmp/x"), scalar(0x42)}),
        make_request(0, "mmap", {scalar(0), scalar(4096), scalar(kProtRead | kProtWrite),
                                 scalar(kMapPrivate | kMapAnonymous), scalar(-1), scalar(0)}),
        make_request(0, "mprotect", {scalar(page_addr(layout::kAppData)), scalar(4096),
                                     scalar(kProtWrite | kProtExec)}),
        make_request(0, "pkey_alloc"),
        make_request(0, "not_a_syscall"),
        make_request(0, "write", {scalar(1), pointer(layout::kSecretAddr, 8), scalar(8)}),
        make_request(0, "rt_sigprocmask", {scalar(0), scalar(0)}),
    };
    for (const auto& req : reqs) {
      SyscallResult r = dispatch(s, req);
      EXPECT_EQ(r.pkru_transitions, 2) << v << " " << req.name;
      EXPECT_FALSE(s.thread(0).in_monitor);
      EXPECT_FALSE(s.thread(0).pkru.can_read(DomainId::trusted()));
    }
  }
}

TEST(MemRules, MmapAndMprotect) {
  MachineState s = booted();
  const std::int64_t anon = kMapPrivate | kMapAnonymous;
  EXPECT_EQ(call(s, "mmap", {scalar(0), scalar(4096), scalar(kProtWrite | kProtExec), scalar(anon),
                             scalar(-1), scalar(0)})
                .reason,
            DenyReason::WXViolation);
  EXPECT_EQ(call(s, "mmap", {scalar(0), scalar(4096), scalar(kProtRead | kProtExec),
                             scalar(kMapShared | kMapAnonymous), scalar(-1), scalar(0)})
                .reason,
            DenyReason::SharedToExec);
  EXPECT_EQ(call(s, "mmap", {scalar(page_addr(layout::kMonitorData)), scalar(4096),
                             scalar(kProtRead), scalar(anon | kMapFixed), scalar(-1), scalar(0)})
                .status,
            Status::Denied);

  // Writable data turned executable is scanned first.
  const Addr data = page_addr(layout::kAppData + 2);
  s.memory.write(data + 100, bytes({0x0f, 0x01, 0xef}));
  auto r = call(s, "mprotect", {scalar(data), scalar(4096), scalar(kProtRead | kProtExec)});
  EXPECT_EQ(r.reason, DenyReason::ScanFailed);
  // ...including the two bytes that spill onto the next page.
  s.memory.write(data + 100, bytes({0x90, 0x90, 0x90}));
  s.memory.write(data + 4095, bytes({0x0f}));
  s.memory.write(data + 4096, bytes({0x01, 0xef}));
  r = call(s, "mprotect", {scalar(data), scalar(4096), scalar(kProtRead | kProtExec)});
  EXPECT_EQ(r.reason, DenyReason::ScanFailed);
  s.memory.write(data + 4095, bytes({0x90}));
  r = call(s, "mprotect", {scalar(data), scalar(4096), scalar(kProtRead | kProtExec)});
  EXPECT_TRUE(r.is_ok()) << r.detail;
  EXPECT_EQ(s.page(page_of(data))->attr, PageAttr::Exec);
  EXPECT_TRUE(safety_check(s).safe());
  EXPECT_EQ(monitor_invariants(s), "");
}

TEST(MemRules, TrustedPagesUntouchable) {
  for (const std::string& v : testing::five_variants()) {
    MachineState s = booted(v);
    const MachineState before = s;
    for (const char* n : {"mprotect", "munmap", "madvise"}) {
      std::vector<SyscallArg> a = {scalar(page_addr(layout::kMonitorData)), scalar(4096)};
      if (std::string(n) != "munmap") a.push_back(scalar(std::string(n) == "madvise" ? 4 : 3));
      EXPECT_FALSE(call(s, n, a).is_ok()) << v << " " << n;
    }
    EXPECT_EQ(s.pages, before.pages);
    EXPECT_EQ(s.memory.load64(layout::kSecretAddr), before.memory.load64(layout::kSecretAddr));
  }
}

TEST(Locks, FdLockBlocksSecondThread) {
  MachineState s = booted();
  auto fd = call(s, "open", {path_arg(s, 0, "/tmp/f"), scalar(0x42)});
  ASSERT_TRUE(fd.is_ok());
  auto t = spawn_thread(s, 0, DomainId::untrusted(0));
  ASSERT_TRUE(t.is_ok());
  const Tid t1 = static_cast<Tid>(t.value);

  const Addr buf = thread_buffer(s, 0);
  ASSERT_FALSE(begin_syscall(s, make_request(0, "write", {scalar(fd.value), pointer(buf, 8), scalar(8)})));
  ASSERT_FALSE(begin_syscall(s, make_request(t1, "lseek", {scalar(fd.value), scalar(0), scalar(0)})));
  EXPECT_EQ(step_syscall(s, 0).phase, Phase::Enter);
  EXPECT_EQ(step_syscall(s, 0).phase, Phase::Screen);  // takes the fd lock
  EXPECT_EQ(step_syscall(s, t1).phase, Phase::Enter);
  EXPECT_TRUE(syscall_blocked(s, t1));
  EXPECT_EQ(step_syscall(s, t1).kind, StepOutcome::Kind::Blocked);
  StepOutcome o;
  while ((o = step_syscall(s, 0)).kind != StepOutcome::Kind::Completed) {}
  EXPECT_TRUE(o.result.is_ok()) << o.result.detail;
  EXPECT_FALSE(syscall_blocked(s, t1));
  while ((o = step_syscall(s, t1)).kind != StepOutcome::Kind::Completed) {}
  EXPECT_TRUE(o.result.is_ok());
  EXPECT_TRUE(s.locks.per_fd.empty());
}

TEST(Proc, ForkChildKeepsProtection) {
  for (const std::string& v : testing::five_variants()) {
    MachineState s = booted(v);
    auto r = call(s, "fork");
    ASSERT_TRUE(r.is_ok()) << v << " " << r.detail;
    ASSERT_EQ(s.children.size(), 1u);
    MachineState child = *s.children[0].state;
    EXPECT_EQ(child.pid, r.value);
    EXPECT_EQ(child.threads.size(), 1u);
    EXPECT_TRUE(safety_check(child).safe());
    EXPECT_EQ(monitor_invariants(child), "");
    // The child is itself a monitored process: its children are too.
    auto gr = call(child, "fork");
    ASSERT_TRUE(gr.is_ok());
    MachineState grand = *child.children[0].state;
    EXPECT_NE(grand.pid, child.pid);
    EXPECT_EQ(call(grand, "write", {scalar(1), pointer(layout::kSecretAddr, 8), scalar(8)}).reason,
              DenyReason::PointsIntoTrusted);
    EXPECT_EQ(grand.memory.load64(layout::kSecretAddr), s.memory.load64(layout::kSecretAddr));
  }
}

TEST(Proc, ProcfsMemDenied) {
  MachineState s = booted();
  EXPECT_EQ(call(s, "open", {path_arg(s, 0, "/proc/self/mem"), scalar(2)}).reason,
            DenyReason::SensitiveInode);
  EXPECT_EQ(call(s, "open", {path_arg(s, 0, "/proc/1000/mem"), scalar(2)}).reason,
            DenyReason::SensitiveInode);
}

}  // namespace
}  // namespace endosim

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

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

namespace endosim {
namespace {

using testing::booted;

std::size_t trusted_pages_with(const MachineState& s, bool want_write) {
  std::size_t n = 0;
  for (const auto& [p, rec] : s.pages) {
    if (rec.domain.is_trusted() && (want_write ? rec.perms.w : rec.perms.r)) ++n;
  }
  return n;
}

TEST(FormalState, InitialStateIsSafe) {
  MachineState s = new_initial();
  EXPECT_TRUE(safety_check(s).safe());
  ASSERT_EQ(s.threads.size(), 1u);
  EXPECT_TRUE(s.thread(0).current_domain.is_trusted());
  EXPECT_TRUE(s.open_files.empty());
  EXPECT_TRUE(s.file_mappings.empty());

  MachineState b = booted();
  EXPECT_TRUE(safety_check(b).safe());
  EXPECT_EQ(b.thread(0).current_domain, DomainId::untrusted(0));
  EXPECT_FALSE(b.thread(0).pkru.can_read(DomainId::trusted()));
}

TEST(FormalState, TrustedPkruInUntrustedThreadViolatesSp1AndSp2) {
  MachineState s = booted();
  s.thread(0).pkru = Pkru::all();
  SafetyVerdict v = safety_check(s);
  std::size_t sp1 = 0, sp2 = 0;
  for (const Violation& x : v.violations) {
    if (x.property == SafetyProperty::SP1) ++sp1;
    if (x.property == SafetyProperty::SP2) ++sp2;
  }
  EXPECT_EQ(sp1, trusted_pages_with(s, false));
  EXPECT_EQ(sp2, trusted_pages_with(s, true));
  EXPECT_GT(sp2, 0u);
}

TEST(FormalState, WritableExecutablePageViolatesSp3) {
  MachineState s = booted();
  s.pages[layout::kAppCode].perms = {true, true, true};
  SafetyVerdict v = safety_check(s);
  ASSERT_EQ(v.violations.size(), 1u);
  EXPECT_EQ(v.violations[0].property, SafetyProperty::SP3);
  EXPECT_EQ(v.violations[0].page, layout::kAppCode);
}

TEST(FormalState, FileRegionInTwoDomainsViolatesSp4) {
  MachineState s = booted();
  const PageNo a = layout::kMmapArea, b = layout::kMmapArea + 1;
  s.pages[a] = {DomainId::untrusted(0), PermSet::rw(), PageAttr::Shared, {}};
  s.pages[b] = {DomainId::untrusted(0), PermSet::rw(), PageAttr::Shared, {}};
  s.file_mappings = {{3, 0, 4096, page_addr(a)}, {3, 2048, 4096, page_addr(b)}};
  EXPECT_TRUE(safety_check(s).safe());

  s.pages[b].domain = DomainId::untrusted(1);
  SafetyVerdict v = safety_check(s);
  ASSERT_EQ(v.violations.size(), 1u);
  EXPECT_EQ(v.violations[0].property, SafetyProperty::SP4);

  // Disjoint offsets in different domains are fine.
  s.file_mappings[1].off = 4096;
  EXPECT_TRUE(safety_check(s).safe());
}

TEST(FormalState, OffsetIntersectionMatchesPointwiseOracle) {
  // Oracle: some integer offset lies in both half-open intervals.
  auto oracle = [](std::uint64_t ao, std::uint64_t al, std::uint64_t bo,
                   std::uint64_t bl) {
    for (std::uint64_t k = 0; k < 16; ++k) {
      if (k >= ao && k < ao + al && k >= bo && k < bo + bl) return true;
    }
    return false;
  };
  for (std::uint64_t ao = 0; ao < 6; ++ao)
    for (std::uint64_t al = 0; al < 6; ++al)
      for (std::uint64_t bo = 0; bo < 6; ++bo)
        for (std::uint64_t bl = 0; bl < 6; ++bl) {
          FileMappingRecord a{3, ao, al, 0}, b{3, bo, bl, 0};
          EXPECT_EQ(offset_intersects(a, b), oracle(ao, al, bo, bl))
              << ao << "+" << al << " vs " << bo << "+" << bl;
          EXPECT_EQ(offset_intersects(a, b), offset_intersects(b, a));
        }
}

TEST(FormalState, DeniedTransitionLeavesStateUntouched) {
  const MachineState s = booted();
  Transition t{"denied", [](MachineState& m) {
                 m.pages.clear();
                 return SyscallResult::denied(DenyReason::InvalidArgument);
               }};
  TransitionResult r = apply_transition(s, t);
  EXPECT_EQ(r.kind, TransitionResult::Kind::PolicyDenied);
  EXPECT_TRUE(r.state == s);
}

TEST(FormalState, BreachingTransitionIsRolledBack) {
  const MachineState s = booted();
  Transition t{"breach", [](MachineState& m) {
                 m.pages[layout::kAppData].perms = {true, true, true};
                 return SyscallResult::ok();
               }};
  TransitionResult r = apply_transition(s, t);
  EXPECT_EQ(r.kind, TransitionResult::Kind::SafetyBreach);
  EXPECT_TRUE(r.state == s);
  EXPECT_FALSE(r.breach.safe());
}

TEST(FormalState, TraceStopsAtFirstBreach) {
  const MachineState s = booted();
  Transition bad{"bad", [](MachineState& m) {
                   m.thread(0).pkru = Pkru::all();
                   return SyscallResult::ok();
                 }};
  std::vector<Transition> ts = {noop_transition(), bad, noop_transition()};
  TraceReport r = run_trace(s, ts);
  EXPECT_TRUE(r.breach);
  EXPECT_EQ(r.committed, 1u);
  EXPECT_EQ(r.results.size(), 2u);
}

// Composition: any sequence of committed safe transitions ends safe.
TEST(FormalState, RandomCommittedTracesStaySafe) {
  std::mt19937_64 rng(5);
  for (int trace = 0; trace < 50; ++trace) {
    MachineState s = booted(testing::five_variants()[trace % 5], trace);
    for (int i = 0; i < 30; ++i) {
      const PageNo p = layout::kMmapArea + rng() % 4;
      const std::int64_t prot = static_cast<std::int64_t>(rng() % 8);
      SyscallRequest req =
          rng() % 2 ? make_request(0, "mmap",
                                   {scalar(static_cast<std::int64_t>(page_addr(p))),
                                    scalar(4096), scalar(prot),
                                    scalar(sysflag::kMapPrivate | sysflag::kMapAnonymous |
                                           sysflag::kMapFixed),
                                    scalar(-1), scalar(0)})
                    : make_request(0, "mprotect",
                                   {scalar(static_cast<std::int64_t>(page_addr(p))),
                                    scalar(4096), scalar(prot)});
      TransitionResult r = apply_transition(s, syscall_transition(req));
      ASSERT_NE(r.kind, TransitionResult::Kind::SafetyBreach) << r.breach.describe();
      s = r.state;
      ASSERT_TRUE(safety_check(s).safe());
    }
  }
}

}  // namespace
}  // namespace endosim

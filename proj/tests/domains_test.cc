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

#include <random>

#include <gtest/gtest.h>

#include "endosim/signals.hpp"
#include "test_util.hpp"

namespace endosim {
namespace {

using testing::booted;

// A domain whose code is one page carved out of the application's data.
SyscallResult carve(MachineState& s, Tid tid, PageNo page, Ring ring) {
  DomainSpec spec;
  spec.code_pages = {page};
  spec.entrypoints = {page_addr(page) + 0x10};
  spec.ring = ring;
  return iv_create_domain(s, tid, spec);
}

TEST(Domains, CreateRekeysPagesAndLocksExec) {
  MachineState s = booted();
  const PageNo p = layout::kAppData + 3;
  auto r = carve(s, 0, p, Ring::Safebox);
  ASSERT_TRUE(r.is_ok()) << r.detail;
  EXPECT_EQ(s.page(p)->domain, DomainId::untrusted(static_cast<int>(r.value)));
  EXPECT_TRUE(s.domains.exec_locked);
  // U0 lost access.
  EXPECT_TRUE(user_load(s, 0, page_addr(p)).is_fault());
  // Pages can only be given away once.
  EXPECT_EQ(carve(s, 0, p, Ring::Safebox).reason, DenyReason::PageOwnedElsewhere);
  EXPECT_EQ(carve(s, 0, layout::kMonitorData, Ring::Safebox).reason,
            DenyReason::PageOwnedElsewhere);
  EXPECT_TRUE(safety_check(s).safe());
}

TEST(Domains, ExhaustedAtFourteenthCreation) {
  MachineState s = booted();
  int created = 0;
  for (int i = 0; i < 14; ++i) {
    auto r = carve(s, 0, layout::kAppData + i, Ring::Safebox);
    if (!r.is_ok()) {
      EXPECT_EQ(r.reason, DenyReason::DomainsExhausted);
      break;
    }
    ++created;
  }
  EXPECT_EQ(created, kMaxUntrusted - 1);
}

TEST(Domains, EntrypointsMustBeInCode) {
  MachineState s = booted();
  DomainSpec spec;
  spec.code_pages = {layout::kAppData};
  spec.entrypoints = {page_addr(layout::kAppData + 1)};
  EXPECT_EQ(iv_create_domain(s, 0, spec).reason, DenyReason::BadEntrypoint);
}

TEST(Xcall, NestedRoundTripRestoresExactly) {
  for (int depth = 1; depth <= 8; ++depth) {
    MachineState s = booted();
    std::vector<DomainId> ids;
    for (int i = 0; i < depth; ++i) {
      auto r = carve(s, 0, layout::kAppData + i, Ring::Unbox);
      ASSERT_TRUE(r.is_ok());
      ids.push_back(DomainId::untrusted(static_cast<int>(r.value)));
    }
    s.thread(0).rax = 0x1234;
    s.thread(0).rip = layout::kAppEntry + 0x40;
    std::vector<ThreadCtx> snapshots;
    for (DomainId d : ids) {
      snapshots.push_back(s.thread(0));
      auto r = xcall(s, 0, d, 0);
      ASSERT_TRUE(r.is_ok()) << r.detail;
      EXPECT_EQ(r.pkru_transitions, 2);
      EXPECT_EQ(s.thread(0).current_domain, d);
      EXPECT_EQ(s.thread(0).pkru, Pkru::only(d));
      EXPECT_TRUE(safety_check(s).safe());
    }
    EXPECT_EQ(s.thread(0).return_chain.size(), static_cast<std::size_t>(depth));
    for (int i = depth - 1; i >= 0; --i) {
      auto r = xreturn(s, 0);
      ASSERT_TRUE(r.is_ok()) << r.detail;
      EXPECT_EQ(r.pkru_transitions, 2);
      // rax carries the callee's result back; everything else is restored.
      ThreadCtx want = snapshots[i];
      want.rax = s.thread(0).rax;
      EXPECT_EQ(s.thread(0), want) << "depth " << depth << " level " << i;
    }
    EXPECT_EQ(xreturn(s, 0).reason, DenyReason::ReturnOrder);
  }
}

TEST(Xcall, ReturnCannotSkipLevels) {
  MachineState s = booted();
  auto a = DomainId::untrusted(static_cast<int>(carve(s, 0, layout::kAppData, Ring::Unbox).value));
  auto b = DomainId::untrusted(static_cast<int>(carve(s, 0, layout::kAppData + 1, Ring::Unbox).value));
  ASSERT_TRUE(xcall(s, 0, a, 0).is_ok());
  ASSERT_TRUE(xcall(s, 0, b, 0).is_ok());
  EXPECT_EQ(xreturn(s, 0, DomainId::untrusted(0)).reason, DenyReason::ReturnOrder);
  EXPECT_EQ(s.thread(0).current_domain, b);
  EXPECT_TRUE(xreturn(s, 0, a).is_ok());
}

TEST(Xcall, Rejections) {
  MachineState s = booted();
  auto a = DomainId::untrusted(static_cast<int>(carve(s, 0, layout::kAppData, Ring::Safebox).value));
  auto b = DomainId::untrusted(static_cast<int>(carve(s, 0, layout::kAppData + 1, Ring::Safebox).value));
  EXPECT_EQ(xcall(s, 0, a, 1).reason, DenyReason::BadEntrypoint);
  EXPECT_EQ(xcall(s, 0, DomainId::untrusted(12), 0).reason, DenyReason::BadEntrypoint);
  EXPECT_EQ(xcall(s, 0, DomainId::trusted(), 0).reason, DenyReason::BadEntrypoint);
  std::vector<std::int64_t> many(s.domains.xcall_arg_slots + 1, 0);
  EXPECT_EQ(xcall(s, 0, a, 0, many).reason, DenyReason::TooManyArgs);
  ASSERT_TRUE(xcall(s, 0, a, 0).is_ok());
  EXPECT_EQ(xcall(s, 0, a, 0).reason, DenyReason::SameDomain);
  // Two safeboxes do not call each other.
  EXPECT_EQ(xcall(s, 0, b, 0).reason, DenyReason::LateralCall);
}

TEST(Xcall, SignalsHeldUntilReturn) {
  MachineState s = booted();
  ASSERT_TRUE(vsigaction(s, 0, kSigUsr1, layout::kAppEntry + 0x80, 0).is_ok());
  auto a = DomainId::untrusted(static_cast<int>(carve(s, 0, layout::kAppData, Ring::Safebox).value));
  ASSERT_TRUE(xcall(s, 0, a, 0).is_ok());
  kernel_deliver(s, 0, kSigUsr1);
  EXPECT_FALSE(current_frame(s, 0).has_value());
  ASSERT_TRUE(xreturn(s, 0).is_ok());
  auto f = current_frame(s, 0);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->pkru, Pkru::only(DomainId::untrusted(0)));
}

TEST(Grants, DownwardOnlyAndRevocable) {
  MachineState s = booted();
  DomainSpec box;
  box.code_pages = {layout::kAppData};
  box.data_pages = {layout::kAppData + 1};
  box.entrypoints = {page_addr(layout::kAppData)};
  auto safe = DomainId::untrusted(static_cast<int>(iv_create_domain(s, 0, box).value));
  auto sand = DomainId::untrusted(
      static_cast<int>(carve(s, 0, layout::kAppData + 2, Ring::Sandbox).value));
  const PageNo req = layout::kAppData + 1;

  // The application may not hand pages up to the safebox.
  EXPECT_EQ(grant(s, 0, layout::kAppData + 5, safe).reason, DenyReason::UpwardGrant);

  ASSERT_TRUE(xcall(s, 0, safe, 0).is_ok());
  ASSERT_TRUE(grant(s, 0, req, sand).is_ok());
  ASSERT_TRUE(xcall(s, 0, sand, 0).is_ok());
  EXPECT_TRUE(user_store(s, 0, page_addr(req), 7).is_ok());
  EXPECT_EQ(grant(s, 0, req, sand).reason, DenyReason::NotOwner);
  EXPECT_EQ(revoke(s, 0, req).reason, DenyReason::NotOwner);
  ASSERT_TRUE(xreturn(s, 0).is_ok());

  ASSERT_TRUE(revoke(s, 0, req).is_ok());
  ASSERT_TRUE(revoke(s, 0, req).is_ok());
  ASSERT_TRUE(xcall(s, 0, sand, 0).is_ok());
  EXPECT_TRUE(user_load(s, 0, page_addr(req)).is_fault());
  EXPECT_EQ(grant(s, 0, layout::kAppData + 2, safe).reason, DenyReason::UpwardGrant);
  EXPECT_EQ(grant(s, 0, layout::kMonitorData, safe).reason, DenyReason::NotOwner);
  EXPECT_TRUE(safety_check(s).safe());
}

TEST(Domains, DirectJumpGrantsNothing) {
  MachineState s = booted();
  const PageNo p = layout::kAppData + 2;
  ASSERT_TRUE(carve(s, 0, p, Ring::Safebox).is_ok());
  s.memory.store64(page_addr(p) + 0x100, 99);
  ASSERT_TRUE(direct_jump(s, 0, page_addr(p) + 0x10).is_ok());
  EXPECT_EQ(s.thread(0).current_domain, DomainId::untrusted(0));
  EXPECT_TRUE(user_load(s, 0, page_addr(p) + 0x100).is_fault());
  EXPECT_TRUE(user_load(s, 0, layout::kSecretAddr).is_fault());
}

// Hand-stepped oracle of the check sequence.
MiniCpu oracle(MiniCpu c, bool& trapped) {
  trapped = false;
  if (c.mode == CpuMode::Long64) {
    c.cf = c.rax >> 63;
    c.rax <<= 1;
    c.rax += 1;
    c.cf = c.rax & 1;
    if (!c.cf) {
      trapped = true;
      return c;
    }
    c.cf = c.rax & 1;
    c.rax >>= 1;
    return c;
  }
  // Compat: dec eax; shl eax,1; dec eax; inc eax; bt eax,0 -> bit 0 clear.
  std::uint32_t e = static_cast<std::uint32_t>(c.rax);
  e -= 1;
  c.cf = e >> 31;
  e <<= 1;
  e -= 1;
  e += 1;
  c.rax = e;
  c.cf = e & 1;
  trapped = !c.cf;
  return c;
}

TEST(ModeCheck, HandSteppedExamples) {
  auto r = mode_check({0x5, false, CpuMode::Long64});
  EXPECT_EQ(r.verdict, ModeCheck::Pass);
  EXPECT_EQ(r.cpu.rax, 0x5u);
  r = mode_check({0x0, false, CpuMode::Long64});
  EXPECT_EQ(r.verdict, ModeCheck::Pass);
  EXPECT_EQ(r.cpu.rax, 0x0u);
  EXPECT_EQ(mode_check({0x5, false, CpuMode::Compat32}).verdict, ModeCheck::InvalidOpcodeTrap);
  EXPECT_EQ(mode_check_code().size(), 17u);
}

TEST(ModeCheck, AgreesWithOracleOver32BitRange) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < (1 << 16); ++i) {
    const std::uint64_t rax = i < 64 ? std::uint64_t{1} << (i % 32) : rng() & 0xffffffff;
    for (CpuMode m : {CpuMode::Long64, CpuMode::Compat32}) {
      bool trapped = false;
      MiniCpu want = oracle({rax, false, m}, trapped);
      auto got = mode_check({rax, false, m});
      ASSERT_EQ(got.verdict == ModeCheck::InvalidOpcodeTrap, trapped) << std::hex << rax;
      if (m == CpuMode::Long64) {
        ASSERT_EQ(got.cpu.rax, rax);
        ASSERT_EQ(got.cpu, want);
      } else {
        ASSERT_EQ(got.verdict, ModeCheck::InvalidOpcodeTrap);
      }
    }
  }
}

}  // namespace
}  // namespace endosim

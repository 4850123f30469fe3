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

#include <gtest/gtest.h>

#include <set>

#include "endosim/signals.hpp"
#include "test_util.hpp"

namespace endosim {
namespace {

using testing::booted;
using testing::call;

TEST(Probability, SixteenPagesThirtyTwoCalls) {
  EXPECT_EQ(guess_probability(16, 32), Probability(1, 1024));
  EXPECT_EQ(position_count(16), 65534u);
}

TEST(Probability, PositionCountMatchesEnumeration) {
  // A 3-byte gadget must fit entirely inside the region.
  for (std::uint32_t pages : {1u, 2u, 3u}) {
    std::uint64_t n = 0;
    for (std::uint64_t off = 0; off < pages * kPageSize; ++off) {
      if (off + kGadgetLen <= pages * kPageSize) ++n;
    }
    EXPECT_EQ(position_count(pages), n);
  }
}

TEST(Probability, FormulaIsExactTwoFOverRegionBytes) {
  for (std::uint32_t pages = 1; pages <= 16; ++pages) {
    for (std::uint32_t freq = 1; freq <= 64; ++freq) {
      const Probability p = guess_probability(pages, freq);
      // Cross-multiplied: p == 2f / (4096 pages), checked without division.
      EXPECT_EQ(p.numerator() * 4096 * pages, p.denominator() * 2 * freq);
    }
  }
  EXPECT_EQ(guess_probability(1, 1), Probability(1, 2048));
}

TEST(Variants, RoundTrip) {
  for (const std::string& v : testing::five_variants()) {
    EXPECT_EQ(variant_name(parse_variant(v)), v);
  }
  EXPECT_EQ(parse_variant("secc_rand:7").rerand_freq, 7u);
  EXPECT_EQ(parse_variant("secc_rand:7").pages, kRandomPages);
  for (const char* bad : {"secc_rand:", "secc_rand:0", "secc_rand:x", "eph", "disp_rand:3", ""}) {
    EXPECT_THROW(parse_variant(bad), BadVariant) << bad;
  }
}

TEST(UniformBelow, InRangeAndDeterministic) {
  std::mt19937_64 a(3), b(3);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t x = uniform_below(a, 65534);
    EXPECT_LT(x, 65534u);
    EXPECT_EQ(x, uniform_below(b, 65534));
  }
  std::mt19937_64 c(9);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200; ++i) seen.insert(uniform_below(c, 4));
  EXPECT_EQ(seen.size(), 4u);
}

// Counts the offsets in tid's region at which a blind jump runs a syscall.
int executable_offsets(const MachineState& s, Tid tid) {
  const ThreadGate& g = s.trampoline.threads.at(tid);
  int n = 0;
  for (Addr a = region_begin(g); a < region_end(g); ++a) {
    if (attack_jump(s, tid, a) == ProbeOutcome::UncheckedSyscallExecuted) ++n;
  }
  return n;
}

TEST(Gate, RandomGadgetIsTheOnlyHit) {
  MachineState s = booted("secc_rand:32");
  EXPECT_EQ(executable_offsets(s, 0), 1);
  EXPECT_EQ(attack_jump(s, 0, *gadget_addr(s, 0)), ProbeOutcome::UncheckedSyscallExecuted);
}

TEST(Gate, EphemeralRegionHoldsNoSyscallWhileUntrusted) {
  for (const char* v : {"secc_eph", "disp_eph"}) {
    MachineState s = booted(v);
    EXPECT_EQ(executable_offsets(s, 0), 0);
    EXPECT_TRUE(ephemeral_clean(s));
    ASSERT_TRUE(call(s, "getpid").is_ok());
    EXPECT_TRUE(ephemeral_clean(s));
    EXPECT_EQ(executable_offsets(s, 0), 0);
  }
}

TEST(Gate, CetNeverExecutesFromABlindJump) {
  for (const char* v : {"secc_cet", "disp_cet"}) {
    MachineState s = booted(v);
    ASSERT_TRUE(gadget_addr(s, 0).has_value());
    EXPECT_EQ(executable_offsets(s, 0), 0);
    EXPECT_EQ(attack_jump(s, 0, *gadget_addr(s, 0)), ProbeOutcome::CetControlFault);
  }
}

TEST(Gate, CetReturnSlotTamperingFaults) {
  MachineState s = booted("secc_cet");
  gate_enter(s, 0);
  tamper_return_slot(s, 0, 0xdeadbeef);
  EXPECT_EQ(gate_exit(s, 0, DomainId::untrusted(0)), GateFault::CetControlFault);

  MachineState ok = booted("secc_cet");
  gate_enter(ok, 0);
  EXPECT_EQ(gate_exit(ok, 0, DomainId::untrusted(0)), GateFault::None);
}

TEST(Gate, OtherThreadsGadgetIsFiltered) {
  for (const std::string& v : testing::five_variants()) {
    MachineState s = booted(v);
    SyscallResult r = spawn_thread(s, 0, DomainId::untrusted(0));
    ASSERT_TRUE(r.is_ok()) << v;
    const Tid t1 = static_cast<Tid>(r.value);
    // Hold t1 inside a syscall so the ephemeral gadget is present.
    ASSERT_FALSE(begin_syscall(s, make_request(t1, "getpid")).has_value());
    ASSERT_EQ(step_syscall(s, t1).kind, StepOutcome::Kind::Progressed);
    const ThreadGate& g = s.trampoline.threads.at(t1);
    for (Addr a = region_begin(g); a < region_end(g); a += 1) {
      ASSERT_EQ(attack_jump(s, 0, a), ProbeOutcome::KilledByFilter) << v;
    }
  }
}

TEST(Gate, TsxFindsOnlyTheRandomGadget) {
  MachineState r = booted("secc_rand:32");
  const Addr gadget = *gadget_addr(r, 0);
  EXPECT_EQ(tsx_probe(r, 0, gadget + 2), ProbeOutcome::TxCommit);
  EXPECT_EQ(tsx_probe(r, 0, gadget), ProbeOutcome::TxAbort);

  MachineState e = booted("secc_eph");
  const ThreadGate& g = e.trampoline.threads.at(0);
  for (Addr a = region_begin(g); a < region_end(g); ++a) {
    ASSERT_EQ(tsx_probe(e, 0, a), ProbeOutcome::TxAbort);
  }

  GateConfig off = parse_variant("secc_rand:32");
  off.tsx_enabled = false;
  MachineState d = boot(off, 1);
  EXPECT_FALSE(tsx_probe(d, 0, gadget).has_value());
}

TEST(Gate, RerandomizesEveryFreqCalls) {
  MachineState s = booted("secc_rand:3");
  const ThreadGate& g = s.trampoline.threads.at(0);
  // Oracle: a counter that resets after reaching freq.
  std::uint32_t counter = g.rerand_counter;
  std::uint64_t expected = g.rerandomizations;
  for (int i = 0; i < 20; ++i) {
    if (counter >= 3) {
      ++expected;
      counter = 0;
    }
    ++counter;
    ASSERT_TRUE(call(s, "getpid").is_ok());
    EXPECT_EQ(s.trampoline.threads.at(0).rerandomizations, expected);
  }
}

TEST(Cleanup, EveryInterruptPointEndsWithGadgetAbsent) {
  // Exhaustive over one or two interrupts at any of the cleanup steps.
  const int sigs[] = {kSigUsr1, kSigUsr2};
  for (int a = 0; a < kCleanupSteps; ++a) {
    for (int b = a; b < kCleanupSteps; ++b) {
      for (int same = 0; same < 2; ++same) {
        MachineState s = booted("secc_eph");
        gate_enter(s, 0);
        std::vector<Interrupt> irqs = {{a, sigs[0]}, {b, sigs[same ? 0 : 1]}};
        CleanupReport r = cleanup_transaction(s, 0, irqs);
        EXPECT_TRUE(r.gadget_absent);
        // Oracle: a restart per interrupt whose signal was not yet queued.
        const int distinct = same ? 1 : 2;
        EXPECT_EQ(r.restarts, distinct) << a << "," << b << "," << same;
        EXPECT_EQ(r.passes, distinct + 1);
        EXPECT_TRUE(queue_consistent(s));
      }
    }
  }
}

TEST(Threads, QueenAndDirectClone) {
  MachineState sec = booted("secc_eph");
  EXPECT_TRUE(sec.trampoline.queen_present);
  EXPECT_FALSE(direct_clone(sec, 0).is_ok());
  EXPECT_TRUE(spawn_thread(sec, 0, DomainId::untrusted(0)).is_ok());

  MachineState disp = booted("disp_eph");
  EXPECT_FALSE(disp.trampoline.queen_present);
  EXPECT_TRUE(direct_clone(disp, 0).is_ok());
  SyscallResult r = spawn_thread(disp, 0, DomainId::untrusted(0));
  ASSERT_TRUE(r.is_ok());
  // Each thread owns a separate region.
  const auto& g0 = disp.trampoline.threads.at(0);
  const auto& g1 = disp.trampoline.threads.at(static_cast<Tid>(r.value));
  EXPECT_NE(g0.region_base, g1.region_base);
}

}  // namespace
}  // namespace endosim

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

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace endosim {
namespace {

using testing::booted;
using testing::call;

constexpr Addr kHandler = layout::kAppEntry + 0x100;

void install(MachineState& s, int signo) {
  ASSERT_TRUE(vsigaction(s, 0, signo, kHandler, 0).is_ok());
}

TEST(Signals, RegistrationRules) {
  MachineState s = booted();
  EXPECT_EQ(vsigaction(s, 0, kSigSys, kHandler, 0).reason, DenyReason::ReservedSignal);
  EXPECT_FALSE(vsigaction(s, 0, kSigKill, kHandler, 0).is_ok());
  EXPECT_FALSE(vsigaction(s, 0, 0, kHandler, 0).is_ok());
  EXPECT_FALSE(vsigaction(s, 0, 65, kHandler, 0).is_ok());
  install(s, kSigUsr1);
  // The kernel only knows the monitor's entrypoint.
  EXPECT_EQ(s.signals.kernel_handlers.at(kSigUsr1), layout::kSignalEntry);
  EXPECT_EQ(s.signals.table.at(kSigUsr1).handler, kHandler);
}

TEST(Signals, UntrustedDeliveryBuildsUntrustedFrame) {
  MachineState s = booted();
  install(s, kSigUsr1);
  kernel_deliver(s, 0, kSigUsr1);
  auto f = current_frame(s, 0);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->pkru, Pkru::only(DomainId::untrusted(0)));
  EXPECT_EQ(s.thread(0).rip, kHandler);
  EXPECT_TRUE(frames_untrusted(s));
  EXPECT_TRUE(queue_consistent(s));
  EXPECT_TRUE(signals_conserved(s));
  EXPECT_TRUE(safety_check(s).safe());
}

TEST(Signals, DeferredWhileInMonitor) {
  MachineState s = booted();
  install(s, kSigUsr1);
  gate_enter(s, 0);
  kernel_deliver(s, 0, kSigUsr1);
  EXPECT_FALSE(current_frame(s, 0).has_value());
  EXPECT_EQ(s.thread(0).sig.slots.count(kSigUsr1), 1u);
  // A second and third instance: one held by the kernel, then coalesced.
  kernel_deliver(s, 0, kSigUsr1);
  kernel_deliver(s, 0, kSigUsr1);
  EXPECT_EQ(s.thread(0).sig.slots.size(), 1u);
  EXPECT_TRUE(s.thread(0).sig.kernel_held & sig_bit(kSigUsr1));
  EXPECT_EQ(s.signals.coalesced, 1u);
  EXPECT_TRUE(queue_consistent(s));

  ASSERT_EQ(gate_exit(s, 0, DomainId::untrusted(0)), GateFault::None);
  deliver_pending(s, 0);
  auto f = current_frame(s, 0);
  ASSERT_TRUE(f.has_value());
  EXPECT_FALSE(f->pkru.can_read(DomainId::trusted()));
  EXPECT_TRUE(signals_conserved(s));
}

TEST(Signals, SelectPendingMaskCombinations) {
  // Oracle over the four (user mask, override mask) combinations for a
  // single pending signal: the override, when present, replaces the user
  // mask for one selection.
  struct Case {
    bool user_blocks;
    std::optional<bool> override_blocks;
  };
  const Case cases[] = {{false, std::nullopt}, {true, std::nullopt}, {false, true},
                        {true, false}};
  for (const Case& c : cases) {
    MachineState s = booted();
    ThreadSignals& ts = s.thread(0).sig;
    ts.slots[kSigUsr1] = SigInfo{kSigUsr1, 1};
    ts.kernel_mask |= sig_bit(kSigUsr1);
    if (c.user_blocks) ts.user_mask = sig_bit(kSigUsr1);
    if (c.override_blocks) set_override_mask(s, 0, *c.override_blocks ? sig_bit(kSigUsr1) : 0);
    const bool blocked = c.override_blocks ? *c.override_blocks : c.user_blocks;
    auto got = select_pending(s, 0);
    EXPECT_EQ(got.has_value(), !blocked);
    // Override is consumed only by a selection.
    EXPECT_EQ(s.thread(0).sig.override_mask.has_value(),
              c.override_blocks.has_value() && blocked);
  }
}

TEST(Signals, LowestSignoFirst) {
  MachineState s = booted();
  install(s, kSigUsr1);
  install(s, kSigUsr2);
  ASSERT_TRUE(vsigprocmask(s, 0, 0, sig_bit(kSigUsr1) | sig_bit(kSigUsr2)).is_ok());
  kernel_deliver(s, 0, kSigUsr2);
  kernel_deliver(s, 0, kSigUsr1);
  ASSERT_FALSE(select_pending(s, 0).has_value());
  ASSERT_TRUE(vsigprocmask(s, 0, 2, 0).is_ok());
  auto got = select_pending(s, 0);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(*got, kSigUsr1);
}

TEST(Signals, DefaultActions) {
  MachineState s = booted();
  kernel_deliver(s, 0, kSigChld);
  EXPECT_FALSE(s.signals.terminated);
  EXPECT_EQ(s.signals.defaulted, 1u);
  kernel_deliver(s, 0, kSigUsr1);
  EXPECT_TRUE(s.signals.terminated);
  EXPECT_TRUE(signals_conserved(s));
}

TEST(Signals, ForgedFramesRejected) {
  for (const std::string& v : testing::five_variants()) {
    for (ForgedLanding l :
         {ForgedLanding::Start, ForgedLanding::AtSwitch, ForgedLanding::PastCheck}) {
      MachineState s = booted(v);
      const MachineState before = s;
      ForgedFrame f{l, Pkru::all(), layout::kAppEntry};
      EXPECT_EQ(forged_entry(s, 0, f), ForgedOutcome::Rejected) << v << " " << to_string(l);
      EXPECT_EQ(s.thread(0).pkru, before.thread(0).pkru);
      EXPECT_EQ(s.signals.forged_rejected, 1u);
    }
  }
}

TEST(Signals, SigreturnChecksTokenAndPkru) {
  MachineState s = booted();
  install(s, kSigUsr1);
  kernel_deliver(s, 0, kSigUsr1);
  const SigFrame f = *current_frame(s, 0);

  SigFrame edited = f;
  edited.pkru = Pkru::all();
  EXPECT_EQ(vsigreturn(s, 0, edited).reason, DenyReason::TamperedFrame);
  SigFrame forged = f;
  forged.token ^= 1;
  EXPECT_EQ(vsigreturn(s, 0, forged).reason, DenyReason::TamperedFrame);

  ASSERT_TRUE(vsigreturn(s, 0, f).is_ok());
  EXPECT_EQ(s.thread(0).rip, f.rip);
  EXPECT_EQ(vsigreturn(s, 0, f).reason, DenyReason::NoFrame);
}

TEST(Signals, SigreturnThroughTheMonitorReadsTheStack) {
  MachineState s = booted();
  install(s, kSigUsr1);
  ASSERT_TRUE(call(s, "kill", {scalar(s.pid), scalar(kSigUsr1)}).is_ok());
  ASSERT_TRUE(current_frame(s, 0).has_value());
  SyscallResult r = call(s, "rt_sigreturn");
  EXPECT_TRUE(r.is_ok()) << r.detail;
  EXPECT_FALSE(current_frame(s, 0).has_value());
}

TEST(Signals, AltstackMustBeCallerMemory) {
  MachineState s = booted();
  EXPECT_EQ(vsigaltstack(s, 0, layout::kSecretAddr, 4096).reason,
            DenyReason::PointsIntoTrusted);
  EXPECT_TRUE(vsigaltstack(s, 0, page_addr(layout::kAppData), 4096).is_ok());
  install(s, kSigUsr1);
  kernel_deliver(s, 0, kSigUsr1);
  auto f = current_frame(s, 0);
  ASSERT_TRUE(f.has_value());
  EXPECT_TRUE(f->on_altstack);
  EXPECT_EQ(page_of(f->frame_addr), layout::kAppData);
}

// Storm: three signal types at two threads, every interleaving point a
// kernel delivery can hit in a syscall.
TEST(Signals, StormKeepsQueueInvariants) {
  const int sigs[] = {kSigUsr1, kSigUsr2, kSigChld};
  for (const std::string& v : testing::five_variants()) {
    MachineState s = booted(v);
    for (int sig : sigs) install(s, sig);
    SyscallResult t = spawn_thread(s, 0, DomainId::untrusted(0));
    ASSERT_TRUE(t.is_ok());
    const Tid t1 = static_cast<Tid>(t.value);
    for (int round = 0; round < 6; ++round) {
      for (Tid tid : {Tid{0}, t1}) {
        ASSERT_FALSE(begin_syscall(s, make_request(tid, "getpid")).has_value());
        for (;;) {
          kernel_deliver(s, tid, sigs[(round + tid) % 3]);
          kernel_deliver(s, tid == 0 ? t1 : 0, sigs[(round + 1) % 3]);
          ASSERT_TRUE(queue_consistent(s));
          ASSERT_TRUE(frames_untrusted(s));
          ASSERT_TRUE(signals_conserved(s));
          for (const auto& [id, th] : s.threads) {
            for (const auto& [signo, info] : th.sig.slots) ASSERT_EQ(info.signo, signo);
          }
          if (step_syscall(s, tid).kind == StepOutcome::Kind::Completed) break;
        }
        // Handlers return so the next round can deliver again.
        while (current_frame(s, tid)) {
          ASSERT_TRUE(vsigreturn(s, tid, *current_frame(s, tid)).is_ok());
        }
      }
    }
    EXPECT_FALSE(s.signals.terminated);
    EXPECT_GT(s.signals.delivered, 0u);
  }
}

}  // namespace
}  // namespace endosim

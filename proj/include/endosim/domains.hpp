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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "endosim/machine.hpp"

namespace endosim {

struct DomainSpec {
  std::vector<PageNo> code_pages;
  std::vector<PageNo> data_pages;
  std::vector<Addr> entrypoints;
  Ring ring = Ring::Safebox;
  // Generate one stub per entrypoint in the monitor's stub area.
  bool make_stubs = false;
};

// On success value() is the new domain's untrusted index.
SyscallResult iv_create_domain(MachineState& s, Tid tid, const DomainSpec& spec);

SyscallResult xcall(MachineState& s, Tid tid, DomainId target,
                    std::size_t entry_id, std::span<const std::int64_t> args = {});

SyscallResult xreturn(MachineState& s, Tid tid,
                      std::optional<DomainId> claimed_caller = std::nullopt);

SyscallResult grant(MachineState& s, Tid tid, PageNo page, DomainId grantee);
SyscallResult revoke(MachineState& s, Tid tid, PageNo page);

// Creates a safebox for a library whose exported symbols live at `exports`.
SyscallResult isolate_library(MachineState& s, Tid tid,
                              std::vector<PageNo> code_pages,
                              std::vector<PageNo> data_pages,
                              std::vector<Addr> exports);

// Plain control transfer without the monitor: the thread keeps its domain
// and PKRU wherever it lands.
SyscallResult direct_jump(MachineState& s, Tid tid, Addr target);

// A library calling back out into application code keeps running with the
// library's privileges.
SyscallResult callback(MachineState& s, Tid tid, Addr target);

// User-mode load/store by the thread, subject to PKRU and page bits.
SyscallResult user_load(const MachineState& s, Tid tid, Addr a);
SyscallResult user_store(MachineState& s, Tid tid, Addr a, std::uint64_t v);

// ---------------------------------------------------------------------------
// Mode check run before the gate's syscall: in 32-bit compatibility mode the
// REX prefixes decode as `dec eax`, the tested bit comes out clear and ud2
// fires.

enum class CpuMode { Long64, Compat32 };

struct MiniCpu {
  std::uint64_t rax = 0;
  bool cf = false;
  CpuMode mode = CpuMode::Long64;
  friend bool operator==(const MiniCpu&, const MiniCpu&) = default;
};

enum class ModeCheck { Pass, InvalidOpcodeTrap };

const char* to_string(ModeCheck m);

// shl rax,1; inc rax; bt eax,0; jc +2; ud2; shr rax,1
std::span<const std::uint8_t> mode_check_code();

struct ModeCheckResult {
  MiniCpu cpu;
  ModeCheck verdict = ModeCheck::Pass;
};

ModeCheckResult mode_check(MiniCpu cpu);

}  // namespace endosim

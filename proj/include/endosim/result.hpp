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
#include <string>

namespace endosim {

enum class DenyReason {
  None,
  UnknownSyscall,
  ForbiddenSyscall,
  NotUntrusted,
  InvalidArgument,
  // file objects
  SensitiveInode,
  BadFd,
  NoSuchFile,
  // argument screening
  PointsIntoTrusted,
  PointsIntoForeignDomain,
  // mappings
  WXViolation,
  AliasViolation,
  ForeignDomain,
  ScanFailed,
  SharedToExec,
  ExecLocked,
  NotMapped,
  // processes and threads
  ForbiddenCloneFlags,
  CrossProcessMemory,
  QueenRequired,
  // signals
  ReservedSignal,
  TamperedFrame,
  NoFrame,
  // domains
  BadEntrypoint,
  ReturnOrder,
  LateralCall,
  SameDomain,
  TooManyArgs,
  NotOwner,
  UpwardGrant,
  DomainsExhausted,
  PageOwnedElsewhere,
  // gate
  TsxDisabled,
};

const char* to_string(DenyReason r);

enum class Status { Ok, Denied, Fault };

const char* to_string(Status s);

// Outcome of one monitor-mediated operation. `pkru_transitions` and
// `lock_waits` are audit counters for the call, not part of machine state.
struct SyscallResult {
  Status status = Status::Ok;
  std::int64_t value = 0;
  DenyReason reason = DenyReason::None;
  std::string detail;
  int pkru_transitions = 0;
  int lock_waits = 0;

  static SyscallResult ok(std::int64_t v = 0) {
    SyscallResult r;
    r.value = v;
    return r;
  }
  static SyscallResult denied(DenyReason why, std::string detail = {}) {
    SyscallResult r;
    r.status = Status::Denied;
    r.reason = why;
    r.detail = std::move(detail);
    return r;
  }
  static SyscallResult fault(std::string detail) {
    SyscallResult r;
    r.status = Status::Fault;
    r.detail = std::move(detail);
    return r;
  }

  bool is_ok() const { return status == Status::Ok; }
  bool is_denied() const { return status == Status::Denied; }
  bool is_fault() const { return status == Status::Fault; }
};

}  // namespace endosim

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

#include "endosim/core.hpp"
#include "endosim/result.hpp"

namespace endosim {

bool parse_perms(const std::string& text, PermSet& out) {
  PermSet p;
  if (text == "none" || text == "-") {
    out = p;
    return true;
  }
  if (text.empty()) return false;
  for (char c : text) {
    switch (c) {
      case 'r': if (p.r) return false; p.r = true; break;
      case 'w': if (p.w) return false; p.w = true; break;
      case 'x': if (p.x) return false; p.x = true; break;
      default: return false;
    }
  }
  out = p;
  return true;
}

std::string to_string(PermSet p) {
  std::string s;
  s += p.r ? 'r' : '-';
  s += p.w ? 'w' : '-';
  s += p.x ? 'x' : '-';
  return s;
}

std::string to_string(DomainId d) {
  if (d.is_trusted()) return "T";
  return "U" + std::to_string(d.index());
}

std::string to_string(Ring r) {
  switch (r) {
    case Ring::Sandbox: return "sandbox";
    case Ring::Unbox: return "unbox";
    case Ring::Safebox: return "safebox";
    case Ring::Endokernel: return "endokernel";
  }
  return "?";
}

const char* to_string(DenyReason r) {
  switch (r) {
    case DenyReason::None: return "None";
    case DenyReason::UnknownSyscall: return "UnknownSyscall";
    case DenyReason::ForbiddenSyscall: return "ForbiddenSyscall";
    case DenyReason::NotUntrusted: return "NotUntrusted";
    case DenyReason::InvalidArgument: return "InvalidArgument";
    case DenyReason::SensitiveInode: return "SensitiveInode";
    case DenyReason::BadFd: return "BadFd";
    case DenyReason::NoSuchFile: return "NoSuchFile";
    case DenyReason::PointsIntoTrusted: return "PointsIntoTrusted";
    case DenyReason::PointsIntoForeignDomain: return "PointsIntoForeignDomain";
    case DenyReason::WXViolation: return "WXViolation";
    case DenyReason::AliasViolation: return "AliasViolation";
    case DenyReason::ForeignDomain: return "ForeignDomain";
    case DenyReason::ScanFailed: return "ScanFailed";
    case DenyReason::SharedToExec: return "SharedToExec";
    case DenyReason::ExecLocked: return "ExecLocked";
    case DenyReason::NotMapped: return "NotMapped";
    case DenyReason::ForbiddenCloneFlags: return "ForbiddenCloneFlags";
    case DenyReason::CrossProcessMemory: return "CrossProcessMemory";
    case DenyReason::QueenRequired: return "QueenRequired";
    case DenyReason::ReservedSignal: return "ReservedSignal";
    case DenyReason::TamperedFrame: return "TamperedFrame";
    case DenyReason::NoFrame: return "NoFrame";
    case DenyReason::BadEntrypoint: return "BadEntrypoint";
    case DenyReason::ReturnOrder: return "ReturnOrder";
    case DenyReason::LateralCall: return "LateralCall";
    case DenyReason::SameDomain: return "SameDomain";
    case DenyReason::TooManyArgs: return "TooManyArgs";
    case DenyReason::NotOwner: return "NotOwner";
    case DenyReason::UpwardGrant: return "UpwardGrant";
    case DenyReason::DomainsExhausted: return "DomainsExhausted";
    case DenyReason::PageOwnedElsewhere: return "PageOwnedElsewhere";
    case DenyReason::TsxDisabled: return "TsxDisabled";
  }
  return "?";
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::Denied: return "denied";
    case Status::Fault: return "fault";
  }
  return "?";
}

}  // namespace endosim

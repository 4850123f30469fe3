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

#include "endosim/machine.hpp"

#include <stdexcept>
#include <string_view>

namespace endosim {

const char* to_string(PageAttr a) {
  switch (a) {
    case PageAttr::Exec: return "exec";
    case PageAttr::Retired: return "retired";
    case PageAttr::Shared: return "shared";
    case PageAttr::DomainPrivate: return "private";
  }
  return "?";
}

const char* to_string(ScreenVerdict v) {
  switch (v) {
    case ScreenVerdict::Ok: return "Ok";
    case ScreenVerdict::PointsIntoTrusted: return "PointsIntoTrusted";
    case ScreenVerdict::PointsIntoForeignDomain: return "PointsIntoForeignDomain";
  }
  return "?";
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Enter: return "enter";
    case Phase::Screen: return "screen";
    case Phase::Handle: return "handle";
    case Phase::Exit: return "exit";
    case Phase::Done: return "done";
  }
  return "?";
}

const char* to_string(ByteClass b) {
  switch (b) {
    case ByteClass::Int3: return "int3";
    case ByteClass::SyscallByte: return "syscall";
    case ByteClass::RetByte: return "ret";
  }
  return "?";
}

std::optional<Inode> Filesystem::lookup(const std::string& path) const {
  auto it = paths.find(path);
  if (it == paths.end()) return std::nullopt;
  return it->second;
}

Inode Filesystem::create(const std::string& path) {
  if (auto existing = lookup(path)) return *existing;
  Inode ino = next_inode++;
  paths[path] = ino;
  inodes[ino] = InodeRecord{};
  if (is_sensitive_path(path)) sensitive.insert(ino);
  return ino;
}

bool Filesystem::is_sensitive_path(const std::string& path) const {
  // procfs memory files of any process, whether or not they were ever
  // looked up.
  constexpr std::string_view kPrefix = "/proc/", kSuffix = "/mem";
  std::string_view v = path;
  if (v.size() > kPrefix.size() + kSuffix.size() && v.starts_with(kPrefix) &&
      v.ends_with(kSuffix)) {
    auto who = v.substr(kPrefix.size(),
                        v.size() - kPrefix.size() - kSuffix.size());
    if (who == "self" ||
        who.find_first_not_of("0123456789") == std::string_view::npos) {
      return true;
    }
  }
  auto ino = lookup(path);
  return ino && sensitive.count(*ino) > 0;
}

ThreadCtx& MachineState::thread(Tid tid) {
  auto it = threads.find(tid);
  if (it == threads.end()) {
    throw std::out_of_range("no thread " + std::to_string(tid));
  }
  return it->second;
}

const ThreadCtx& MachineState::thread(Tid tid) const {
  auto it = threads.find(tid);
  if (it == threads.end()) {
    throw std::out_of_range("no thread " + std::to_string(tid));
  }
  return it->second;
}

const PageRecord* MachineState::page(PageNo p) const {
  auto it = pages.find(p);
  return it == pages.end() ? nullptr : &it->second;
}

DomainId acting_domain(const ThreadCtx& t) {
  if (t.inflight) return t.inflight->caller;
  return t.current_domain;
}

Ring ring_of(const MachineState& s, DomainId d) {
  if (d.is_trusted()) return Ring::Endokernel;
  auto it = s.domains.endoprocesses.find(d.index());
  if (it == s.domains.endoprocesses.end()) return Ring::Sandbox;
  return it->second.ring;
}

Pkru pkru_for(DomainId d) {
  if (d.is_trusted()) return Pkru::all();
  return Pkru::only(d);
}

}  // namespace endosim

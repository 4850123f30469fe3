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

#include <compare>
#include <cstdint>
#include <string>

namespace endosim {

inline constexpr std::uint64_t kPageSize = 4096;

using Addr = std::uint64_t;
using PageNo = std::uint64_t;
using Tid = std::uint32_t;
using Fd = std::int32_t;
using Inode = std::uint64_t;

constexpr PageNo page_of(Addr a) { return a / kPageSize; }
constexpr Addr page_addr(PageNo p) { return p * kPageSize; }
constexpr bool page_aligned(Addr a) { return a % kPageSize == 0; }
constexpr std::uint64_t round_up_pages(std::uint64_t len) {
  return (len + kPageSize - 1) / kPageSize;
}

struct PermSet {
  bool r = false;
  bool w = false;
  bool x = false;

  static constexpr PermSet none() { return {}; }
  static constexpr PermSet rw() { return {true, true, false}; }
  static constexpr PermSet rx() { return {true, false, true}; }
  static constexpr PermSet ro() { return {true, false, false}; }

  friend bool operator==(const PermSet&, const PermSet&) = default;
};

// Parses "rwx"-style strings ("r", "rw", "rx", "rwx", "none", "-").
bool parse_perms(const std::string& text, PermSet& out);
std::string to_string(PermSet p);

// Untrusted domain indices are 0..kMaxUntrusted-1. Untrusted(0) is the
// application itself (the unbox); iv_create_domain hands out 1..13.
inline constexpr int kMaxUntrusted = 14;

class DomainId {
 public:
  static constexpr DomainId trusted() { return DomainId(-1); }
  static constexpr DomainId untrusted(int index) { return DomainId(index); }

  constexpr bool is_trusted() const { return index_ < 0; }
  constexpr bool is_untrusted() const { return index_ >= 0; }
  constexpr int index() const { return index_; }

  // Protection-key slot: the monitor owns key 0, Untrusted(i) owns key i+1.
  constexpr int key() const { return index_ + 1; }

  friend constexpr auto operator<=>(const DomainId&, const DomainId&) = default;

 private:
  constexpr explicit DomainId(int index) : index_(index) {}
  int index_;
};

std::string to_string(DomainId d);

// Per-thread protection-key rights register image, one bit per key.
struct Pkru {
  std::uint16_t read = 0;
  std::uint16_t write = 0;

  static constexpr Pkru all() { return {0xffff, 0xffff}; }
  static constexpr Pkru only(DomainId d) {
    auto bit = static_cast<std::uint16_t>(1u << d.key());
    return {bit, bit};
  }

  constexpr bool can_read(DomainId d) const { return (read >> d.key()) & 1u; }
  constexpr bool can_write(DomainId d) const {
    return (write >> d.key()) & 1u;
  }
  constexpr void grant(DomainId d, bool r, bool w) {
    auto bit = static_cast<std::uint16_t>(1u << d.key());
    if (r) read |= bit;
    if (w) write |= bit;
  }

  friend constexpr bool operator==(const Pkru&, const Pkru&) = default;
};

// Privilege rings for nested boxing: endokernel > safebox > unbox > sandbox.
enum class Ring { Sandbox = 0, Unbox = 1, Safebox = 2, Endokernel = 3 };

std::string to_string(Ring r);

}  // namespace endosim

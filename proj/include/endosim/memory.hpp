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

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "endosim/core.hpp"

namespace endosim {

// Sparse page contents. Only pages that were ever written hold bytes;
// everything else reads as zero. Pages are shared copy-on-write so that
// copying a MachineState stays cheap.
class ByteMemory {
 public:
  using Page = std::array<std::uint8_t, kPageSize>;

  std::uint8_t load8(Addr a) const;
  std::uint64_t load64(Addr a) const;
  std::vector<std::uint8_t> read(Addr a, std::uint64_t len) const;

  void store8(Addr a, std::uint8_t v);
  void store64(Addr a, std::uint64_t v);
  void write(Addr a, std::span<const std::uint8_t> bytes);

  // Page-granular moves for mremap and exec emulation.
  void move_page(PageNo from, PageNo to);
  void copy_page(PageNo from, PageNo to);
  void drop_page(PageNo p);

  std::vector<std::uint8_t> page_bytes(PageNo p) const;

  friend bool operator==(const ByteMemory& a, const ByteMemory& b);

 private:
  Page& mutable_page(PageNo p);

  std::map<PageNo, std::shared_ptr<const Page>> pages_;
};

}  // namespace endosim

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

#include "endosim/memory.hpp"

#include <algorithm>

namespace endosim {

std::uint8_t ByteMemory::load8(Addr a) const {
  auto it = pages_.find(page_of(a));
  if (it == pages_.end()) return 0;
  return (*it->second)[a % kPageSize];
}

std::uint64_t ByteMemory::load64(Addr a) const {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | load8(a + static_cast<Addr>(i));
  return v;
}

std::vector<std::uint8_t> ByteMemory::read(Addr a, std::uint64_t len) const {
  std::vector<std::uint8_t> out(len);
  for (std::uint64_t i = 0; i < len; ++i) out[i] = load8(a + i);
  return out;
}

ByteMemory::Page& ByteMemory::mutable_page(PageNo p) {
  auto& slot = pages_[p];
  if (!slot) {
    auto fresh = std::make_shared<Page>();
    fresh->fill(0);
    slot = fresh;
  } else if (slot.use_count() > 1) {
    slot = std::make_shared<Page>(*slot);
  }
  // Sole owner at this point.
  return const_cast<Page&>(*slot);
}

void ByteMemory::store8(Addr a, std::uint8_t v) {
  mutable_page(page_of(a))[a % kPageSize] = v;
}

void ByteMemory::store64(Addr a, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    store8(a + static_cast<Addr>(i), static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void ByteMemory::write(Addr a, std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i) store8(a + i, bytes[i]);
}

void ByteMemory::move_page(PageNo from, PageNo to) {
  auto it = pages_.find(from);
  if (it == pages_.end()) {
    pages_.erase(to);
    return;
  }
  auto page = it->second;
  pages_.erase(it);
  pages_[to] = std::move(page);
}

void ByteMemory::copy_page(PageNo from, PageNo to) {
  auto it = pages_.find(from);
  if (it == pages_.end()) {
    pages_.erase(to);
    return;
  }
  pages_[to] = it->second;
}

void ByteMemory::drop_page(PageNo p) { pages_.erase(p); }

std::vector<std::uint8_t> ByteMemory::page_bytes(PageNo p) const {
  auto it = pages_.find(p);
  if (it == pages_.end()) return std::vector<std::uint8_t>(kPageSize, 0);
  return {it->second->begin(), it->second->end()};
}

bool operator==(const ByteMemory& a, const ByteMemory& b) {
  auto is_zero = [](const ByteMemory::Page& p) {
    return std::all_of(p.begin(), p.end(), [](auto v) { return v == 0; });
  };
  // Compare by content; an all-zero stored page equals an absent one.
  auto ia = a.pages_.begin();
  auto ib = b.pages_.begin();
  while (ia != a.pages_.end() || ib != b.pages_.end()) {
    if (ib == b.pages_.end() || (ia != a.pages_.end() && ia->first < ib->first)) {
      if (!is_zero(*ia->second)) return false;
      ++ia;
    } else if (ia == a.pages_.end() || ib->first < ia->first) {
      if (!is_zero(*ib->second)) return false;
      ++ib;
    } else {
      if (ia->second != ib->second && *ia->second != *ib->second) return false;
      ++ia;
      ++ib;
    }
  }
  return true;
}

}  // namespace endosim

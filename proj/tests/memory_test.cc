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

#include <gtest/gtest.h>

#include "endosim/core.hpp"

namespace endosim {
namespace {

TEST(ByteMemory, UnwrittenReadsZero) {
  ByteMemory m;
  EXPECT_EQ(m.load64(0x12345678), 0u);
  EXPECT_EQ(m.read(0x1000, 3), (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(ByteMemory, StoreAcrossPageBoundary) {
  ByteMemory m;
  const Addr a = page_addr(7) - 3;
  m.store64(a, 0x0102030405060708ULL);
  EXPECT_EQ(m.load64(a), 0x0102030405060708ULL);
  EXPECT_EQ(m.load8(a), 0x08);
  EXPECT_EQ(m.load8(page_addr(7)), 0x05);  // little endian, 4th byte
}

TEST(ByteMemory, CopiesAreIndependent) {
  ByteMemory a;
  a.store64(0x2000, 42);
  ByteMemory b = a;
  b.store64(0x2000, 7);
  EXPECT_EQ(a.load64(0x2000), 42u);
  EXPECT_EQ(b.load64(0x2000), 7u);
  EXPECT_FALSE(a == b);
  b.store64(0x2000, 42);
  EXPECT_TRUE(a == b);
}

TEST(ByteMemory, MoveAndDropPages) {
  ByteMemory m;
  m.store8(page_addr(3) + 9, 0xaa);
  m.move_page(3, 5);
  EXPECT_EQ(m.load8(page_addr(3) + 9), 0);
  EXPECT_EQ(m.load8(page_addr(5) + 9), 0xaa);
  m.copy_page(5, 6);
  m.drop_page(5);
  EXPECT_EQ(m.load8(page_addr(5) + 9), 0);
  EXPECT_EQ(m.load8(page_addr(6) + 9), 0xaa);
}

TEST(Core, PermStrings) {
  PermSet p;
  ASSERT_TRUE(parse_perms("rx", p));
  EXPECT_EQ(p, PermSet::rx());
  ASSERT_TRUE(parse_perms("none", p));
  EXPECT_EQ(p, PermSet::none());
  EXPECT_FALSE(parse_perms("rwz", p));
  EXPECT_EQ(to_string(PermSet::rw()), "rw-");
}

TEST(Core, PkruKeys) {
  const DomainId t = DomainId::trusted(), u0 = DomainId::untrusted(0),
                 u3 = DomainId::untrusted(3);
  EXPECT_EQ(t.key(), 0);
  EXPECT_EQ(u3.key(), 4);
  Pkru k = Pkru::only(u0);
  EXPECT_TRUE(k.can_read(u0));
  EXPECT_FALSE(k.can_read(t));
  EXPECT_FALSE(k.can_write(u3));
  k.grant(u3, true, false);
  EXPECT_TRUE(k.can_read(u3));
  EXPECT_FALSE(k.can_write(u3));
  EXPECT_TRUE(Pkru::all().can_write(t));
}

}  // namespace
}  // namespace endosim

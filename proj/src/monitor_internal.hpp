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

// Argument access shared by the handler groups.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "endosim/machine.hpp"

namespace endosim::detail {

// Snapshot copies of iovec buffers are stored under kIovCopyBase + k.
inline constexpr std::size_t kIovCopyBase = 100;
inline constexpr std::uint64_t kMaxArgLen = 1 << 20;

std::optional<std::int64_t> int_arg(const InFlight& c, std::size_t i);
const PointerArg* ptr_arg(const InFlight& c, std::size_t i);

// Whether every page of [a, a+len) is accessible to the calling domain.
bool caller_can(const MachineState& s, const InFlight& c, Addr a,
                std::uint64_t len, bool write);

// What a handler reads for pointer argument i: the snapshot copy, or (with
// copy_args off) live memory, counting an exposure if the caller could not
// have read it.
std::vector<std::uint8_t> arg_bytes(MachineState& s, const InFlight& c,
                                    std::size_t i);
std::vector<IoVec> arg_iov(MachineState& s, const InFlight& c, std::size_t i);
std::vector<std::uint8_t> iov_bytes(MachineState& s, const InFlight& c,
                                    std::size_t i, std::size_t k);

std::vector<IoVec> decode_iov(const std::vector<std::uint8_t>& raw,
                              std::optional<std::int64_t> count);

}  // namespace endosim::detail

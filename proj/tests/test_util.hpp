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

#include <string>

#include "endosim/formal.hpp"
#include "endosim/monitor.hpp"
#include "endosim/nexpoline.hpp"

namespace endosim::testing {

inline MachineState booted(const std::string& variant = "secc_eph",
                           std::uint64_t seed = 1) {
  return boot(parse_variant(variant), seed);
}

inline SyscallResult call(MachineState& s, const std::string& name,
                          std::vector<SyscallArg> args = {}, Tid tid = 0) {
  return dispatch(s, make_request(tid, name, std::move(args)));
}

inline std::vector<std::string> five_variants() {
  return {"secc_rand:32", "secc_eph", "disp_eph", "secc_cet", "disp_cet"};
}

}  // namespace endosim::testing

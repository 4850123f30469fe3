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

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "endosim/harness.hpp"
#include "endosim/monitor.hpp"

#ifndef ENDOSIM_DEFAULT_SCENARIO_DIR
#define ENDOSIM_DEFAULT_SCENARIO_DIR "scenarios"
#endif

namespace endosim {

namespace {

// Non-syscall verbs and their accepted argument counts.
struct VerbShape {
  std::size_t min_args;
  std::size_t max_args;
};

const std::map<std::string, VerbShape, std::less<>>& special_verbs() {
  static const std::map<std::string, VerbShape, std::less<>> verbs = {
      {"poke", {2, 2}},        {"peek", {1, 1}},
      {"jump", {1, 1}},        {"tsx", {1, 1}},
      {"tsx_scan", {0, 0}},    {"forkbomb", {0, 0}},
      {"forge_signal", {0, 2}}, {"sigreturn", {0, 1}},
      {"check_frame", {0, 0}}, {"scan", {2, 2}},
      {"sigoverride", {1, 1}}, {"signal", {1, 3}},
      {"xcall", {2, 8}},       {"xreturn", {0, 1}},
      {"grant", {2, 2}},       {"revoke", {1, 1}},
      {"isolate_lib", {5, 5}}, {"callback", {1, 1}},
      {"jumpcode", {1, 1}},    {"modecheck", {2, 2}},
      {"clone_direct", {0, 0}},
  };
  return verbs;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::optional<Tid> parse_tid(std::string_view s) {
  if (s.size() < 2 || s[0] != 't') return std::nullopt;
  auto digits = s.substr(1);
  if (digits.find_first_not_of("0123456789") != std::string_view::npos ||
      digits.size() > 4) {
    return std::nullopt;
  }
  return static_cast<Tid>(std::stoul(std::string(digits)));
}

std::optional<GateKind> parse_kind(std::string_view s) {
  if (s == "rand") return GateKind::Random;
  if (s == "eph") return GateKind::Ephemeral;
  if (s == "cet") return GateKind::Cet;
  return std::nullopt;
}

const std::set<std::string, std::less<>> kOptionKeys = {"copy_args", "fd_locks", "tsx"};

}  // namespace

const char* to_string(Expect e) {
  switch (e) {
    case Expect::Ok: return "ok";
    case Expect::Deny: return "deny";
    case Expect::Fault: return "fault";
    case Expect::Bypass: return "bypass";
  }
  return "?";
}

std::optional<Expect> parse_expect(std::string_view s) {
  if (s == "ok") return Expect::Ok;
  if (s == "deny") return Expect::Deny;
  if (s == "fault") return Expect::Fault;
  if (s == "bypass") return Expect::Bypass;
  return std::nullopt;
}

Expect Event::expected(GateKind k) const {
  auto it = expect_for.find(k);
  return it == expect_for.end() ? expect : it->second;
}

std::vector<Tid> Scenario::threads() const {
  std::set<Tid> ids;
  for (const Event& e : events) {
    if (e.tid) ids.insert(*e.tid);
  }
  return {ids.begin(), ids.end()};
}

bool is_syscall_verb(std::string_view verb) {
  return builtin_syscall_table().count(verb) > 0;
}

Scenario parse_scenario(std::string_view text, std::string name) {
  Scenario sc;
  sc.name = std::move(name);
  std::set<Tid> known = {0};
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string& head = toks[0];

    if (head == "name") {
      if (toks.size() < 2) throw ParseError(lineno, "name needs a value");
      std::string n;
      for (std::size_t i = 1; i < toks.size(); ++i) n += (i > 1 ? " " : "") + toks[i];
      sc.name = n;
      continue;
    }
    if (head == "config") {
      if (toks.size() != 2) throw ParseError(lineno, "config takes one argument");
      const std::string& v = toks[1];
      if (auto eq = v.find('='); eq != std::string::npos) {
        std::string key = v.substr(0, eq), val = v.substr(eq + 1);
        if (!kOptionKeys.count(key)) throw ParseError(lineno, "unknown option " + key);
        if (val != "true" && val != "false" && val != "on" && val != "off") {
          throw ParseError(lineno, "option " + key + " wants true/false");
        }
        sc.options[key] = val;
      } else {
        try {
          parse_variant(v);
        } catch (const BadVariant& e) {
          throw ParseError(lineno, e.what());
        }
        sc.variant = v;
      }
      continue;
    }
    if (head == "spawn") {
      if (toks.size() != 2) throw ParseError(lineno, "spawn takes a thread id");
      auto tid = parse_tid(toks[1]);
      if (!tid || *tid == 0) throw ParseError(lineno, "bad thread id " + toks[1]);
      if (*tid != sc.spawned.size() + 1) {
        throw ParseError(lineno, "threads are spawned in order; expected t" +
                                     std::to_string(sc.spawned.size() + 1));
      }
      sc.spawned.push_back(*tid);
      known.insert(*tid);
      continue;
    }
    if (head == "file") {
      if (toks.size() < 2 || toks[1].empty() || toks[1][0] != '/') {
        throw ParseError(lineno, "file needs an absolute path");
      }
      FileSpec f;
      f.path = toks[1];
      f.content = "contents of " + f.path + "\n";
      for (std::size_t i = 2; i < toks.size(); ++i) {
        if (toks[i] == "sensitive") {
          f.sensitive = true;
        } else if (toks[i].rfind("content=", 0) == 0) {
          f.content = toks[i].substr(8);
        } else {
          throw ParseError(lineno, "unexpected '" + toks[i] + "'");
        }
      }
      sc.files.push_back(f);
      continue;
    }
    if (head == "outcome") {
      std::optional<Expect> e;
      if (toks.size() == 2) e = parse_expect(toks[1]);
      if (!e || (*e != Expect::Deny && *e != Expect::Bypass)) {
        throw ParseError(lineno, "outcome is deny or bypass");
      }
      sc.outcome = e;
      continue;
    }

    // Event line.
    if (head.empty() || head.back() != ':') {
      throw ParseError(lineno, "unknown directive '" + head + "'");
    }
    Event ev;
    ev.line = lineno;
    const std::string actor = head.substr(0, head.size() - 1);
    if (actor != "kernel") {
      auto tid = parse_tid(actor);
      if (!tid) throw ParseError(lineno, "bad actor '" + actor + "'");
      if (!known.count(*tid)) throw ParseError(lineno, actor + " used before spawn");
      ev.tid = tid;
    }
    if (toks.size() < 2) throw ParseError(lineno, "missing verb");
    ev.verb = toks[1];

    auto exp_at = std::find(toks.begin() + 2, toks.end(), "expect");
    // Kernel lines may omit the clause; delivery itself always succeeds.
    if (exp_at == toks.end() && !ev.tid) {
      toks.push_back("expect");
      toks.push_back("ok");
      exp_at = toks.end() - 2;
    }
    if (exp_at == toks.end() || exp_at + 1 == toks.end()) {
      throw ParseError(lineno, "missing expect clause");
    }
    auto base = parse_expect(*(exp_at + 1));
    if (!base) throw ParseError(lineno, "bad expectation '" + *(exp_at + 1) + "'");
    ev.expect = *base;
    for (auto it = exp_at + 2; it != toks.end(); ++it) {
      auto eq = it->find('=');
      std::optional<GateKind> kind;
      std::optional<Expect> e;
      if (eq != std::string::npos) {
        kind = parse_kind(it->substr(0, eq));
        e = parse_expect(it->substr(eq + 1));
      }
      if (!kind || !e) throw ParseError(lineno, "bad per-variant expectation '" + *it + "'");
      ev.expect_for[*kind] = *e;
    }
    ev.args.assign(toks.begin() + 2, exp_at);

    if (!ev.tid) {
      if (ev.verb != "signal" || ev.args.size() != 2 || !parse_tid(ev.args[1]) ||
          !known.count(*parse_tid(ev.args[1]))) {
        throw ParseError(lineno, "kernel lines are `kernel: signal <signo> t<N>`");
      }
    } else if (!is_syscall_verb(ev.verb)) {
      auto it = special_verbs().find(ev.verb);
      if (it == special_verbs().end()) throw ParseError(lineno, "unknown verb '" + ev.verb + "'");
      if (ev.args.size() < it->second.min_args || ev.args.size() > it->second.max_args) {
        throw ParseError(lineno, "wrong number of arguments for " + ev.verb);
      }
      if (ev.verb == "signal" && ev.args.size() != 1 &&
          !(ev.args.size() == 3 && ev.args[1] == "at")) {
        throw ParseError(lineno, "signal <signo> [at <phase>]");
      }
    } else if (ev.args.size() > 6) {
      throw ParseError(lineno, "a syscall takes at most 6 arguments");
    }
    std::string t;
    for (std::size_t i = 0; i < toks.size(); ++i) t += (i ? " " : "") + toks[i];
    ev.text = t;
    sc.events.push_back(std::move(ev));
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.stem().string());
}

std::filesystem::path scenario_dir() {
  if (const char* env = std::getenv("ENDOSIM_SCENARIO_DIR"); env && *env) return env;
  return ENDOSIM_DEFAULT_SCENARIO_DIR;
}

GateConfig resolve_config(const Scenario& sc,
                          const std::optional<std::string>& override_variant) {
  GateConfig c = parse_variant(override_variant ? *override_variant
                                                : sc.variant.value_or("secc_eph"));
  if (auto it = sc.options.find("tsx"); it != sc.options.end()) {
    c.tsx_enabled = it->second == "true" || it->second == "on";
  }
  return c;
}

void apply_setup(MachineState& s, const Scenario& sc) {
  auto flag = [&](const char* key, bool dflt) {
    auto it = sc.options.find(key);
    if (it == sc.options.end()) return dflt;
    return it->second == "true" || it->second == "on";
  };
  s.options.copy_args = flag("copy_args", true);
  s.options.fd_locks = flag("fd_locks", true);
  for (const FileSpec& f : sc.files) {
    Inode ino = s.fs.lookup(f.path).value_or(0);
    if (!ino) ino = s.fs.create(f.path);
    s.fs.inodes[ino].content = std::make_shared<const std::vector<std::uint8_t>>(
        f.content.begin(), f.content.end());
    if (f.sensitive) s.fs.sensitive.insert(ino);
  }
  for (Tid t : sc.spawned) {
    SyscallResult r = spawn_thread(s, 0, DomainId::untrusted(0));
    if (!r.is_ok() || static_cast<Tid>(r.value) != t) {
      throw std::runtime_error("spawn t" + std::to_string(t) + " failed: " +
                               to_string(r.reason));
    }
  }
}

}  // namespace endosim

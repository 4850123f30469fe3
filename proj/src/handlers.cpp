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

// File, mapping, process and passthrough handlers. Each validates
// everything first and mutates only once the call is known to succeed.

#include <algorithm>
#include <sstream>

#include "endosim/formal.hpp"
#include "endosim/monitor.hpp"
#include "endosim/nexpoline.hpp"
#include "endosim/signals.hpp"
#include "monitor_internal.hpp"

namespace endosim {

using detail::arg_bytes;
using detail::caller_can;
using detail::int_arg;
using detail::ptr_arg;

namespace {

SyscallResult deny(DenyReason r, std::string detail = {}) {
  return SyscallResult::denied(r, std::move(detail));
}

SyscallResult bad_args() { return deny(DenyReason::InvalidArgument); }

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

Fd lowest_free_fd(const MachineState& s) {
  Fd fd = 3;
  while (s.open_files.count(fd)) ++fd;
  return fd;
}

bool fd_sensitive(const MachineState& s, const OpenFile& f) {
  return f.sensitive || s.fs.sensitive.count(f.inode) > 0;
}

const std::vector<std::uint8_t>& content_of(const MachineState& s, Inode ino) {
  static const std::vector<std::uint8_t> empty;
  auto it = s.fs.inodes.find(ino);
  if (it == s.fs.inodes.end() || !it->second.content) return empty;
  return *it->second.content;
}

void write_content(MachineState& s, Inode ino, std::uint64_t off,
                   std::span<const std::uint8_t> data) {
  auto bytes = content_of(s, ino);
  if (bytes.size() < off + data.size()) bytes.resize(off + data.size(), 0);
  std::copy(data.begin(), data.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off));
  s.fs.inodes[ino].content =
      std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes));
}

std::vector<std::uint8_t> read_content(const MachineState& s, Inode ino,
                                       std::uint64_t off, std::uint64_t len) {
  const auto& bytes = content_of(s, ino);
  if (off >= bytes.size()) return {};
  const auto n = std::min<std::uint64_t>(len, bytes.size() - off);
  return {bytes.begin() + static_cast<std::ptrdiff_t>(off),
          bytes.begin() + static_cast<std::ptrdiff_t>(off + n)};
}

// The fd the handler is about to use must still name the object that was
// screened; otherwise whatever it reads now was never checked.
void note_rebinding(MachineState& s, const InFlight& call, Fd fd) {
  auto screened = call.screened_fds.find(fd);
  auto now = s.open_files.find(fd);
  if (screened == call.screened_fds.end() || now == s.open_files.end()) return;
  if (screened->second != now->second.inode) ++s.exposures;
}

const std::string* path_text(const InFlight& call, std::size_t i) {
  const PointerArg* p = ptr_arg(call, i);
  if (!p || p->text.empty()) return nullptr;
  return &p->text;
}

// Resolves a path for aliasing operations; procfs memory files exist for
// every pid whether or not anyone looked them up before.
std::optional<Inode> resolve(MachineState& s, const std::string& path) {
  if (auto ino = s.fs.lookup(path)) return ino;
  if (s.fs.is_sensitive_path(path)) {
    Inode ino = s.fs.create(path);
    s.fs.sensitive.insert(ino);
    return ino;
  }
  return std::nullopt;
}

// Buffer argument the kernel writes into: must be the caller's to write.
SyscallResult store_out(MachineState& s, const InFlight& call, std::size_t i,
                        std::span<const std::uint8_t> data) {
  const PointerArg* p = ptr_arg(call, i);
  if (!p) return bad_args();
  const std::uint64_t n = std::min<std::uint64_t>(data.size(), p->len);
  if (!caller_can(s, call, p->addr, n, true)) return SyscallResult::fault("EFAULT");
  s.memory.write(p->addr, data.first(n));
  return SyscallResult::ok(static_cast<std::int64_t>(n));
}

}  // namespace

// ---------------------------------------------------------------------------

SyscallResult file_ops(MachineState& s, const InFlight& call) {
  const std::string& n = call.req.name;

  if (n == "open" || n == "openat") {
    const std::size_t pi = n == "open" ? 0 : 1;
    const std::string* path = path_text(call, pi);
    if (!path) return bad_args();
    if (s.fs.is_sensitive_path(*path)) return deny(DenyReason::SensitiveInode, *path);
    auto ino = s.fs.lookup(*path);
    if (ino && s.fs.sensitive.count(*ino)) return deny(DenyReason::SensitiveInode, *path);
    if (!ino) ino = s.fs.create(*path);
    const Fd fd = lowest_free_fd(s);
    s.open_files[fd] = OpenFile{fd, *ino, *path, 0, false};
    return SyscallResult::ok(fd);
  }

  if (n == "link" || n == "symlink") {
    const std::string* from = path_text(call, 0);
    const std::string* to = path_text(call, 1);
    if (!from || !to) return bad_args();
    if (s.fs.lookup(*to)) return deny(DenyReason::InvalidArgument, "exists: " + *to);
    auto ino = resolve(s, *from);
    if (!ino) return deny(DenyReason::NoSuchFile, *from);
    s.fs.paths[*to] = *ino;
    return SyscallResult::ok();
  }

  if (n == "unlink") {
    const std::string* path = path_text(call, 0);
    if (!path) return bad_args();
    if (!s.fs.paths.erase(*path)) return deny(DenyReason::NoSuchFile, *path);
    return SyscallResult::ok();
  }

  // Everything below operates on an open fd.
  auto fdv = int_arg(call, 0);
  if (!fdv) return bad_args();
  const Fd fd = static_cast<Fd>(*fdv);
  auto it = s.open_files.find(fd);
  if (it == s.open_files.end()) return deny(DenyReason::BadFd);
  note_rebinding(s, call, fd);
  OpenFile& of = it->second;

  if (n == "close") {
    s.open_files.erase(it);
    return SyscallResult::ok();
  }
  if (n == "dup") {
    OpenFile copy = of;
    copy.fd = lowest_free_fd(s);
    s.open_files[copy.fd] = copy;
    return SyscallResult::ok(copy.fd);
  }
  if (n == "dup2") {
    auto nv = int_arg(call, 1);
    if (!nv || *nv < 0) return bad_args();
    const Fd nfd = static_cast<Fd>(*nv);
    if (nfd == fd) return SyscallResult::ok(nfd);
    OpenFile copy = of;
    copy.fd = nfd;
    s.open_files[nfd] = copy;
    return SyscallResult::ok(nfd);
  }
  if (n == "lseek") {
    auto off = int_arg(call, 1);
    auto whence = int_arg(call, 2);
    if (!off || !whence) return bad_args();
    std::int64_t base = 0;
    switch (*whence) {
      case 0: base = 0; break;
      case 1: base = static_cast<std::int64_t>(of.offset); break;
      case 2: base = static_cast<std::int64_t>(content_of(s, of.inode).size()); break;
      default: return bad_args();
    }
    if (base + *off < 0) return bad_args();
    of.offset = static_cast<std::uint64_t>(base + *off);
    return SyscallResult::ok(static_cast<std::int64_t>(of.offset));
  }

  if (fd_sensitive(s, of)) return deny(DenyReason::SensitiveInode, of.path);

  if (n == "read" || n == "pread64") {
    auto len = int_arg(call, 2);
    if (!len || *len < 0) return bad_args();
    std::uint64_t off = of.offset;
    if (n == "pread64") {
      auto o = int_arg(call, 3);
      if (!o || *o < 0) return bad_args();
      off = static_cast<std::uint64_t>(*o);
    }
    auto data = read_content(s, of.inode, off, static_cast<std::uint64_t>(*len));
    SyscallResult r = store_out(s, call, 1, data);
    if (!r.is_ok()) return r;
    if (n == "read") s.open_files[fd].offset += static_cast<std::uint64_t>(r.value);
    return r;
  }
  if (n == "write") {
    auto len = int_arg(call, 2);
    if (!len || *len < 0) return bad_args();
    auto data = arg_bytes(s, call, 1);
    if (data.size() > static_cast<std::uint64_t>(*len)) data.resize(*len);
    write_content(s, of.inode, of.offset, data);
    s.open_files[fd].offset += data.size();
    return SyscallResult::ok(static_cast<std::int64_t>(data.size()));
  }
  if (n == "pwritev") {
    auto off = int_arg(call, 3);
    if (!off || *off < 0) return bad_args();
    const auto iov = detail::arg_iov(s, call, 1);
    std::uint64_t at = static_cast<std::uint64_t>(*off);
    for (std::size_t k = 0; k < iov.size(); ++k) {
      auto data = detail::iov_bytes(s, call, 1, k);
      write_content(s, of.inode, at, data);
      at += data.size();
    }
    return SyscallResult::ok(static_cast<std::int64_t>(at - static_cast<std::uint64_t>(*off)));
  }
  if (n == "readv") {
    const auto iov = detail::arg_iov(s, call, 1);
    for (const IoVec& v : iov) {
      if (!caller_can(s, call, v.base, v.len, true)) return SyscallResult::fault("EFAULT");
    }
    std::uint64_t total = 0;
    for (const IoVec& v : iov) {
      auto data = read_content(s, of.inode, s.open_files[fd].offset, v.len);
      s.memory.write(v.base, data);
      s.open_files[fd].offset += data.size();
      total += data.size();
    }
    return SyscallResult::ok(static_cast<std::int64_t>(total));
  }
  return deny(DenyReason::UnknownSyscall, n);
}

// ---------------------------------------------------------------------------

namespace {

struct PageRange {
  PageNo first = 0;
  std::uint64_t count = 0;
};

std::optional<PageRange> page_range(std::optional<std::int64_t> addr,
                                    std::optional<std::int64_t> len) {
  if (!addr || !len || *len <= 0 || !page_aligned(static_cast<Addr>(*addr))) {
    return std::nullopt;
  }
  const std::uint64_t count = round_up_pages(static_cast<std::uint64_t>(*len));
  if (count > (std::uint64_t{1} << 20)) return std::nullopt;
  return PageRange{page_of(static_cast<Addr>(*addr)), count};
}

// Pages of another domain (or the monitor) cannot be the target of a
// mapping change by the caller.
std::optional<SyscallResult> check_owned(const MachineState& s, DomainId caller,
                                         PageNo p) {
  const PageRecord* rec = s.page(p);
  if (!rec) return std::nullopt;
  if (rec->domain != caller) return deny(DenyReason::ForeignDomain, hex(page_addr(p)));
  return std::nullopt;
}

void unmap_page(MachineState& s, PageNo p) {
  s.pages.erase(p);
  s.memory.drop_page(p);
  std::erase_if(s.file_mappings,
                [&](const FileMappingRecord& r) { return page_of(r.addr) == p; });
  std::erase_if(s.domains.grants, [&](const GrantRecord& g) { return g.page == p; });
}

std::optional<Inode> inode_of(const MachineState& s, Fd fd) {
  auto it = s.open_files.find(fd);
  if (it == s.open_files.end()) return std::nullopt;
  return it->second.inode;
}

SyscallResult do_mmap(MachineState& s, const InFlight& call) {
  auto addr = int_arg(call, 0);
  auto len = int_arg(call, 1);
  auto prot = int_arg(call, 2);
  auto flags = int_arg(call, 3);
  if (!addr || !len || !prot || !flags || *len <= 0) return bad_args();
  const std::uint64_t count = round_up_pages(static_cast<std::uint64_t>(*len));
  if (count > (std::uint64_t{1} << 20)) return bad_args();
  const bool shared = *flags & sysflag::kMapShared;
  const bool priv = *flags & sysflag::kMapPrivate;
  const bool fixed = *flags & sysflag::kMapFixed;
  const bool anon = *flags & sysflag::kMapAnonymous;
  if (shared == priv) return bad_args();
  const PermSet perms = perms_from_prot(*prot);
  if (perms.w && perms.x) return deny(DenyReason::WXViolation);
  if (perms.x && shared) return deny(DenyReason::SharedToExec);
  if (perms.x && s.domains.exec_locked) return deny(DenyReason::ExecLocked);

  std::optional<OpenFile> file;
  std::uint64_t off = 0;
  if (!anon) {
    auto fd = int_arg(call, 4);
    auto o = int_arg(call, 5);
    if (!fd || !o || *o < 0 || !page_aligned(static_cast<Addr>(*o))) return bad_args();
    auto it = s.open_files.find(static_cast<Fd>(*fd));
    if (it == s.open_files.end()) return deny(DenyReason::BadFd);
    note_rebinding(s, call, it->first);
    if (fd_sensitive(s, it->second)) return deny(DenyReason::SensitiveInode);
    file = it->second;
    off = static_cast<std::uint64_t>(*o);
  }

  PageNo base = 0;
  if (fixed) {
    if (!page_aligned(static_cast<Addr>(*addr))) return bad_args();
    base = page_of(static_cast<Addr>(*addr));
    for (PageNo p = base; p < base + count; ++p) {
      if (auto d = check_owned(s, call.caller, p)) return *d;
      const PageRecord* rec = s.page(p);
      if (rec && rec->attr == PageAttr::Exec && s.domains.exec_locked) {
        return deny(DenyReason::ExecLocked);
      }
    }
  } else {
    base = s.next_mmap;
  }

  std::vector<std::vector<std::uint8_t>> content(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (file) {
      content[i] = read_content(s, file->inode, off + i * kPageSize, kPageSize);
    }
  }
  if (perms.x) {
    for (std::uint64_t i = 0; i < count; ++i) {
      // A gadget may straddle a page boundary, so scan contiguous bytes.
      std::vector<std::uint8_t> window = content[i];
      window.resize(kPageSize, 0);
      if (i + 1 < count) {
        window.insert(window.end(), content[i + 1].begin(),
                      content[i + 1].begin() + std::min<std::size_t>(content[i + 1].size(), 2));
      }
      if (auto r = code_scan(window); !r.ok) {
        return deny(DenyReason::ScanFailed, "offset " + std::to_string(i * kPageSize + r.offset));
      }
    }
  }

  std::vector<FileMappingRecord> records;
  if (file && !perms.x) {
    for (std::uint64_t i = 0; i < count; ++i) {
      FileMappingRecord rec{file->fd, off + i * kPageSize, kPageSize,
                            page_addr(base + i)};
      for (const FileMappingRecord& other : s.file_mappings) {
        const PageNo op = page_of(other.addr);
        if (op >= base && op < base + count) continue;  // being replaced
        const bool same = other.fd == rec.fd || inode_of(s, other.fd) == file->inode;
        if (!same || !offset_intersects(rec, other)) continue;
        const PageRecord* orec = s.page(op);
        if (orec && orec->domain != call.caller) {
          return deny(DenyReason::AliasViolation, hex(other.addr));
        }
      }
      records.push_back(rec);
    }
  }

  if (!fixed) s.next_mmap += count;
  for (std::uint64_t i = 0; i < count; ++i) {
    const PageNo p = base + i;
    if (s.page(p)) unmap_page(s, p);
    PageRecord rec;
    rec.domain = call.caller;
    if (perms.x) {
      // Code is copied into anonymous memory once scanned; no backing stays
      // behind that could change it later.
      rec.perms = {perms.r, false, true};
      rec.attr = PageAttr::Exec;
    } else {
      rec.perms = perms;
      rec.attr = shared ? PageAttr::Shared : PageAttr::Retired;
      if (file) rec.backing = FileBacking{file->inode, off + i * kPageSize};
    }
    s.pages[p] = rec;
    if (!content[i].empty()) s.memory.write(page_addr(p), content[i]);
  }
  for (const auto& r : records) s.file_mappings.push_back(r);
  return SyscallResult::ok(static_cast<std::int64_t>(page_addr(base)));
}

SyscallResult do_mprotect(MachineState& s, const InFlight& call) {
  auto range = page_range(int_arg(call, 0), int_arg(call, 1));
  auto prot = int_arg(call, 2);
  if (!range || !prot) return bad_args();
  const PermSet perms = perms_from_prot(*prot);
  if (perms.w && perms.x) return deny(DenyReason::WXViolation);
  for (PageNo p = range->first; p < range->first + range->count; ++p) {
    const PageRecord* rec = s.page(p);
    if (!rec) return deny(DenyReason::NotMapped, hex(page_addr(p)));
    if (auto d = check_owned(s, call.caller, p)) return *d;
    if (rec->attr == PageAttr::Exec && s.domains.exec_locked &&
        perms != rec->perms) {
      return deny(DenyReason::ExecLocked);
    }
    if (perms.x && rec->attr != PageAttr::Exec) {
      if (s.domains.exec_locked) return deny(DenyReason::ExecLocked);
      if (rec->attr == PageAttr::Shared) return deny(DenyReason::SharedToExec);
      if (rec->attr != PageAttr::Retired) return bad_args();
      auto bytes = s.memory.page_bytes(p);
      auto next = s.memory.read(page_addr(p + 1), 2);
      bytes.insert(bytes.end(), next.begin(), next.end());
      if (auto r = code_scan(bytes); !r.ok) {
        return deny(DenyReason::ScanFailed, "offset " + std::to_string(r.offset));
      }
    }
  }
  for (PageNo p = range->first; p < range->first + range->count; ++p) {
    PageRecord& rec = s.pages[p];
    if (perms.x) {
      rec.perms = {perms.r, false, true};
      rec.attr = PageAttr::Exec;
      rec.backing.reset();
      std::erase_if(s.file_mappings,
                    [&](const FileMappingRecord& r) { return page_of(r.addr) == p; });
    } else {
      rec.perms = perms;
      if (rec.attr == PageAttr::Exec) rec.attr = PageAttr::Retired;
    }
  }
  return SyscallResult::ok();
}

SyscallResult do_munmap(MachineState& s, const InFlight& call) {
  auto range = page_range(int_arg(call, 0), int_arg(call, 1));
  if (!range) return bad_args();
  for (PageNo p = range->first; p < range->first + range->count; ++p) {
    if (auto d = check_owned(s, call.caller, p)) return *d;
    const PageRecord* rec = s.page(p);
    if (rec && rec->attr == PageAttr::Exec && s.domains.exec_locked) {
      return deny(DenyReason::ExecLocked);
    }
  }
  for (PageNo p = range->first; p < range->first + range->count; ++p) {
    if (s.page(p)) unmap_page(s, p);
  }
  return SyscallResult::ok();
}

SyscallResult do_mremap(MachineState& s, const InFlight& call) {
  auto src = page_range(int_arg(call, 0), int_arg(call, 1));
  auto new_len = int_arg(call, 2);
  auto flags = int_arg(call, 3).value_or(1);
  if (!src || !new_len || *new_len <= 0) return bad_args();
  const std::uint64_t new_count = round_up_pages(static_cast<std::uint64_t>(*new_len));
  if (new_count > (std::uint64_t{1} << 20)) return bad_args();
  const bool fixed = flags & 2;
  for (PageNo p = src->first; p < src->first + src->count; ++p) {
    const PageRecord* rec = s.page(p);
    if (!rec) return deny(DenyReason::NotMapped, hex(page_addr(p)));
    if (auto d = check_owned(s, call.caller, p)) return *d;
    if (rec->attr == PageAttr::Exec && s.domains.exec_locked) {
      return deny(DenyReason::ExecLocked);
    }
  }
  PageNo dest = src->first;
  if (fixed) {
    auto na = int_arg(call, 4);
    if (!na || !page_aligned(static_cast<Addr>(*na))) return bad_args();
    dest = page_of(static_cast<Addr>(*na));
  } else if (new_count > src->count) {
    dest = s.next_mmap;
  }
  auto in_src = [&](PageNo p) { return p >= src->first && p < src->first + src->count; };
  for (PageNo p = dest; p < dest + new_count; ++p) {
    if (in_src(p)) continue;
    if (auto d = check_owned(s, call.caller, p)) return *d;
    const PageRecord* rec = s.page(p);
    // Relocating data over code would swap in bytes no scan has seen.
    if (rec && rec->attr == PageAttr::Exec) return deny(DenyReason::ExecLocked);
  }

  struct Moved {
    PageRecord rec;
    std::vector<std::uint8_t> bytes;
    std::vector<FileMappingRecord> mf;
  };
  std::vector<Moved> moved;
  const std::uint64_t kept = std::min(src->count, new_count);
  for (std::uint64_t i = 0; i < kept; ++i) {
    const PageNo p = src->first + i;
    Moved m{s.pages.at(p), s.memory.page_bytes(p), {}};
    for (const auto& r : s.file_mappings) {
      if (page_of(r.addr) == p) m.mf.push_back(r);
    }
    moved.push_back(std::move(m));
  }
  const PageRecord tail_rec = s.pages.at(src->first + src->count - 1);

  if (!fixed && new_count > src->count) s.next_mmap += new_count;
  for (PageNo p = src->first; p < src->first + src->count; ++p) unmap_page(s, p);
  for (PageNo p = dest; p < dest + new_count; ++p) {
    if (s.page(p)) unmap_page(s, p);
  }
  for (std::uint64_t i = 0; i < new_count; ++i) {
    const PageNo p = dest + i;
    if (i < moved.size()) {
      s.pages[p] = moved[i].rec;
      s.memory.write(page_addr(p), moved[i].bytes);
      for (FileMappingRecord r : moved[i].mf) {
        r.addr = page_addr(p) + (r.addr % kPageSize);
        s.file_mappings.push_back(r);
      }
    } else {
      PageRecord grown = tail_rec;
      grown.backing.reset();
      s.pages[p] = grown;
    }
  }
  return SyscallResult::ok(static_cast<std::int64_t>(page_addr(dest)));
}

SyscallResult do_madvise(MachineState& s, const InFlight& call) {
  auto range = page_range(int_arg(call, 0), int_arg(call, 1));
  auto advice = int_arg(call, 2);
  if (!range || !advice) return bad_args();
  constexpr std::int64_t kDontNeed = 4;
  for (PageNo p = range->first; p < range->first + range->count; ++p) {
    const PageRecord* rec = s.page(p);
    if (!rec) return deny(DenyReason::NotMapped, hex(page_addr(p)));
    if (auto d = check_owned(s, call.caller, p)) return *d;
    if (*advice == kDontNeed && rec->attr == PageAttr::Exec && s.domains.exec_locked) {
      return deny(DenyReason::ExecLocked);
    }
  }
  if (*advice == kDontNeed) {
    for (PageNo p = range->first; p < range->first + range->count; ++p) {
      const PageRecord& rec = s.pages.at(p);
      if (rec.attr != PageAttr::Shared && !rec.backing) s.memory.drop_page(p);
    }
  }
  return SyscallResult::ok();
}

}  // namespace

SyscallResult mem_ops(MachineState& s, const InFlight& call) {
  const std::string& n = call.req.name;
  if (n == "mmap") return do_mmap(s, call);
  if (n == "mprotect") return do_mprotect(s, call);
  if (n == "munmap") return do_munmap(s, call);
  if (n == "mremap") return do_mremap(s, call);
  if (n == "madvise") return do_madvise(s, call);
  return deny(DenyReason::UnknownSyscall, n);
}

// ---------------------------------------------------------------------------

namespace {

SyscallResult do_fork(MachineState& s, const InFlight& call, bool vfork) {
  const Tid tid = call.req.tid;
  auto child = std::make_shared<MachineState>(s);
  MachineState& c = *child;
  c.pid = s.next_pid;
  c.next_pid = s.next_pid * 10;
  c.children.clear();
  c.locks = {};
  // Only the calling thread survives, resuming right after the call.
  for (auto it = c.threads.begin(); it != c.threads.end();) {
    if (it->first != tid) {
      for (const auto& [signo, info] : it->second.sig.slots) {
        (void)info;
        ++c.signals.defaulted;
      }
      c.trampoline.threads.erase(it->first);
      it = c.threads.erase(it);
    } else {
      ++it;
    }
  }
  ThreadCtx& t = c.thread(tid);
  t.inflight.reset();
  t.current_domain = call.caller;
  t.pkru = pkru_for(call.caller);
  t.in_monitor = false;
  t.stack_domain = call.caller_stack;
  t.rax = 0;
  ThreadGate& g = c.trampoline.threads.at(tid);
  g.shadow_stack.clear();
  g.return_slots.clear();
  if (c.trampoline.config.kind == GateKind::Ephemeral) g.gadget_at.reset();

  const int pid = s.next_pid++;
  s.children.push_back({pid, vfork, std::move(child)});
  return SyscallResult::ok(pid);
}

SyscallResult do_execve(MachineState& s, const InFlight& call) {
  const Tid tid = call.req.tid;
  const PointerArg* p = ptr_arg(call, 0);
  if (!p || p->text.empty()) return bad_args();
  auto ino = s.fs.lookup(p->text);
  if (!ino) return deny(DenyReason::NoSuchFile, p->text);
  if (s.fs.sensitive.count(*ino) || s.fs.is_sensitive_path(p->text)) {
    return deny(DenyReason::SensitiveInode, p->text);
  }

  // New image: every untrusted page goes, the monitor stays.
  std::vector<PageNo> drop;
  for (const auto& [pg, rec] : s.pages) {
    if (rec.domain.is_untrusted()) drop.push_back(pg);
  }
  for (PageNo pg : drop) unmap_page(s, pg);
  s.file_mappings.clear();
  s.domains.grants.clear();
  s.domains.endoprocesses.clear();
  s.domains.exec_locked = false;
  s.next_mmap = layout::kMmapArea;

  for (auto it = s.threads.begin(); it != s.threads.end();) {
    if (it->first == tid) {
      ++it;
      continue;
    }
    s.signals.defaulted += it->second.sig.slots.size();
    for (auto lk = s.locks.per_fd.begin(); lk != s.locks.per_fd.end();) {
      lk = lk->second == it->first ? s.locks.per_fd.erase(lk) : std::next(lk);
    }
    if (s.locks.mapping_global == it->first) s.locks.mapping_global.reset();
    if (s.locks.signal_global == it->first) s.locks.signal_global.reset();
    s.trampoline.threads.erase(it->first);
    it = s.threads.erase(it);
  }

  load_app_image(s, tid);
  for (auto& [signo, action] : s.signals.table) {
    if (action.handler) action = SigAction{};
  }
  ThreadCtx& t = s.thread(tid);
  t.sig.issued.clear();
  t.sig.altstack.reset();
  t.return_chain.clear();
  t.sig_blocked = false;
  t.rip = layout::kAppEntry;
  t.stack_ptr = layout::stack_top(tid);
  // The caller (possibly a subdomain) is gone; the new image runs in U0.
  t.inflight->caller = DomainId::untrusted(0);
  t.inflight->caller_stack = DomainId::untrusted(0);
  return SyscallResult::ok();
}

SyscallResult do_process_vm(MachineState& s, const InFlight& call, bool write) {
  auto pid = int_arg(call, 0);
  const PointerArg* local = ptr_arg(call, 1);
  const PointerArg* remote = ptr_arg(call, 2);
  if (!pid || !local || !remote) return bad_args();
  if (*pid != s.pid) return deny(DenyReason::CrossProcessMemory);
  const std::uint64_t n = std::min(local->len, remote->len);
  const PointerArg* from = write ? local : remote;
  const PointerArg* to = write ? remote : local;
  if (!caller_can(s, call, from->addr, n, false) ||
      !caller_can(s, call, to->addr, n, true)) {
    return SyscallResult::fault("EFAULT");
  }
  auto bytes = write ? arg_bytes(s, call, 1) : arg_bytes(s, call, 2);
  bytes.resize(std::min<std::size_t>(bytes.size(), n));
  s.memory.write(to->addr, bytes);
  return SyscallResult::ok(static_cast<std::int64_t>(bytes.size()));
}

}  // namespace

SyscallResult proc_ops(MachineState& s, const InFlight& call) {
  const std::string& n = call.req.name;
  if (n == "fork") return do_fork(s, call, false);
  if (n == "vfork") return do_fork(s, call, true);
  if (n == "clone") {
    const std::int64_t flags = int_arg(call, 0).value_or(0);
    const bool vm = flags & sysflag::kCloneVm;
    const bool thread = flags & sysflag::kCloneThread;
    if (thread) return spawn_thread(s, call.req.tid, call.caller);
    // A second process sharing this address space would run outside every
    // per-thread filter the monitor installed.
    if (vm) return deny(DenyReason::ForbiddenCloneFlags);
    return do_fork(s, call, false);
  }
  if (n == "execve") return do_execve(s, call);
  if (n == "process_vm_readv") return do_process_vm(s, call, false);
  if (n == "process_vm_writev") return do_process_vm(s, call, true);
  if (n == "prctl") {
    auto option = int_arg(call, 0);
    if (!option) return bad_args();
    if (*option == sysflag::kPrGetSeccomp || *option == sysflag::kPrSetSeccomp) {
      return deny(DenyReason::ForbiddenSyscall, "prctl seccomp");
    }
    return SyscallResult::ok();
  }
  return deny(DenyReason::UnknownSyscall, n);
}

// ---------------------------------------------------------------------------

SyscallResult passthrough_ops(MachineState& s, const InFlight& call) {
  const std::string& n = call.req.name;
  const Tid tid = call.req.tid;

  // The kernel reads input pointers with the caller's rights.
  for (std::size_t i = 0; i < call.req.args.size(); ++i) {
    const PointerArg* p = ptr_arg(call, i);
    if (p && p->text.empty() && !caller_can(s, call, p->addr, p->len, false)) {
      return SyscallResult::fault("EFAULT");
    }
  }

  if (n == "getpid") return SyscallResult::ok(s.pid);
  if (n == "getppid") return SyscallResult::ok(s.pid - 1);
  if (n == "gettid") return SyscallResult::ok(tid);
  if (n == "sched_yield" || n == "nanosleep") return SyscallResult::ok();
  if (n == "clock_gettime") {
    std::vector<std::uint8_t> ts(16, 0);
    ts[0] = 1;
    SyscallResult r = store_out(s, call, 1, ts);
    return r.is_ok() ? SyscallResult::ok() : r;
  }
  if (n == "uname") {
    std::vector<std::uint8_t> buf(390, 0);
    const std::string sys = "Linux";
    std::copy(sys.begin(), sys.end(), buf.begin());
    SyscallResult r = store_out(s, call, 0, buf);
    return r.is_ok() ? SyscallResult::ok() : r;
  }
  if (n == "ioctl") {
    auto fd = int_arg(call, 0);
    if (!fd || !s.open_files.count(static_cast<Fd>(*fd))) return deny(DenyReason::BadFd);
    return SyscallResult::ok();
  }
  if (n == "sendto") {
    auto fd = int_arg(call, 0);
    if (!fd || !s.open_files.count(static_cast<Fd>(*fd))) return deny(DenyReason::BadFd);
    const PointerArg* buf = ptr_arg(call, 1);
    return SyscallResult::ok(buf ? static_cast<std::int64_t>(buf->len) : 0);
  }
  if (n == "rename") {
    const std::string* from = path_text(call, 0);
    const std::string* to = path_text(call, 1);
    if (!from || !to) return bad_args();
    auto ino = s.fs.lookup(*from);
    if (!ino) return deny(DenyReason::NoSuchFile, *from);
    s.fs.paths.erase(*from);
    s.fs.paths[*to] = *ino;
    return SyscallResult::ok();
  }
  if (n == "kill") {
    auto pid = int_arg(call, 0);
    auto sig = int_arg(call, 1);
    if (!pid || !sig || *sig < 0 || *sig > kMaxSignal) return bad_args();
    if (*sig != 0 && *pid == s.pid) kernel_deliver(s, tid, static_cast<int>(*sig));
    return SyscallResult::ok();
  }
  return deny(DenyReason::UnknownSyscall, n);
}

}  // namespace endosim

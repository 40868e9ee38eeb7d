#include "khs/kernel_api.hpp"

#include <algorithm>
#include <cstdio>

namespace khs {

std::string to_hex32(std::uint32_t value) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", value);
  return buf;
}

std::vector<TokenGroup> system_template_groups() {
  return {
      {Sid::parse(well_known::kLocalSystem), 0x00000000},
      {Sid::parse(well_known::kAdministrators), 0x0000000E},
      {Sid::parse(well_known::kEveryone), 0x00000007},
      {Sid::parse("S-1-5-11"), 0x00000007},
  };
}

std::vector<TokenGroup> user_template_groups() {
  return {
      {Sid::parse("S-1-5-21-3623811015-3361044348-30300820-1013"), 0x00000000},
      {Sid::parse(well_known::kEveryone), 0x00000007},
      {Sid::parse(well_known::kUsers), 0x00000007},
      {Sid::parse("S-1-5-4"), 0x00000007},
      {Sid::parse("S-1-2-1"), 0x00000007},
      {Sid::parse("S-1-5-11"), 0x00000007},
      {Sid::parse("S-1-5-15"), 0x00000007},
      {Sid::parse("S-1-2-0"), 0x00000007},
  };
}

namespace {
constexpr std::uint64_t kDriverImageSize = 64;
}

Kernel::Kernel(SimMemory& mem) : mem_(mem), table_(mem) {}

void Kernel::require_running() const {
  if (bug_check_) throw SimError(Errc::SystemHalted, "kernel halted by bug check " + to_hex32(*bug_check_));
}

void Kernel::raise_bug_check(std::uint32_t code) {
  bug_check_ = code;
  throw BugCheck(code);
}

// ---------------------------------------------------------------------------
// drivers

Agent Kernel::load_driver(const std::string& name) {
  require_running();
  if (name.empty() || name == Agent::kernel().name || drivers_.contains(name)) {
    throw SimError(Errc::DuplicateDriver, "driver '" + name + "'");
  }
  Agent agent{AgentKind::Driver, name, next_epoch_++};
  Region image = mem_.alloc(kDriverImageSize, "DRIVER");
  Bytes stamp(kDriverImageSize, 0);
  std::copy_n(name.begin(), std::min<std::size_t>(name.size(), kDriverImageSize), stamp.begin());
  mem_.write_bytes(Agent::kernel(), image.base, stamp);
  drivers_.emplace(name, agent);
  driver_images_.emplace(name, image);
  if (hooks_.on_driver_load) hooks_.on_driver_load(agent, image);
  return agent;
}

const Agent& Kernel::driver(const std::string& name) const {
  auto it = drivers_.find(name);
  if (it == drivers_.end()) throw SimError(Errc::UnknownDriver, "driver '" + name + "'");
  return it->second;
}

std::optional<Region> Kernel::driver_image(const std::string& name) const {
  auto it = driver_images_.find(name);
  if (it == driver_images_.end()) return std::nullopt;
  return it->second;
}

std::vector<Agent> Kernel::drivers() const {
  std::vector<Agent> out;
  for (const auto& [name, agent] : drivers_) out.push_back(agent);
  std::sort(out.begin(), out.end(),
            [](const Agent& a, const Agent& b) { return a.load_epoch < b.load_epoch; });
  return out;
}

// ---------------------------------------------------------------------------
// files

std::uint64_t Kernel::name_id(const std::string& path) {
  auto [it, inserted] = name_ids_.try_emplace(path, name_ids_.size() + 1);
  return it->second;
}

std::uint64_t Kernel::add_file(const std::string& path, Bytes content, const Sid& required_group) {
  if (file_ids_.contains(path)) throw SimError(Errc::ValidationError, "file '" + path + "' exists");
  const std::uint64_t id = next_file_id_++;
  FileRecord record;
  record.file_id = id;
  record.path = path;
  record.content = std::move(content);
  record.security.required_group = required_group;
  files_.emplace(id, std::move(record));
  file_ids_.emplace(path, id);
  name_id(path);
  return id;
}

const FileRecord* Kernel::file(const std::string& path) const {
  auto it = file_ids_.find(path);
  return it == file_ids_.end() ? nullptr : file_by_id(it->second);
}

const FileRecord* Kernel::file_by_id(std::uint64_t file_id) const {
  auto it = files_.find(file_id);
  return it == files_.end() ? nullptr : &it->second;
}

const Kernel::OpenInstance* Kernel::open_instance(HandleValue handle) const {
  auto it = opens_.find(handle);
  return it == opens_.end() ? nullptr : &it->second;
}

Address Kernel::current_token(std::uint64_t pid) {
  const ProcessRecord& proc = process(pid);
  return Address{mem_.read_u64(Agent::kernel(), proc.eprocess.base + layout::kEprocessTokenRef)};
}

bool Kernel::token_has_group(Address token, const Sid& sid) {
  try {
    const Token t = read_token(mem_, Agent::kernel(), token);
    return std::any_of(t.user_and_groups.begin(), t.user_and_groups.end(),
                       [&](const TokenGroup& g) { return g.sid == sid; });
  } catch (const SimError& e) {
    if (e.code() == Errc::MalformedToken) return false;
    throw;
  }
}

CreateResult Kernel::zw_create_file(const ThreadContext& ctx, const std::string& path,
                                    std::uint32_t desired_access, std::uint32_t share_access) {
  require_running();
  SimMemory::Scope scope(mem_, "zw_create_file");

  auto id_it = file_ids_.find(path);
  if (id_it == file_ids_.end()) return {kStatusObjectNameNotFound, 0};
  FileRecord& rec = files_.at(id_it->second);

  // Security Reference Monitor: the only point where the token is consulted.
  const Address token = current_token(ctx.pid);
  if (!verify_sid_hash(mem_, Agent::kernel(), token) ||
      !token_has_group(token, rec.security.required_group)) {
    return {kStatusAccessDenied, 0};
  }

  if (rec.open_exclusive || (rec.open_count > 0 && share_access == 0)) {
    return {kStatusSharingViolation, 0};
  }

  const std::uint64_t open_id = next_open_id_++;
  FcbHeader fcb;
  fcb.file_id = rec.file_id;
  const Region fcb_block = materialize(mem_, fcb, open_id);

  FileObject fo;
  fo.name_id = name_id(path);
  fo.share_access = share_access;
  fo.fs_context = fcb_block.base;
  fo.fs_context2 = fcb_block.base + layout::kFcbHeaderSize;
  const Region fo_region = materialize(mem_, fo);

  const Region header = materialize(mem_, ObjectHeader{fo_region.base, layout::kFileTypeIndex});

  HandleValue handle = 0;
  try {
    handle = table_.insert(HandleTableEntry{encode_object_pointer(header.base),
                                            desired_access & kGrantedAccessMask});
  } catch (...) {
    mem_.free(header);
    mem_.free(fo_region);
    mem_.free(fcb_block);
    throw;
  }

  ++rec.open_count;
  rec.open_exclusive = share_access == 0;
  opens_.emplace(handle, OpenInstance{rec.file_id, header, fo_region, fcb_block, ctx.caller});

  if (hooks_.on_create_file) hooks_.on_create_file(handle, ctx.caller);
  return {kStatusSuccess, handle};
}

std::optional<Kernel::FcbTarget> Kernel::resolve(HandleValue handle) {
  if (!table_.is_live(handle)) throw SimError(Errc::InvalidHandle, "handle " + std::to_string(handle));
  const Agent& k = Agent::kernel();
  const auto entry = HandleTableEntry::unpack(mem_.read_u64(k, table_.entry_address(handle)));
  const Address header = decode_object_pointer(entry.object_pointer_bits);
  const Address file_object{mem_.read_u64(k, header + layout::kObjectHeaderBody)};
  const Address fcb{mem_.read_u64(k, file_object + layout::kFileObjectFsContext)};
  const FcbHeader h = read_fcb_header(mem_, k, fcb);
  if (h.node_type != layout::kFcbNodeTypeMarker) return std::nullopt;
  const FileRecord* rec = file_by_id(h.file_id);
  if (rec == nullptr) return std::nullopt;
  return FcbTarget{fcb, rec};
}

void Kernel::acquire_resources(Address fcb, ThreadId thread) {
  const Agent& k = Agent::kernel();
  const FcbHeader h = read_fcb_header(mem_, k, fcb);
  // A header that was copied from another stream no longer links to itself;
  // the kernel then treats its resources as held elsewhere and does not
  // take them.
  const bool intact = h.filter_contexts == fcb + layout::kFcbFilterContexts;
  for (auto [offset, owner] : {std::pair{layout::kFcbResourceOwner, h.resource_owner},
                               std::pair{layout::kFcbPagingIoOwner, h.paging_io_owner}}) {
    if (owner == thread) continue;
    if (intact && (owner == kUnownedThread || owner == kKernelSentinelThread)) {
      mem_.write_u64(k, fcb + offset, thread);
    }
  }
}

void Kernel::release_resources(Address fcb, ThreadId thread) {
  const Agent& k = Agent::kernel();
  for (auto offset : {layout::kFcbResourceOwner, layout::kFcbPagingIoOwner}) {
    if (mem_.read_u64(k, fcb + offset) != thread) raise_bug_check(kBugCheckResourceNotOwned);
  }
  const std::uint64_t stamp = mem_.read_u64(k, fcb + layout::kFcbOpStamp);
  mem_.write_u64(k, fcb + layout::kFcbOpStamp, stamp + 1);
  mem_.write_u64(k, fcb + layout::kFcbResourceOwner, kKernelSentinelThread);
  mem_.write_u64(k, fcb + layout::kFcbPagingIoOwner, kKernelSentinelThread);
}

ReadResult Kernel::zw_read_file(const ThreadContext& ctx, HandleValue handle, std::uint64_t offset,
                                std::uint64_t length) {
  require_running();
  SimMemory::Scope scope(mem_, "zw_read_file");
  const auto target = resolve(handle);
  if (!target) return {kStatusFileInvalid, {}};

  acquire_resources(target->fcb, ctx.thread);
  const Bytes& content = target->file->content;
  Bytes out;
  if (offset < content.size()) {
    const std::uint64_t n = std::min<std::uint64_t>(length, content.size() - offset);
    out.assign(content.begin() + static_cast<std::ptrdiff_t>(offset),
               content.begin() + static_cast<std::ptrdiff_t>(offset + n));
  }
  release_resources(target->fcb, ctx.thread);
  return {kStatusSuccess, std::move(out)};
}

NtStatus Kernel::zw_write_file(const ThreadContext& ctx, HandleValue handle, std::uint64_t offset,
                               std::span<const std::uint8_t> data) {
  require_running();
  SimMemory::Scope scope(mem_, "zw_write_file");
  const auto target = resolve(handle);
  if (!target) return kStatusFileInvalid;

  acquire_resources(target->fcb, ctx.thread);
  Bytes& content = files_.at(target->file->file_id).content;
  if (content.size() < offset + data.size()) content.resize(offset + data.size(), 0);
  std::copy(data.begin(), data.end(), content.begin() + static_cast<std::ptrdiff_t>(offset));
  release_resources(target->fcb, ctx.thread);
  return kStatusSuccess;
}

NtStatus Kernel::zw_close(const ThreadContext& ctx, HandleValue handle) {
  (void)ctx;
  require_running();
  SimMemory::Scope scope(mem_, "zw_close");
  if (!table_.is_live(handle)) throw SimError(Errc::InvalidHandle, "handle " + std::to_string(handle));

  if (hooks_.on_close) hooks_.on_close(handle);
  table_.remove(handle);

  auto it = opens_.find(handle);
  if (it != opens_.end()) {
    FileRecord& rec = files_.at(it->second.file_id);
    if (rec.open_count > 0) --rec.open_count;
    rec.open_exclusive = false;
    mem_.free(it->second.object_header);
    mem_.free(it->second.file_object);
    mem_.free(it->second.fcb_block);
    opens_.erase(it);
  }
  return kStatusSuccess;
}

// ---------------------------------------------------------------------------
// processes

ProcessRecord Kernel::create_process(const std::string& name, std::vector<TokenGroup> groups,
                                     std::uint64_t privileges) {
  require_running();
  SimMemory::Scope scope(mem_, "create_process");
  Token token;
  token.sid_hash = compute_sid_hash(groups);
  token.user_and_groups = std::move(groups);
  token.privileges = privileges;
  const Region token_region = materialize(mem_, token);

  Eprocess proc{next_pid_, name, token_region.base};
  const Region eprocess = materialize(mem_, proc);
  next_pid_ += 4;

  ProcessRecord record{proc.pid, name, eprocess, token_region};
  processes_.emplace(record.pid, record);
  if (hooks_.on_process_create) hooks_.on_process_create(record);
  return record;
}

const ProcessRecord& Kernel::process(std::uint64_t pid) const {
  auto it = processes_.find(pid);
  if (it == processes_.end()) throw SimError(Errc::UnknownProcess, "pid " + std::to_string(pid));
  return it->second;
}

const ProcessRecord* Kernel::process_by_name(const std::string& name) const {
  for (const auto& [pid, rec] : processes_) {
    if (rec.name == name) return &rec;
  }
  return nullptr;
}

std::vector<ProcessRecord> Kernel::processes() const {
  std::vector<ProcessRecord> out;
  for (const auto& [pid, rec] : processes_) out.push_back(rec);
  return out;
}

ThreadContext Kernel::context(std::uint64_t pid, const Agent& caller) {
  process(pid);
  auto [it, inserted] = threads_.try_emplace({pid, caller.name}, next_thread_);
  if (inserted) next_thread_ += 4;
  return ThreadContext{pid, it->second, caller};
}

bool Kernel::privileged_op(const ThreadContext& ctx) {
  require_running();
  SimMemory::Scope scope(mem_, "privileged_op");
  const Address token = current_token(ctx.pid);
  if (!verify_sid_hash(mem_, Agent::kernel(), token)) return false;
  return token_has_group(token, Sid::parse(well_known::kAdministrators));
}

std::vector<std::uint64_t> Kernel::detect_token_swap() {
  require_running();
  SimMemory::Scope scope(mem_, "detect_token_swap");
  std::map<std::uint64_t, std::vector<std::uint64_t>> by_token;
  for (const auto& [pid, rec] : processes_) {
    by_token[mem_.read_u64(Agent::kernel(), rec.eprocess.base + layout::kEprocessTokenRef)].push_back(pid);
  }
  std::vector<std::uint64_t> flagged;
  for (const auto& [token, pids] : by_token) {
    if (pids.size() < 2) continue;
    for (auto pid : pids) {
      if (processes_.at(pid).token.base.value != token) flagged.push_back(pid);
    }
  }
  std::sort(flagged.begin(), flagged.end());
  return flagged;
}

}  // namespace khs

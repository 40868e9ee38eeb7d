#include "khs/attacks.hpp"

#include <algorithm>
#include <set>

namespace khs {

bool is_attack_name(std::string_view name) {
  return std::find(std::begin(kAttackNames), std::end(kAttackNames), name) != std::end(kAttackNames);
}

namespace {

/// The attacking driver's view of memory. Tracks every byte it writes.
class Intruder {
 public:
  Intruder(Kernel& kernel, Agent self) : kernel_(kernel), mem_(kernel.memory()), self_(std::move(self)) {}

  Bytes read(Address addr, std::uint64_t len) { return mem_.read_bytes(self_, addr, len); }
  std::uint64_t read_u64(Address addr) { return mem_.read_u64(self_, addr); }
  std::uint32_t read_u32(Address addr) { return mem_.read_u32(self_, addr); }

  void write(Address addr, std::span<const std::uint8_t> data) {
    mem_.write_bytes(self_, addr, data);
    for (std::uint64_t i = 0; i < data.size(); ++i) patched_.insert(addr.value + i);
  }
  void write_u64(Address addr, std::uint64_t v) {
    Bytes b(8);
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    write(addr, b);
  }
  void write_u32(Address addr, std::uint32_t v) {
    Bytes b(4);
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    write(addr, b);
  }

  std::uint64_t bytes_patched() const { return patched_.size(); }

  /// Follows a handle to its FILE_OBJECT the way the object manager would.
  Address file_object_of(HandleValue handle) {
    const auto entry = HandleTableEntry::unpack(read_u64(kernel_.handle_table().entry_address(handle)));
    const Address header = decode_object_pointer(entry.object_pointer_bits);
    return Address{read_u64(header + layout::kObjectHeaderBody)};
  }

  struct Located {
    Address object_header;
    Address file_object;
  };

  /// Pool scan over object headers for a file object whose name matches.
  Located find_file(const std::string& path, Address skip_header) {
    const std::uint64_t wanted = kernel_.name_id(path);
    for (const Region& header : mem_.live_regions(kTagObjectHeader)) {
      if (header.base == skip_header) continue;
      const Address body{read_u64(header.base + layout::kObjectHeaderBody)};
      const auto body_region = mem_.region_containing(body);
      if (!body_region || body_region->tag != kTagFileObject || body_region->base != body) continue;
      if (read_u64(body + layout::kFileObjectNameId) == wanted) return {header.base, body};
    }
    throw SimError(Errc::SecretNotFound, "no open file object for '" + path + "'");
  }

  Address eprocess_of(std::uint64_t pid) {
    for (const Region& r : mem_.live_regions(kTagEprocess)) {
      if (read_u64(r.base + layout::kEprocessPid) == pid) return r.base;
    }
    throw SimError(Errc::UnknownProcess, "no EPROCESS for pid " + std::to_string(pid));
  }

  Address token_of(std::uint64_t pid) {
    return Address{read_u64(eprocess_of(pid) + layout::kEprocessTokenRef)};
  }

  Address header_of(HandleValue handle) {
    const auto entry = HandleTableEntry::unpack(read_u64(kernel_.handle_table().entry_address(handle)));
    return decode_object_pointer(entry.object_pointer_bits);
  }

 private:
  Kernel& kernel_;
  SimMemory& mem_;
  Agent self_;
  std::set<std::uint64_t> patched_;
};

const Bytes& secret_content(const Kernel& kernel, const std::string& path) {
  const FileRecord* rec = kernel.file(path);
  if (rec == nullptr) throw SimError(Errc::SecretNotFound, "no file '" + path + "'");
  return rec->content;
}

/// One read through the hijacker handle. Returns false on bug check.
bool hijacked_read(Kernel& kernel, const ThreadContext& ctx, HandleValue handle, AttackOutcome& out,
                   bool& matched, const Bytes& secret) {
  try {
    const ReadResult r = kernel.zw_read_file(ctx, handle, 0, kAttackReadLength);
    out.observed.insert(out.observed.end(), r.data.begin(), r.data.end());
    matched = matched && r.status.ok() && r.data == secret;
    return true;
  } catch (const BugCheck& bc) {
    out.bug_check = bc.code();
    matched = false;
    return false;
  }
}

void record_token_verdicts(Kernel& kernel, const Agent& driver, std::uint64_t target_pid,
                           AttackOutcome& out) {
  out.privileged = kernel.privileged_op(kernel.context(target_pid, driver));
  const Address token{kernel.memory().read_u64(
      Agent::kernel(), kernel.process(target_pid).eprocess.base + layout::kEprocessTokenRef)};
  out.hash_valid = verify_sid_hash(kernel.memory(), Agent::kernel(), token);
  out.swap_flagged = kernel.detect_token_swap();
}

}  // namespace

AttackOutcome attack_file_object_hijack(Kernel& kernel, const ThreadContext& ctx, HandleValue hijacker,
                                        const std::string& secret_path) {
  const Bytes& secret = secret_content(kernel, secret_path);
  Intruder me(kernel, ctx.caller);
  const Address mine = me.file_object_of(hijacker);
  const auto target = me.find_file(secret_path, me.header_of(hijacker));

  for (auto field : {layout::kFileObjectNameId, layout::kFileObjectFsContext, layout::kFileObjectFsContext2}) {
    me.write_u64(mine + field, me.read_u64(target.file_object + field));
  }

  AttackOutcome out;
  bool matched = true;
  hijacked_read(kernel, ctx, hijacker, out, matched, secret);
  out.succeeded = matched && !out.bug_check;
  out.bytes_patched = me.bytes_patched();
  return out;
}

AttackOutcome attack_handle_table_hijack(Kernel& kernel, const ThreadContext& ctx, HandleValue hijacker,
                                         const std::string& secret_path) {
  const Bytes& secret = secret_content(kernel, secret_path);
  Intruder me(kernel, ctx.caller);

  // Step 1: the secret file's OBJECT_HEADER.
  const Address secret_header = me.find_file(secret_path, me.header_of(hijacker)).object_header;

  // Step 2: the hijacker's own entry, located by enumeration.
  std::optional<Address> entry;
  enum_handle_table(kernel.handle_table(), [&](HandleTable&, Address addr, HandleValue h) {
    if (h != hijacker) return false;
    entry = addr;
    return true;
  });
  if (!entry) throw SimError(Errc::InvalidHandle, "hijacker handle not in table");

  // Step 3: rewrite only the ObjectPointerBits. The top nibble of byte 5
  // belongs to GrantedAccessBits and is written back unchanged.
  const std::uint64_t raw = me.read_u64(*entry);
  const std::uint64_t patched = (raw & ~kObjectPointerMask) | encode_object_pointer(secret_header);
  Bytes span(layout::kObjectPointerSpan);
  for (std::size_t i = 0; i < span.size(); ++i) span[i] = static_cast<std::uint8_t>(patched >> (8 * i));
  me.write(*entry, span);

  AttackOutcome out;
  bool matched = true;
  hijacked_read(kernel, ctx, hijacker, out, matched, secret);
  out.succeeded = matched && !out.bug_check;
  out.bytes_patched = me.bytes_patched();
  return out;
}

AttackOutcome attack_ntfs_hijack(Kernel& kernel, const ThreadContext& ctx, HandleValue hijacker,
                                 const std::string& secret_path, const NtfsHijackOptions& options) {
  const Bytes& secret = secret_content(kernel, secret_path);
  Intruder me(kernel, ctx.caller);
  const Address my_fcb{me.read_u64(me.file_object_of(hijacker) + layout::kFileObjectFsContext)};
  const auto target = me.find_file(secret_path, me.header_of(hijacker));
  const Address secret_fcb{me.read_u64(target.file_object + layout::kFileObjectFsContext)};

  AttackOutcome out;
  bool matched = options.accesses > 0;
  for (std::uint32_t i = 0; i < options.accesses; ++i) {
    if (i == 0 || options.recopy_each_access) {
      // Step 1: FCB header and CCB are contiguous, so one copy moves both.
      me.write(my_fcb, me.read(secret_fcb, layout::kFcbBlockSize));
      // Step 2
      if (options.do_step2) {
        me.write_u64(my_fcb + layout::kFcbResourceOwner, ctx.thread);
        me.write_u64(my_fcb + layout::kFcbPagingIoOwner, ctx.thread);
      }
    }
    if (!hijacked_read(kernel, ctx, hijacker, out, matched, secret)) break;
  }
  out.succeeded = matched && !out.bug_check;
  out.bytes_patched = me.bytes_patched();
  return out;
}

AttackOutcome attack_token_hijack(Kernel& kernel, const Agent& driver, std::uint64_t target_pid,
                                  std::uint64_t donor_pid) {
  Intruder me(kernel, driver);
  const Address target = me.token_of(target_pid);
  const Address donor = me.token_of(donor_pid);

  const std::uint32_t count = me.read_u32(donor + layout::kTokenCount);
  const Bytes buffer = me.read(donor + layout::kTokenBuffer, layout::kTokenBufferSize);
  const std::uint64_t sid_hash = me.read_u64(donor + layout::kTokenSidHash);

  // Extent actually used by the donor's records and SID bodies, keeping its
  // internal arrangement.
  std::uint64_t used = static_cast<std::uint64_t>(count) * layout::kTokenRecordSize;
  if (used > layout::kTokenBufferSize) throw SimError(Errc::DonorTooLarge, "donor record array too large");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t at = i * layout::kTokenRecordSize;
    std::uint32_t offset = 0;
    for (int b = 0; b < 4; ++b) offset |= static_cast<std::uint32_t>(buffer[at + b]) << (8 * b);
    if (offset + 8 > layout::kTokenBufferSize) throw SimError(Errc::DonorTooLarge, "donor SID outside buffer");
    used = std::max<std::uint64_t>(used, offset + 8 + 4ULL * buffer[offset + 1]);
  }
  if (used > layout::kTokenBufferSize) throw SimError(Errc::DonorTooLarge, "donor SID list exceeds target buffer");

  me.write_u32(target + layout::kTokenCount, count);
  if (used > 0) {
    me.write(target + layout::kTokenBuffer,
             std::span<const std::uint8_t>(buffer.data(), static_cast<std::size_t>(used)));
  }
  me.write_u64(target + layout::kTokenSidHash, sid_hash);

  AttackOutcome out;
  record_token_verdicts(kernel, driver, target_pid, out);
  out.succeeded = *out.privileged && *out.hash_valid && out.swap_flagged.empty();
  out.bytes_patched = me.bytes_patched();
  return out;
}

AttackOutcome attack_group_patch_legacy(Kernel& kernel, const Agent& driver, std::uint64_t target_pid) {
  Intruder me(kernel, driver);
  const Address target = me.token_of(target_pid);
  const std::uint32_t count = me.read_u32(target + layout::kTokenCount);
  const Bytes buffer = me.read(target + layout::kTokenBuffer, layout::kTokenBufferSize);

  std::vector<TokenGroup> groups;
  try {
    groups = decode_token_buffer(count, buffer);
  } catch (const SimError& e) {
    if (e.code() != Errc::MalformedToken) throw;
  }
  groups.push_back(TokenGroup{Sid::parse(well_known::kAdministrators), 0x0000000E});
  const Bytes rebuilt = encode_token_buffer(groups);

  me.write(target + layout::kTokenBuffer,
           std::span<const std::uint8_t>(rebuilt.data(), token_buffer_usage(groups)));
  me.write_u32(target + layout::kTokenCount, static_cast<std::uint32_t>(groups.size()));

  AttackOutcome out;
  record_token_verdicts(kernel, driver, target_pid, out);
  out.succeeded = *out.privileged;
  out.bytes_patched = me.bytes_patched();
  return out;
}

AttackOutcome attack_token_swap(Kernel& kernel, const Agent& driver, std::uint64_t target_pid,
                                std::uint64_t donor_pid) {
  Intruder me(kernel, driver);
  const Address donor_token = me.token_of(donor_pid);
  me.write_u64(me.eprocess_of(target_pid) + layout::kEprocessTokenRef, donor_token.value);

  AttackOutcome out;
  record_token_verdicts(kernel, driver, target_pid, out);
  out.succeeded = *out.privileged;
  out.bytes_patched = me.bytes_patched();
  return out;
}

}  // namespace khs

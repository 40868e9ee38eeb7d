#include "khs/kernel_objects.hpp"

#include <algorithm>
#include <charconv>

namespace khs {

namespace {

void put_u16(Bytes& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v);
  b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32(Bytes& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_u64(Bytes& b, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return v;
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

Region write_fresh(SimMemory& mem, const Bytes& bytes, const char* tag) {
  Region region = mem.alloc(bytes.size(), tag);
  mem.write_bytes(Agent::kernel(), region.base, bytes);
  return region;
}

}  // namespace

std::uint64_t encode_object_pointer(Address addr) {
  if ((addr.value & 0xF) != 0) {
    throw SimError(Errc::MisalignedAddress, "object header address must be 16-byte aligned");
  }
  return (addr.value & 0x0000FFFFFFFFFFFFULL) >> 4;
}

Address decode_object_pointer(std::uint64_t bits) {
  return Address{kCanonicalFloor.value | ((bits & kObjectPointerMask) << 4)};
}

std::uint64_t HandleTableEntry::pack() const {
  return (object_pointer_bits & kObjectPointerMask) |
         (static_cast<std::uint64_t>(granted_access_bits & kGrantedAccessMask) << 44);
}

HandleTableEntry HandleTableEntry::unpack(std::uint64_t raw) {
  return HandleTableEntry{raw & kObjectPointerMask,
                          static_cast<std::uint32_t>(raw >> 44) & kGrantedAccessMask};
}

// ---------------------------------------------------------------------------
// SID

Sid Sid::parse(std::string_view text) {
  auto fail = [&]() -> Sid {
    throw SimError(Errc::ParseError, "bad SID string '" + std::string(text) + "'");
  };
  if (text.size() < 2 || (text[0] != 'S' && text[0] != 's') || text[1] != '-') return fail();

  std::vector<std::uint64_t> parts;
  std::size_t pos = 2;
  while (pos <= text.size()) {
    const std::size_t dash = std::min(text.find('-', pos), text.size());
    std::uint64_t value = 0;
    const char* first = text.data() + pos;
    const char* last = text.data() + dash;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || first == last) return fail();
    parts.push_back(value);
    pos = dash + 1;
  }
  if (parts.size() < 3 || parts.size() - 2 > kMaxSubAuthorities) return fail();
  if (parts[0] != 1 || parts[1] >= (1ULL << 48)) return fail();

  Sid sid;
  sid.revision = static_cast<std::uint8_t>(parts[0]);
  for (int i = 0; i < 6; ++i) {
    sid.identifier_authority[i] = static_cast<std::uint8_t>(parts[1] >> (8 * (5 - i)));
  }
  for (std::size_t i = 2; i < parts.size(); ++i) {
    if (parts[i] > 0xFFFFFFFFULL) return fail();
    sid.sub_authorities.push_back(static_cast<std::uint32_t>(parts[i]));
  }
  return sid;
}

std::string Sid::to_string() const {
  std::uint64_t authority = 0;
  for (auto byte : identifier_authority) authority = (authority << 8) | byte;
  std::string out = "S-" + std::to_string(revision) + "-" + std::to_string(authority);
  for (auto sub : sub_authorities) out += "-" + std::to_string(sub);
  return out;
}

Bytes Sid::serialize() const {
  Bytes out(serialized_size(), 0);
  out[0] = revision;
  out[1] = static_cast<std::uint8_t>(sub_authorities.size());
  std::copy(identifier_authority.begin(), identifier_authority.end(), out.begin() + 2);
  for (std::size_t i = 0; i < sub_authorities.size(); ++i) put_u32(out, 8 + 4 * i, sub_authorities[i]);
  return out;
}

std::optional<Sid> Sid::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) return std::nullopt;
  const std::size_t count = bytes[1];
  if (bytes[0] != 1 || count == 0 || count > kMaxSubAuthorities) return std::nullopt;
  if (bytes.size() < 8 + 4 * count) return std::nullopt;
  Sid sid;
  sid.revision = bytes[0];
  std::copy(bytes.begin() + 2, bytes.begin() + 8, sid.identifier_authority.begin());
  for (std::size_t i = 0; i < count; ++i) sid.sub_authorities.push_back(get_u32(bytes, 8 + 4 * i));
  return sid;
}

// ---------------------------------------------------------------------------
// Token buffer

std::size_t token_buffer_usage(std::span<const TokenGroup> groups) {
  std::size_t used = groups.size() * layout::kTokenRecordSize;
  for (const auto& g : groups) used += g.sid.serialized_size();
  return used;
}

Bytes encode_token_buffer(std::span<const TokenGroup> groups) {
  const std::size_t used = token_buffer_usage(groups);
  if (used > layout::kTokenBufferSize) {
    throw SimError(Errc::TokenBufferOverflow, std::to_string(used) + " bytes needed, " +
                                                  std::to_string(layout::kTokenBufferSize) +
                                                  " available");
  }
  Bytes buffer(layout::kTokenBufferSize, 0);
  std::size_t body = groups.size() * layout::kTokenRecordSize;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    put_u32(buffer, i * layout::kTokenRecordSize, static_cast<std::uint32_t>(body));
    put_u32(buffer, i * layout::kTokenRecordSize + 4, groups[i].attributes);
    const Bytes sid = groups[i].sid.serialize();
    std::copy(sid.begin(), sid.end(), buffer.begin() + static_cast<std::ptrdiff_t>(body));
    body += sid.size();
  }
  return buffer;
}

std::vector<TokenGroup> decode_token_buffer(std::uint32_t count,
                                            std::span<const std::uint8_t> buffer) {
  if (static_cast<std::uint64_t>(count) * layout::kTokenRecordSize > buffer.size()) {
    throw SimError(Errc::MalformedToken, "record count exceeds buffer");
  }
  std::vector<TokenGroup> groups;
  groups.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t offset = get_u32(buffer, i * layout::kTokenRecordSize);
    const std::uint32_t attributes = get_u32(buffer, i * layout::kTokenRecordSize + 4);
    if (offset >= buffer.size()) throw SimError(Errc::MalformedToken, "sid offset out of buffer");
    auto sid = Sid::deserialize(buffer.subspan(offset));
    if (!sid) throw SimError(Errc::MalformedToken, "record " + std::to_string(i) + " has no valid SID");
    groups.push_back(TokenGroup{std::move(*sid), attributes});
  }
  return groups;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto byte : data) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t compute_sid_hash(std::span<const TokenGroup> groups) {
  Bytes word(4);
  put_u32(word, 0, static_cast<std::uint32_t>(groups.size()));
  std::uint64_t h = fnv1a64(word);
  for (const auto& g : groups) {
    put_u32(word, 0, g.attributes);
    h = fnv1a64(word, h);
    h = fnv1a64(g.sid.serialize(), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// materialize

Region materialize(SimMemory& mem, const ObjectHeader& header) {
  Bytes b(layout::kObjectHeaderSize, 0);
  put_u64(b, layout::kObjectHeaderBody, header.body_addr.value);
  b[layout::kObjectHeaderTypeIndex] = header.type_index;
  return write_fresh(mem, b, kTagObjectHeader);
}

Region materialize(SimMemory& mem, const FileObject& object) {
  Bytes b(layout::kFileObjectSize, 0);
  put_u16(b, layout::kFileObjectType, layout::kFileObjectTypeMarker);
  put_u16(b, layout::kFileObjectSizeField, static_cast<std::uint16_t>(layout::kFileObjectSize));
  put_u64(b, layout::kFileObjectNameId, object.name_id);
  put_u32(b, layout::kFileObjectShareAccess, object.share_access);
  put_u64(b, layout::kFileObjectFsContext, object.fs_context.value);
  put_u64(b, layout::kFileObjectFsContext2, object.fs_context2.value);
  return write_fresh(mem, b, kTagFileObject);
}

Region materialize(SimMemory& mem, const HandleTableEntry& entry) {
  Bytes b(layout::kHandleEntrySize, 0);
  put_u64(b, 0, entry.pack());
  return write_fresh(mem, b, "HTE");
}

Region materialize(SimMemory& mem, const Sid& sid) {
  return write_fresh(mem, sid.serialize(), "SID");
}

Region materialize(SimMemory& mem, const FcbHeader& header, std::uint64_t open_id) {
  Region region = mem.alloc(layout::kFcbBlockSize, kTagFcb);
  Bytes b(layout::kFcbBlockSize, 0);
  put_u16(b, layout::kFcbNodeType, header.node_type);
  put_u16(b, layout::kFcbNodeByteSize, static_cast<std::uint16_t>(layout::kFcbHeaderSize));
  put_u64(b, layout::kFcbFileId, header.file_id);
  put_u64(b, layout::kFcbResourceOwner, header.resource_owner);
  put_u64(b, layout::kFcbPagingIoOwner, header.paging_io_owner);
  put_u64(b, layout::kFcbOpStamp, header.op_stamp);
  put_u64(b, layout::kFcbFilterContexts, (region.base + layout::kFcbFilterContexts).value);
  put_u16(b, layout::kFcbHeaderSize + layout::kCcbNodeType, layout::kCcbNodeTypeMarker);
  put_u64(b, layout::kFcbHeaderSize + layout::kCcbOpenId, open_id);
  mem.write_bytes(Agent::kernel(), region.base, b);
  return region;
}

Region materialize(SimMemory& mem, const Token& token) {
  const Bytes buffer = encode_token_buffer(token.user_and_groups);
  Bytes b(layout::kTokenSize, 0);
  put_u32(b, layout::kTokenCount, static_cast<std::uint32_t>(token.user_and_groups.size()));
  put_u64(b, layout::kTokenSidHash, token.sid_hash);
  std::copy(buffer.begin(), buffer.end(), b.begin() + layout::kTokenBuffer);
  put_u64(b, layout::kTokenPrivileges, token.privileges);
  return write_fresh(mem, b, kTagToken);
}

Region materialize(SimMemory& mem, const Eprocess& process) {
  Bytes b(layout::kEprocessSize, 0);
  put_u64(b, layout::kEprocessPid, process.pid);
  put_u64(b, layout::kEprocessTokenRef, process.token_ref.value);
  const std::size_t n = std::min<std::size_t>(process.name.size(), layout::kEprocessNameSize - 1);
  std::copy_n(process.name.begin(), n, b.begin() + layout::kEprocessName);
  return write_fresh(mem, b, kTagEprocess);
}

// ---------------------------------------------------------------------------
// readers

ObjectHeader read_object_header(SimMemory& mem, const Agent& agent, Address addr) {
  const Bytes b = mem.read_bytes(agent, addr, layout::kObjectHeaderSize);
  return ObjectHeader{Address{get_u64(b, layout::kObjectHeaderBody)}, b[layout::kObjectHeaderTypeIndex]};
}

FileObject read_file_object(SimMemory& mem, const Agent& agent, Address addr) {
  const Bytes b = mem.read_bytes(agent, addr, layout::kFileObjectSize);
  return FileObject{get_u64(b, layout::kFileObjectNameId), get_u32(b, layout::kFileObjectShareAccess),
                    Address{get_u64(b, layout::kFileObjectFsContext)},
                    Address{get_u64(b, layout::kFileObjectFsContext2)}};
}

FcbHeader read_fcb_header(SimMemory& mem, const Agent& agent, Address addr) {
  const Bytes b = mem.read_bytes(agent, addr, layout::kFcbHeaderSize);
  FcbHeader h;
  h.node_type = get_u16(b, layout::kFcbNodeType);
  h.file_id = get_u64(b, layout::kFcbFileId);
  h.resource_owner = get_u64(b, layout::kFcbResourceOwner);
  h.paging_io_owner = get_u64(b, layout::kFcbPagingIoOwner);
  h.op_stamp = get_u64(b, layout::kFcbOpStamp);
  h.filter_contexts = Address{get_u64(b, layout::kFcbFilterContexts)};
  return h;
}

Eprocess read_eprocess(SimMemory& mem, const Agent& agent, Address addr) {
  const Bytes b = mem.read_bytes(agent, addr, layout::kEprocessSize);
  Eprocess p;
  p.pid = get_u64(b, layout::kEprocessPid);
  p.token_ref = Address{get_u64(b, layout::kEprocessTokenRef)};
  for (std::size_t i = 0; i < layout::kEprocessNameSize && b[layout::kEprocessName + i] != 0; ++i) {
    p.name.push_back(static_cast<char>(b[layout::kEprocessName + i]));
  }
  return p;
}

Token read_token(SimMemory& mem, const Agent& agent, Address addr) {
  const Bytes header = mem.read_bytes(agent, addr, layout::kTokenHeaderSize);
  const Bytes buffer = mem.read_bytes(agent, addr + layout::kTokenBuffer, layout::kTokenBufferSize);
  Token token;
  token.user_and_groups = decode_token_buffer(get_u32(header, layout::kTokenCount), buffer);
  token.sid_hash = get_u64(header, layout::kTokenSidHash);
  token.privileges = mem.read_u64(agent, addr + layout::kTokenPrivileges);
  return token;
}

std::uint64_t compute_sid_hash(SimMemory& mem, const Agent& agent, Address token) {
  const std::uint32_t count = mem.read_u32(agent, token + layout::kTokenCount);
  const Bytes buffer = mem.read_bytes(agent, token + layout::kTokenBuffer, layout::kTokenBufferSize);
  return compute_sid_hash(decode_token_buffer(count, buffer));
}

bool verify_sid_hash(SimMemory& mem, const Agent& agent, Address token) {
  try {
    return compute_sid_hash(mem, agent, token) == mem.read_u64(agent, token + layout::kTokenSidHash);
  } catch (const SimError& e) {
    if (e.code() == Errc::MalformedToken) return false;
    throw;
  }
}

// ---------------------------------------------------------------------------
// HandleTable

HandleTable::HandleTable(SimMemory& mem, std::uint32_t capacity)
    : mem_(mem),
      region_(mem.alloc(static_cast<std::uint64_t>(capacity) * layout::kHandleEntrySize, kTagHandleTable)),
      capacity_(capacity),
      live_(capacity, false),
      locked_(capacity, false) {}

Address HandleTable::entry_address(HandleValue handle) const {
  return region_.base + static_cast<std::uint64_t>(handle) * layout::kHandleEntrySize;
}

bool HandleTable::is_live(HandleValue handle) const {
  return handle > 0 && handle < capacity_ && live_[handle];
}

bool HandleTable::is_locked(HandleValue handle) const {
  return handle < capacity_ && locked_[handle];
}

std::size_t HandleTable::live_count() const {
  return static_cast<std::size_t>(std::count(live_.begin(), live_.end(), true));
}

HandleValue HandleTable::insert(const HandleTableEntry& entry) {
  for (HandleValue h = 1; h < capacity_; ++h) {
    if (!live_[h]) {
      mem_.write_u64(Agent::kernel(), entry_address(h), entry.pack());
      live_[h] = true;
      return h;
    }
  }
  throw SimError(Errc::TableFull, "no free handle table entry");
}

void HandleTable::remove(HandleValue handle) {
  if (!is_live(handle)) throw SimError(Errc::InvalidHandle, "handle " + std::to_string(handle));
  mem_.write_u64(Agent::kernel(), entry_address(handle), 0);
  live_[handle] = false;
  locked_[handle] = false;
}

bool HandleTable::enumerate(const EnumCallback& callback) {
  for (HandleValue h = 1; h < capacity_; ++h) {
    if (!live_[h]) continue;
    locked_[h] = true;
    const bool stop = callback(*this, entry_address(h), h);
    locked_[h] = false;  // ExUnlockHandleTableEntry
    if (stop) return true;
  }
  return false;
}

}  // namespace khs

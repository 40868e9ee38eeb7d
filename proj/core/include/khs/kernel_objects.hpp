#pragma once

// Byte layouts of the simulated kernel structures. All multi-byte fields are
// little-endian. Offsets are fixed by this header and are the on-wire format
// used by reports and dumps.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "khs/sim_memory.hpp"

namespace khs {

namespace layout {

inline constexpr std::uint64_t kObjectHeaderSize = 16;
inline constexpr std::uint64_t kObjectHeaderBody = 0;       // u64
inline constexpr std::uint64_t kObjectHeaderTypeIndex = 8;  // u8

inline constexpr std::uint64_t kHandleEntrySize = 8;
inline constexpr std::uint32_t kHandleTableCapacity = 256;
// Bytes of an entry that hold ObjectPointerBits (44 bits round up to 6 bytes).
inline constexpr std::uint64_t kObjectPointerSpan = 6;

inline constexpr std::uint64_t kFileObjectSize = 64;
inline constexpr std::uint64_t kFileObjectType = 0;         // u16
inline constexpr std::uint64_t kFileObjectSizeField = 2;    // u16
inline constexpr std::uint64_t kFileObjectNameId = 8;       // u64
inline constexpr std::uint64_t kFileObjectShareAccess = 16; // u32
inline constexpr std::uint64_t kFileObjectFsContext = 24;   // u64
inline constexpr std::uint64_t kFileObjectFsContext2 = 32;  // u64

inline constexpr std::uint64_t kFcbHeaderSize = 48;
inline constexpr std::uint64_t kCcbSize = 16;
inline constexpr std::uint64_t kFcbBlockSize = kFcbHeaderSize + kCcbSize;
inline constexpr std::uint64_t kFcbNodeType = 0;         // u16
inline constexpr std::uint64_t kFcbNodeByteSize = 2;     // u16
inline constexpr std::uint64_t kFcbFileId = 8;           // u64
inline constexpr std::uint64_t kFcbResourceOwner = 16;   // u64
inline constexpr std::uint64_t kFcbPagingIoOwner = 24;   // u64
inline constexpr std::uint64_t kFcbOpStamp = 32;         // u64
inline constexpr std::uint64_t kFcbFilterContexts = 40;  // u64, empty list links to itself
inline constexpr std::uint64_t kCcbNodeType = 0;         // u16, relative to CCB start
inline constexpr std::uint64_t kCcbOpenId = 8;           // u64

inline constexpr std::uint16_t kFileObjectTypeMarker = 0x0005;
inline constexpr std::uint16_t kFcbNodeTypeMarker = 0x0702;
inline constexpr std::uint16_t kCcbNodeTypeMarker = 0x0703;
inline constexpr std::uint8_t kFileTypeIndex = 0x25;

inline constexpr std::uint64_t kTokenHeaderSize = 16;
inline constexpr std::uint64_t kTokenCount = 0;    // u32
inline constexpr std::uint64_t kTokenSidHash = 8;  // u64
inline constexpr std::uint64_t kTokenBufferSize = 512;
inline constexpr std::uint64_t kTokenBuffer = kTokenHeaderSize;
inline constexpr std::uint64_t kTokenPrivileges = kTokenHeaderSize + kTokenBufferSize;  // u64
inline constexpr std::uint64_t kTokenSize = kTokenPrivileges + 8;
inline constexpr std::uint64_t kTokenRecordSize = 8;  // sid_offset u32, attributes u32

inline constexpr std::uint64_t kEprocessSize = 48;
inline constexpr std::uint64_t kEprocessPid = 0;       // u64
inline constexpr std::uint64_t kEprocessTokenRef = 8;  // u64
inline constexpr std::uint64_t kEprocessName = 16;     // 16 bytes, NUL padded
inline constexpr std::uint64_t kEprocessNameSize = 16;

}  // namespace layout

// Region tags used for pool-scan style lookups.
inline constexpr const char* kTagObjectHeader = "OBJHDR";
inline constexpr const char* kTagFileObject = "FILE";
inline constexpr const char* kTagFcb = "FCB";
inline constexpr const char* kTagToken = "TOKEN";
inline constexpr const char* kTagEprocess = "EPROCESS";
inline constexpr const char* kTagHandleTable = "HANDLETABLE";

// ---------------------------------------------------------------------------
// Object-pointer compression

inline constexpr std::uint64_t kObjectPointerMask = (1ULL << 44) - 1;
inline constexpr std::uint32_t kGrantedAccessMask = (1U << 20) - 1;

/// Drops the canonical prefix and the four alignment bits.
std::uint64_t encode_object_pointer(Address addr);
/// Restores the canonical 0xFFFF prefix.
Address decode_object_pointer(std::uint64_t bits);

struct HandleTableEntry {
  std::uint64_t object_pointer_bits = 0;
  std::uint32_t granted_access_bits = 0;

  std::uint64_t pack() const;
  static HandleTableEntry unpack(std::uint64_t raw);
  bool operator==(const HandleTableEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Plain field views of the structures

struct ObjectHeader {
  Address body_addr;
  std::uint8_t type_index = layout::kFileTypeIndex;
};

struct FileObject {
  std::uint64_t name_id = 0;
  std::uint32_t share_access = 0;
  Address fs_context;
  Address fs_context2;
  bool operator==(const FileObject&) const = default;
};

inline constexpr std::uint64_t kUnownedThread = 0;
inline constexpr std::uint64_t kKernelSentinelThread = 1;

struct FcbHeader {
  std::uint16_t node_type = layout::kFcbNodeTypeMarker;
  std::uint64_t file_id = 0;
  std::uint64_t resource_owner = kUnownedThread;
  std::uint64_t paging_io_owner = kUnownedThread;
  std::uint64_t op_stamp = 0;
  Address filter_contexts;  // == header base + kFcbFilterContexts when intact
  bool operator==(const FcbHeader&) const = default;
};

struct Sid {
  std::uint8_t revision = 1;
  std::array<std::uint8_t, 6> identifier_authority{};
  std::vector<std::uint32_t> sub_authorities;

  static constexpr std::size_t kMaxSubAuthorities = 15;

  /// Parses the "S-1-5-32-544" form.
  static Sid parse(std::string_view text);
  std::string to_string() const;

  std::size_t serialized_size() const { return 8 + 4 * sub_authorities.size(); }
  Bytes serialize() const;
  /// Returns nullopt when the bytes do not hold a valid SID.
  static std::optional<Sid> deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const Sid&) const = default;
};

struct TokenGroup {
  Sid sid;
  std::uint32_t attributes = 0;
  bool operator==(const TokenGroup&) const = default;
};

struct Token {
  std::vector<TokenGroup> user_and_groups;
  std::uint64_t sid_hash = 0;
  std::uint64_t privileges = 0;
};

struct Eprocess {
  std::uint64_t pid = 0;
  std::string name;
  Address token_ref;
};

/// Bytes used in the variable buffer by records plus SID bodies.
std::size_t token_buffer_usage(std::span<const TokenGroup> groups);
/// Records first, then packed SID bodies. Throws TokenBufferOverflow.
Bytes encode_token_buffer(std::span<const TokenGroup> groups);
/// Throws MalformedToken.
std::vector<TokenGroup> decode_token_buffer(std::uint32_t count,
                                            std::span<const std::uint8_t> buffer);

std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

/// SidHash stand-in: FNV-1a-64 over count, then each record's attributes and
/// SID body. Record offsets do not participate.
std::uint64_t compute_sid_hash(std::span<const TokenGroup> groups);

// ---------------------------------------------------------------------------
// Memory-resident objects. materialize() writes as KernelCore; the read_*
// helpers read through mediation as the given agent.

Region materialize(SimMemory& mem, const ObjectHeader& header);
Region materialize(SimMemory& mem, const FileObject& object);
Region materialize(SimMemory& mem, const HandleTableEntry& entry);
Region materialize(SimMemory& mem, const Sid& sid);
/// Allocates the contiguous FCB header + CCB block. The header's
/// filter_contexts field is set to point at the new header.
Region materialize(SimMemory& mem, const FcbHeader& header, std::uint64_t open_id);
Region materialize(SimMemory& mem, const Token& token);
Region materialize(SimMemory& mem, const Eprocess& process);

ObjectHeader read_object_header(SimMemory& mem, const Agent& agent, Address addr);
FileObject read_file_object(SimMemory& mem, const Agent& agent, Address addr);
FcbHeader read_fcb_header(SimMemory& mem, const Agent& agent, Address addr);
Eprocess read_eprocess(SimMemory& mem, const Agent& agent, Address addr);
/// Reads count and buffer, then decodes. Throws MalformedToken.
Token read_token(SimMemory& mem, const Agent& agent, Address addr);
/// Recomputes the hash from the token bytes in memory.
std::uint64_t compute_sid_hash(SimMemory& mem, const Agent& agent, Address token);
bool verify_sid_hash(SimMemory& mem, const Agent& agent, Address token);

// ---------------------------------------------------------------------------

using HandleValue = std::uint32_t;

/// Single-level dense handle table. Handle value equals entry index; entry 0
/// is never handed out.
class HandleTable {
 public:
  explicit HandleTable(SimMemory& mem, std::uint32_t capacity = layout::kHandleTableCapacity);

  const Region& region() const { return region_; }
  std::uint32_t capacity() const { return capacity_; }
  Address entry_address(HandleValue handle) const;
  bool is_live(HandleValue handle) const;
  bool is_locked(HandleValue handle) const;
  std::size_t live_count() const;

  /// Lowest free index >= 1; throws TableFull.
  HandleValue insert(const HandleTableEntry& entry);
  void remove(HandleValue handle);

  using EnumCallback = std::function<bool(HandleTable&, Address entry, HandleValue handle)>;
  /// ExEnumHandleTable: visits live entries in ascending order, unlocking each
  /// after its callback, and stops at the first callback that returns true.
  bool enumerate(const EnumCallback& callback);

 private:
  SimMemory& mem_;
  Region region_;
  std::uint32_t capacity_;
  std::vector<bool> live_;
  std::vector<bool> locked_;
};

inline bool enum_handle_table(HandleTable& table, const HandleTable::EnumCallback& callback) {
  return table.enumerate(callback);
}

}  // namespace khs

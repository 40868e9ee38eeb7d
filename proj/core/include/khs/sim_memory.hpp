#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "khs/errors.hpp"

namespace khs {

using Bytes = std::vector<std::uint8_t>;

/// Simulated 64-bit kernel virtual address.
struct Address {
  std::uint64_t value = 0;

  constexpr Address() = default;
  constexpr explicit Address(std::uint64_t v) : value(v) {}

  constexpr Address operator+(std::uint64_t off) const { return Address{value + off}; }
  constexpr std::uint64_t operator-(Address other) const { return value - other.value; }
  constexpr auto operator<=>(const Address&) const = default;
};

inline constexpr Address kCanonicalFloor{0xFFFF000000000000ULL};
inline constexpr Address kDefaultSpaceBase{0xFFFF800000000000ULL};
inline constexpr std::uint64_t kAllocAlignment = 16;

struct Region {
  Address base;
  std::uint64_t length = 0;
  std::string tag;

  Address end() const { return base + length; }
  bool contains(Address addr, std::uint64_t len) const {
    return addr >= base && len <= length && addr - base <= length - len;
  }
  bool operator==(const Region&) const = default;
};

enum class AgentKind { KernelCore, Driver };

struct Agent {
  AgentKind kind = AgentKind::Driver;
  std::string name;
  std::uint32_t load_epoch = 0;

  static Agent kernel() { return Agent{AgentKind::KernelCore, "kernel", 0}; }
  bool is_kernel() const { return kind == AgentKind::KernelCore; }

  // Identity is (kind, name); load_epoch is bookkeeping.
  bool operator==(const Agent& o) const { return kind == o.kind && name == o.name; }
};

enum class AccessKind { Read, Write };
enum class AccessDecision { Allow, RedirectFake };

const char* to_string(AccessKind kind) noexcept;
const char* to_string(AccessDecision decision) noexcept;

struct AccessLogEntry {
  Agent agent;
  Address addr;
  std::uint64_t length = 0;
  AccessKind kind = AccessKind::Read;
  AccessDecision decision = AccessDecision::Allow;
  std::uint64_t sequence = 0;
  // Innermost kernel routine active when the access happened ("" outside any).
  std::string scope;
};

using AccessPolicy =
    std::function<AccessDecision(const Agent&, Address, std::uint64_t, AccessKind)>;

/// Flat simulated kernel address space. Every read_bytes/write_bytes goes
/// through the installed policy and is logged; blocked accesses hit a
/// zero-filled fake page.
class SimMemory {
 public:
  explicit SimMemory(Address base = kDefaultSpaceBase,
                     std::uint64_t capacity = 0xFFFFFFFFFFFFFFF0ULL - kDefaultSpaceBase.value);

  Region alloc(std::uint64_t size, std::string tag);
  void free(const Region& region);

  Bytes read_bytes(const Agent& agent, Address addr, std::uint64_t len);
  void write_bytes(const Agent& agent, Address addr, std::span<const std::uint8_t> data);

  std::uint64_t read_u64(const Agent& agent, Address addr);
  std::uint32_t read_u32(const Agent& agent, Address addr);
  std::uint16_t read_u16(const Agent& agent, Address addr);
  void write_u64(const Agent& agent, Address addr, std::uint64_t value);
  void write_u32(const Agent& agent, Address addr, std::uint32_t value);
  void write_u16(const Agent& agent, Address addr, std::uint16_t value);

  /// Installs a new policy; an empty function restores allow-all.
  void install_policy(AccessPolicy policy);

  /// Out-of-band view for observers that are not agents (the hypervisor,
  /// tests, reports). Not mediated and not logged.
  Bytes inspect(Address addr, std::uint64_t len) const;

  bool is_live(const Region& region) const;
  std::optional<Region> region_containing(Address addr) const;
  /// Live regions carrying `tag`, in address order.
  std::vector<Region> live_regions(const std::string& tag) const;
  std::vector<Region> live_regions() const;

  const std::vector<AccessLogEntry>& log() const { return log_; }
  std::uint64_t blocked_count() const { return blocked_; }
  std::uint64_t absorbed_write_bytes() const { return absorbed_; }

  /// RAII marker naming the kernel routine currently executing.
  class Scope {
   public:
    Scope(SimMemory& mem, std::string name);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    SimMemory& mem_;
  };

 private:
  struct Block {
    Region region;
    Bytes bytes;
  };

  Block& block_for(Address addr, std::uint64_t len);
  AccessDecision decide(const Agent& agent, Address addr, std::uint64_t len, AccessKind kind);
  void record(const Agent& agent, Address addr, std::uint64_t len, AccessKind kind,
              AccessDecision decision);

  Address base_;
  std::uint64_t capacity_;
  std::uint64_t bump_ = 0;  // offset of the next never-used byte
  std::map<std::uint64_t, Block> live_;
  std::map<std::uint64_t, std::uint64_t> free_list_;  // base -> rounded size
  AccessPolicy policy_;
  std::vector<AccessLogEntry> log_;
  std::vector<std::string> scopes_;
  std::uint64_t next_sequence_ = 1;
  std::uint64_t blocked_ = 0;
  std::uint64_t absorbed_ = 0;
};

}  // namespace khs

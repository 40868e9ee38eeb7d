#pragma once

// Behavioral model of the enclave-based protection engine: enclaves, the
// byte-granular memory access policy (MAP), syscall/process hooks and the
// enclave-switch counter.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "khs/kernel_api.hpp"

namespace khs {

enum class EnclaveKind { Default, Driver, DataOnly };
const char* to_string(EnclaveKind kind) noexcept;

using EnclaveId = std::uint32_t;

struct Enclave {
  EnclaveId id = 0;
  EnclaveKind kind = EnclaveKind::Default;
  std::set<std::string> members;        // agent names executing inside
  std::set<std::string> trusted_extra;  // DataOnly allowlist
};

enum class GuardLabel { ObjHeaderGuard, FcbGuard, FileObjectGuard, TokenGuard, EprocessGuard, DriverGuard };
const char* to_string(GuardLabel label) noexcept;

struct AccessRule {
  Address base;
  std::uint64_t length = 0;
  bool deny_read = false;
  bool deny_write = false;
  std::set<std::string> exempt;  // agent names
  EnclaveId owning_enclave = 0;
  GuardLabel label = GuardLabel::ObjHeaderGuard;
  std::string key;  // what installed it, e.g. "handle:3"

  bool overlaps(Address addr, std::uint64_t len) const {
    return addr.value < base.value + length && base.value < addr.value + len;
  }
  bool denies(const Agent& agent, AccessKind kind) const {
    const bool kind_denied = kind == AccessKind::Read ? deny_read : deny_write;
    return kind_denied && !exempt.contains(agent.name);
  }
};

/// Ordered rule list; first matching rule wins, no match allows.
class MemoryAccessPolicy {
 public:
  /// Rejects a rule that would give some agent a different verdict for the
  /// same kind of access on an overlapping byte than an existing rule does.
  void insert(AccessRule rule);
  std::size_t remove_key(const std::string& key);
  const AccessRule* match(const Agent& agent, Address addr, std::uint64_t len, AccessKind kind) const;
  const std::vector<AccessRule>& rules() const { return rules_; }

 private:
  std::vector<AccessRule> rules_;
};

class Ranger {
 public:
  Ranger(SimMemory& mem, Kernel& kernel);
  Ranger(const Ranger&) = delete;
  Ranger& operator=(const Ranger&) = delete;

  /// Creates the Default and DataOnly enclaves, installs mediation, hooks
  /// the kernel, and guards processes that already exist.
  void protection_start(const std::vector<Agent>& preloaded, const std::vector<Agent>& trusted);
  bool started() const { return started_; }

  const Enclave& on_driver_load(const Agent& driver, const Region& image);
  void hook_create_file(HandleValue handle, const Agent& owner);
  void hook_close(HandleValue handle);
  void on_process_create(const ProcessRecord& process);

  AccessDecision mediate(const Agent& agent, Address addr, std::uint64_t len, AccessKind kind);

  std::uint64_t enclave_switch_count() const;
  const std::vector<Enclave>& enclaves() const { return enclaves_; }
  EnclaveId enclave_of(const Agent& agent) const;
  const MemoryAccessPolicy& map() const { return map_; }
  /// Index into the memory log of the first access mediated by this engine.
  std::size_t first_mediated_log_index() const { return log_start_; }

 private:
  Enclave& add_enclave(EnclaveKind kind);
  std::set<std::string> data_only_exempt() const;

  SimMemory& mem_;
  Kernel& kernel_;
  bool started_ = false;
  std::vector<Enclave> enclaves_;
  std::map<std::string, EnclaveId> assignment_;
  EnclaveId default_id_ = 0;
  EnclaveId data_only_id_ = 0;
  MemoryAccessPolicy map_;
  std::uint64_t switches_ = 0;
  std::optional<EnclaveId> last_enclave_;
  std::size_t log_start_ = 0;
};

}  // namespace khs

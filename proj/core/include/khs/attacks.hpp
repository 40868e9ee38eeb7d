#pragma once

// Adversary drivers. Every read and write they make on kernel structures is
// a mediated SimMemory access under the attacking driver's own Agent; the
// only other way they touch the system is through syscalls.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "khs/kernel_api.hpp"

namespace khs {

struct AttackOutcome {
  bool succeeded = false;
  Bytes observed;
  std::optional<std::uint32_t> bug_check;
  std::uint64_t bytes_patched = 0;

  // Token attacks only.
  std::optional<bool> privileged;
  std::optional<bool> hash_valid;
  std::vector<std::uint64_t> swap_flagged;
};

/// Names accepted in scenario files.
inline constexpr std::string_view kAttackNames[] = {
    "file_object_hijack", "handle_table_hijack", "ntfs_hijack",
    "token_hijack",       "group_patch_legacy",  "token_swap",
};
bool is_attack_name(std::string_view name);

/// Upper bound on what the file attacks ask the kernel to read per access.
inline constexpr std::uint64_t kAttackReadLength = 4096;

AttackOutcome attack_file_object_hijack(Kernel& kernel, const ThreadContext& ctx,
                                        HandleValue hijacker, const std::string& secret_path);

AttackOutcome attack_handle_table_hijack(Kernel& kernel, const ThreadContext& ctx,
                                         HandleValue hijacker, const std::string& secret_path);

struct NtfsHijackOptions {
  bool do_step2 = true;
  std::uint32_t accesses = 1;
  // Step 3: redo Steps 1 and 2 before every access, not just the first.
  bool recopy_each_access = true;
};

AttackOutcome attack_ntfs_hijack(Kernel& kernel, const ThreadContext& ctx, HandleValue hijacker,
                                 const std::string& secret_path, const NtfsHijackOptions& options);

AttackOutcome attack_token_hijack(Kernel& kernel, const Agent& driver, std::uint64_t target_pid,
                                  std::uint64_t donor_pid);

AttackOutcome attack_group_patch_legacy(Kernel& kernel, const Agent& driver, std::uint64_t target_pid);

AttackOutcome attack_token_swap(Kernel& kernel, const Agent& driver, std::uint64_t target_pid,
                                std::uint64_t donor_pid);

}  // namespace khs

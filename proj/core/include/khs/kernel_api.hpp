#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "khs/kernel_objects.hpp"
#include "khs/sim_memory.hpp"

namespace khs {

struct NtStatus {
  std::uint32_t code = 0;

  constexpr bool ok() const { return code == 0; }
  constexpr bool operator==(const NtStatus&) const = default;
};

inline constexpr NtStatus kStatusSuccess{0x00000000};
inline constexpr NtStatus kStatusAccessDenied{0xC0000022};
inline constexpr NtStatus kStatusObjectNameNotFound{0xC0000034};
inline constexpr NtStatus kStatusSharingViolation{0xC0000043};
inline constexpr NtStatus kStatusFileInvalid{0xC0000098};

inline constexpr std::uint32_t kBugCheckResourceNotOwned = 0x000000E3;

std::string to_hex32(std::uint32_t value);

namespace access {
inline constexpr std::uint32_t kFileReadData = 0x0001;
inline constexpr std::uint32_t kFileWriteData = 0x0002;
inline constexpr std::uint32_t kGenericReadWrite = 0x0001F;
}  // namespace access

namespace well_known {
inline const char* const kAdministrators = "S-1-5-32-544";
inline const char* const kUsers = "S-1-5-32-545";
inline const char* const kLocalSystem = "S-1-5-18";
inline const char* const kEveryone = "S-1-1-0";
}  // namespace well_known

/// Built-in group lists for the two process templates. SYSTEM's variable
/// portion is smaller than USER's, as on a real system.
std::vector<TokenGroup> system_template_groups();
std::vector<TokenGroup> user_template_groups();
inline constexpr std::uint64_t kSystemPrivileges = 0x0000001FFFFFFFFCULL;
inline constexpr std::uint64_t kUserPrivileges = 0x0000000000800000ULL;

using ThreadId = std::uint64_t;

struct ThreadContext {
  std::uint64_t pid = 0;
  ThreadId thread = 0;
  Agent caller;
};

struct FileSecurity {
  Sid required_group;
};

struct FileRecord {
  std::uint64_t file_id = 0;
  std::string path;
  Bytes content;
  FileSecurity security;
  Sid owner;
  bool open_exclusive = false;
  std::uint32_t open_count = 0;
};

struct ProcessRecord {
  std::uint64_t pid = 0;
  std::string name;
  Region eprocess;
  Region token;  // the token the kernel created for this process
};

struct CreateResult {
  NtStatus status;
  HandleValue handle = 0;
};

struct ReadResult {
  NtStatus status;
  Bytes data;
};

/// Notification points the protection engine attaches to. Hooks run
/// synchronously inside the syscall that fires them.
struct KernelHooks {
  std::function<void(HandleValue, const Agent&)> on_create_file;
  std::function<void(HandleValue)> on_close;
  std::function<void(const ProcessRecord&)> on_process_create;
  std::function<void(const Agent&, const Region&)> on_driver_load;
};

/// Simulated syscall layer. Every structure access made on behalf of a
/// syscall is a mediated KernelCore access to SimMemory.
class Kernel {
 public:
  explicit Kernel(SimMemory& mem);

  SimMemory& memory() { return mem_; }
  HandleTable& handle_table() { return table_; }

  void set_hooks(KernelHooks hooks) { hooks_ = std::move(hooks); }

  // -- drivers ------------------------------------------------------------
  /// Loads a driver: assigns the next load epoch, allocates its image
  /// region, and fires on_driver_load.
  Agent load_driver(const std::string& name);
  const Agent& driver(const std::string& name) const;
  std::optional<Region> driver_image(const std::string& name) const;
  std::vector<Agent> drivers() const;

  // -- files --------------------------------------------------------------
  std::uint64_t add_file(const std::string& path, Bytes content, const Sid& required_group);
  /// Interned object-name id; the same path always yields the same id.
  std::uint64_t name_id(const std::string& path);
  const FileRecord* file(const std::string& path) const;
  const FileRecord* file_by_id(std::uint64_t file_id) const;

  CreateResult zw_create_file(const ThreadContext& ctx, const std::string& path,
                              std::uint32_t desired_access, std::uint32_t share_access);
  ReadResult zw_read_file(const ThreadContext& ctx, HandleValue handle, std::uint64_t offset,
                          std::uint64_t length);
  NtStatus zw_write_file(const ThreadContext& ctx, HandleValue handle, std::uint64_t offset,
                         std::span<const std::uint8_t> data);
  NtStatus zw_close(const ThreadContext& ctx, HandleValue handle);

  struct OpenInstance {
    std::uint64_t file_id = 0;
    Region object_header;
    Region file_object;
    Region fcb_block;
    Agent owner;
  };
  const OpenInstance* open_instance(HandleValue handle) const;

  // -- processes ----------------------------------------------------------
  ProcessRecord create_process(const std::string& name, std::vector<TokenGroup> groups,
                               std::uint64_t privileges);
  const ProcessRecord& process(std::uint64_t pid) const;
  const ProcessRecord* process_by_name(const std::string& name) const;
  std::vector<ProcessRecord> processes() const;

  /// Thread id for (process, driver); allocated on first use.
  ThreadContext context(std::uint64_t pid, const Agent& caller);

  /// Allowed iff the current token's SidHash verifies and it holds the
  /// Administrators SID.
  bool privileged_op(const ThreadContext& ctx);
  /// Pids of processes referencing a token they did not receive at creation
  /// while another process references the same token.
  std::vector<std::uint64_t> detect_token_swap();

  // -- bug checks ---------------------------------------------------------
  bool halted() const { return bug_check_.has_value(); }
  std::optional<std::uint32_t> bug_check() const { return bug_check_; }

 private:
  void require_running() const;
  [[noreturn]] void raise_bug_check(std::uint32_t code);
  bool token_has_group(Address token, const Sid& sid);
  Address current_token(std::uint64_t pid);

  struct FcbTarget {
    Address fcb;
    const FileRecord* file = nullptr;
  };
  // Handle -> entry -> object header -> file object -> FCB, all mediated.
  std::optional<FcbTarget> resolve(HandleValue handle);
  void acquire_resources(Address fcb, ThreadId thread);
  void release_resources(Address fcb, ThreadId thread);

  SimMemory& mem_;
  HandleTable table_;
  KernelHooks hooks_;

  std::map<std::string, Agent> drivers_;
  std::map<std::string, Region> driver_images_;
  std::uint32_t next_epoch_ = 1;

  std::map<std::uint64_t, FileRecord> files_;  // by file id
  std::map<std::string, std::uint64_t> file_ids_;
  std::map<std::string, std::uint64_t> name_ids_;
  std::uint64_t next_file_id_ = 1;
  std::map<HandleValue, OpenInstance> opens_;
  std::uint64_t next_open_id_ = 1;

  std::map<std::uint64_t, ProcessRecord> processes_;
  std::uint64_t next_pid_ = 4;
  std::map<std::pair<std::uint64_t, std::string>, ThreadId> threads_;
  ThreadId next_thread_ = 0x1000;

  std::optional<std::uint32_t> bug_check_;
};

}  // namespace khs

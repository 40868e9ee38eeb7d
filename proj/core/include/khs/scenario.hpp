#pragma once

// Declarative scenarios, the replay runner, and verdict reports.
//
// Scenario file (JSON, UTF-8):
//   {
//     "name": "...",
//     "processes": [{"name": "System", "template": "SYSTEM"|"USER",
//                    "groups": [{"sid": "S-1-...", "attributes": 7}],   // optional extra groups
//                    "privileges": "0x..."}],                            // optional override
//     "preloaded_drivers": ["fs_owner"],
//     "loaded_drivers": ["attacker"],
//     "trusted_drivers": [],
//     "files": [{"path": "secret.txt", "content": "..." | "content_hex": "0a0b",
//                "required_group": "S-1-5-32-545",
//                "exclusive_owner": "fs_owner", "owner_process": "System"}],
//     "actions": [{"id": "a1", "actor": "attacker", "process": "malware.exe",
//                  "action": "create_file", "params": {...}}],
//     "expectations": {"off": {"a1": {"status": "0x00000000"}}, "on": {...}}
//   }
// See docs/scenario-format.md for every action and expectation key.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "khs/attacks.hpp"
#include "khs/kernel_api.hpp"
#include "khs/ranger.hpp"
#include "khs/sim_memory.hpp"

namespace khs {

enum class Protection { Off, On };
const char* to_string(Protection p) noexcept;

struct ProcessSpec {
  std::string name;
  std::string template_name;  // SYSTEM or USER
  std::vector<TokenGroup> extra_groups;
  std::optional<std::uint64_t> privileges;
};

struct FileSpec {
  std::string path;
  Bytes content;
  std::string required_group;
  std::optional<std::string> exclusive_owner;
  std::string owner_process = "System";
};

struct ActionSpec {
  std::string id;
  std::string actor;
  std::string process;
  std::string action;
  // Parameter values kept as strings; numbers and booleans are normalized.
  std::map<std::string, std::string> params;
};

struct Expectation {
  std::optional<bool> succeeded;
  std::optional<std::string> status;
  std::optional<std::string> bug_check;
  std::optional<bool> allowed;
  std::optional<std::vector<std::string>> flagged;
  std::optional<std::string> observed;  // UTF-8 text the action must observe
  std::optional<std::string> error;
};

struct Scenario {
  std::string name;
  std::string description;
  std::vector<ProcessSpec> processes;
  std::vector<std::string> preloaded_drivers;
  std::vector<std::string> loaded_drivers;
  std::vector<std::string> trusted_drivers;
  std::vector<FileSpec> files;
  std::vector<ActionSpec> actions;
  std::map<std::string, std::map<std::string, Expectation>> expectations;  // mode -> action id
};

/// Action names accepted besides the attack names.
inline constexpr std::string_view kSyscallActions[] = {
    "create_file", "read_file", "write_file", "close", "privileged_op", "detect_token_swap", "driver_read",
};

/// Throws SimError(ParseError) for malformed JSON or wrong field types, and
/// SimError(ValidationError) when a cross-reference does not resolve.
Scenario load_scenario(std::string_view text);
Scenario load_scenario_file(const std::string& path);

struct ActionOutcome {
  std::string id;
  std::string action;
  std::string actor;
  std::string status;  // NTSTATUS hex, or "OK"
  std::optional<std::string> error;
  std::optional<bool> succeeded;
  std::optional<bool> allowed;
  std::optional<std::string> bug_check;
  std::optional<std::uint32_t> handle;
  std::string observed_digest;  // fnv1a64 of observed bytes, 16 hex digits
  std::uint64_t observed_len = 0;
  std::uint64_t bytes_patched = 0;
  std::vector<std::string> flagged;

  bool operator==(const ActionOutcome&) const = default;
};

struct MapEntry {
  std::string label;
  std::string base;  // hex
  std::uint64_t length = 0;
  std::vector<std::string> denied;
  std::vector<std::string> exempt;

  bool operator==(const MapEntry&) const = default;
};

struct Report {
  std::string scenario;
  std::string protection;
  std::vector<ActionOutcome> actions;
  bool halted = false;
  std::optional<std::string> bug_check;
  std::uint64_t blocked_accesses = 0;
  std::uint64_t enclave_switch_count = 0;
  std::uint64_t enclave_count = 0;
  std::vector<MapEntry> map;
  std::string verdict;  // PASS or FAIL
  std::vector<std::string> mismatches;

  bool operator==(const Report&) const = default;
};

std::string to_json(const Report& report, int indent = 2);
std::string to_json(const std::vector<Report>& reports, int indent = 2);
Report report_from_json(std::string_view text);
std::string to_text(const Report& report);

/// One self-contained simulated machine.
struct Simulation {
  SimMemory memory;
  Kernel kernel;
  Ranger ranger;

  Simulation() : kernel(memory), ranger(memory, kernel) {}
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;
};

/// Builds a fresh simulation, replays setup and actions, and scores the
/// result against the scenario's expectations for `protection`.
Report run(const Scenario& scenario, Protection protection);

/// Same as run(), but leaves the simulation for inspection.
Report run(const Scenario& scenario, Protection protection, Simulation& sim);

std::string hex64(std::uint64_t value);
std::string digest_hex(std::span<const std::uint8_t> bytes);

}  // namespace khs

#include "khs/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace khs {

using nlohmann::json;

const char* to_string(Protection p) noexcept { return p == Protection::On ? "on" : "off"; }

std::string hex64(std::uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016llX", static_cast<unsigned long long>(value));
  return buf;
}

std::string digest_hex(std::span<const std::uint8_t> bytes) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

namespace {

[[noreturn]] void parse_fail(const std::string& field, const std::string& what) {
  throw SimError(Errc::ParseError, "field '" + field + "': " + what);
}

[[noreturn]] void invalid(const std::string& what) { throw SimError(Errc::ValidationError, what); }

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) parse_fail(where + "." + key, "missing");
  return obj.at(key);
}

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) parse_fail(where, "expected string");
  return v.get<std::string>();
}

std::vector<std::string> get_string_list(const json& obj, const char* key, const std::string& where) {
  std::vector<std::string> out;
  if (!obj.contains(key)) return out;
  const json& arr = obj.at(key);
  if (!arr.is_array()) parse_fail(where + "." + key, "expected array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(get_string(arr[i], where + "." + key + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::uint64_t parse_number(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    try {
      std::size_t used = 0;
      const std::uint64_t n = std::stoull(s, &used, 0);
      if (used == s.size()) return n;
    } catch (const std::exception&) {
    }
  }
  parse_fail(where, "expected non-negative number");
}

Bytes parse_hex_bytes(const std::string& hex, const std::string& where) {
  if (hex.size() % 2 != 0) parse_fail(where, "odd-length hex string");
  Bytes out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    unsigned value = 0;
    if (std::sscanf(hex.substr(i, 2).c_str(), "%2x", &value) != 1) parse_fail(where, "bad hex digit");
    out.push_back(static_cast<std::uint8_t>(value));
  }
  return out;
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

std::string status_string(std::uint32_t v) { return to_hex32(v); }

Expectation parse_expectation(const json& v, const std::string& where) {
  if (!v.is_object()) parse_fail(where, "expected object");
  Expectation e;
  for (auto it = v.begin(); it != v.end(); ++it) {
    const std::string field = where + "." + it.key();
    const json& val = it.value();
    if (it.key() == "succeeded" || it.key() == "allowed") {
      if (!val.is_boolean()) parse_fail(field, "expected boolean");
      (it.key() == "succeeded" ? e.succeeded : e.allowed) = val.get<bool>();
    } else if (it.key() == "status") {
      e.status = status_string(static_cast<std::uint32_t>(parse_number(val, field)));
    } else if (it.key() == "bug_check") {
      e.bug_check = status_string(static_cast<std::uint32_t>(parse_number(val, field)));
    } else if (it.key() == "flagged") {
      if (!val.is_array()) parse_fail(field, "expected array");
      std::vector<std::string> names;
      for (std::size_t i = 0; i < val.size(); ++i) names.push_back(get_string(val[i], field + "[" + std::to_string(i) + "]"));
      std::sort(names.begin(), names.end());
      e.flagged = names;
    } else if (it.key() == "observed") {
      e.observed = get_string(val, field);
    } else if (it.key() == "error") {
      e.error = get_string(val, field);
    } else {
      parse_fail(field, "unknown expectation key");
    }
  }
  return e;
}

void validate(const Scenario& s) {
  if (s.name.empty()) invalid("scenario name is empty");

  std::set<std::string> processes;
  for (const auto& p : s.processes) {
    if (!processes.insert(p.name).second) invalid("duplicate process '" + p.name + "'");
    if (p.template_name != "SYSTEM" && p.template_name != "USER") {
      invalid("process '" + p.name + "' has unknown template '" + p.template_name + "'");
    }
  }
  std::set<std::string> drivers;
  for (const auto* list : {&s.preloaded_drivers, &s.loaded_drivers}) {
    for (const auto& d : *list) {
      if (d.empty() || d == "kernel" || !drivers.insert(d).second) invalid("duplicate or reserved driver name '" + d + "'");
    }
  }
  for (const auto& d : s.trusted_drivers) {
    if (!drivers.contains(d)) invalid("trusted driver '" + d + "' is not declared");
  }
  std::set<std::string> files;
  for (const auto& f : s.files) {
    if (!files.insert(f.path).second) invalid("duplicate file '" + f.path + "'");
    try {
      Sid::parse(f.required_group);
    } catch (const SimError&) {
      invalid("file '" + f.path + "' has malformed required_group");
    }
    if (f.exclusive_owner && !drivers.contains(*f.exclusive_owner)) {
      invalid("file '" + f.path + "' owner '" + *f.exclusive_owner + "' is not a declared driver");
    }
    if (!processes.contains(f.owner_process)) {
      invalid("file '" + f.path + "' owner process '" + f.owner_process + "' is not declared");
    }
  }

  std::set<std::string> ids;
  std::set<std::string> handle_ids;
  auto need_param = [](const ActionSpec& a, const char* key) -> const std::string& {
    auto it = a.params.find(key);
    if (it == a.params.end()) invalid("action '" + a.id + "' is missing parameter '" + key + "'");
    return it->second;
  };
  for (const auto& a : s.actions) {
    if (a.id.empty() || !ids.insert(a.id).second) invalid("duplicate or empty action id '" + a.id + "'");
    if (a.actor != "kernel" && !drivers.contains(a.actor)) invalid("action '" + a.id + "' actor '" + a.actor + "' is not declared");
    if (!processes.contains(a.process)) invalid("action '" + a.id + "' process '" + a.process + "' is not declared");

    const bool syscall = std::find(std::begin(kSyscallActions), std::end(kSyscallActions), a.action) != std::end(kSyscallActions);
    if (!syscall && !is_attack_name(a.action)) invalid("action '" + a.id + "' has unknown action '" + a.action + "'");
    if (is_attack_name(a.action) && a.actor == "kernel") invalid("attack '" + a.id + "' must be performed by a driver");

    if (a.action == "create_file") {
      need_param(a, "path");
      handle_ids.insert(a.id);
    }
    if (a.action == "read_file" || a.action == "write_file" || a.action == "close" ||
        a.action == "file_object_hijack" || a.action == "handle_table_hijack" || a.action == "ntfs_hijack") {
      const std::string& h = need_param(a, a.action.ends_with("hijack") ? "hijacker" : "handle");
      if (!handle_ids.contains(h)) invalid("action '" + a.id + "' references unknown handle action '" + h + "'");
    }
    if (a.action.ends_with("_hijack") && a.action != "token_hijack") {
      const std::string& secret = need_param(a, "secret");
      if (!files.contains(secret)) invalid("action '" + a.id + "' secret path '" + secret + "' is not declared");
    }
    if (a.action == "token_hijack" || a.action == "token_swap" || a.action == "group_patch_legacy") {
      std::vector<const char*> keys{"target"};
      if (a.action != "group_patch_legacy") keys.push_back("donor");
      for (const char* key : keys) {
        const std::string& p = need_param(a, key);
        if (!processes.contains(p)) invalid("action '" + a.id + "' " + key + " process '" + p + "' is not declared");
      }
    }
    if (a.action == "driver_read") {
      const std::string& t = need_param(a, "target");
      if (!drivers.contains(t)) invalid("action '" + a.id + "' target driver '" + t + "' is not declared");
    }
  }

  for (const auto& [mode, per_action] : s.expectations) {
    if (mode != "on" && mode != "off") invalid("expectation mode '" + mode + "' must be on or off");
    for (const auto& [id, e] : per_action) {
      if (!ids.contains(id)) invalid("expectation for unknown action '" + id + "'");
    }
  }
}

}  // namespace

Scenario load_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SimError(Errc::ParseError, "line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) parse_fail("$", "expected object");

  Scenario s;
  s.name = get_string(require(doc, "name", "$"), "$.name");
  if (doc.contains("description")) s.description = get_string(doc["description"], "$.description");

  if (doc.contains("processes")) {
    const json& procs = doc["processes"];
    if (!procs.is_array()) parse_fail("$.processes", "expected array");
    for (std::size_t i = 0; i < procs.size(); ++i) {
      const std::string where = "$.processes[" + std::to_string(i) + "]";
      const json& p = procs[i];
      if (!p.is_object()) parse_fail(where, "expected object");
      ProcessSpec spec;
      spec.name = get_string(require(p, "name", where), where + ".name");
      spec.template_name = get_string(require(p, "template", where), where + ".template");
      if (p.contains("groups")) {
        const json& groups = p["groups"];
        if (!groups.is_array()) parse_fail(where + ".groups", "expected array");
        for (std::size_t g = 0; g < groups.size(); ++g) {
          const std::string gw = where + ".groups[" + std::to_string(g) + "]";
          const json& gj = groups[g];
          if (!gj.is_object()) parse_fail(gw, "expected object");
          TokenGroup group;
          try {
            group.sid = Sid::parse(get_string(require(gj, "sid", gw), gw + ".sid"));
          } catch (const SimError& e) {
            if (e.code() != Errc::ParseError) throw;
            parse_fail(gw + ".sid", "malformed SID");
          }
          if (gj.contains("attributes")) group.attributes = static_cast<std::uint32_t>(parse_number(gj["attributes"], gw + ".attributes"));
          spec.extra_groups.push_back(std::move(group));
        }
      }
      if (p.contains("privileges")) spec.privileges = parse_number(p["privileges"], where + ".privileges");
      s.processes.push_back(std::move(spec));
    }
  }

  s.preloaded_drivers = get_string_list(doc, "preloaded_drivers", "$");
  s.loaded_drivers = get_string_list(doc, "loaded_drivers", "$");
  s.trusted_drivers = get_string_list(doc, "trusted_drivers", "$");

  if (doc.contains("files")) {
    const json& files = doc["files"];
    if (!files.is_array()) parse_fail("$.files", "expected array");
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::string where = "$.files[" + std::to_string(i) + "]";
      const json& f = files[i];
      if (!f.is_object()) parse_fail(where, "expected object");
      FileSpec spec;
      spec.path = get_string(require(f, "path", where), where + ".path");
      if (f.contains("content_hex")) {
        spec.content = parse_hex_bytes(get_string(f["content_hex"], where + ".content_hex"), where + ".content_hex");
      } else if (f.contains("content")) {
        const std::string c = get_string(f["content"], where + ".content");
        spec.content.assign(c.begin(), c.end());
      }
      spec.required_group = f.contains("required_group") ? get_string(f["required_group"], where + ".required_group")
                                                         : std::string(well_known::kEveryone);
      if (f.contains("exclusive_owner") && !f["exclusive_owner"].is_null()) {
        spec.exclusive_owner = get_string(f["exclusive_owner"], where + ".exclusive_owner");
      }
      if (f.contains("owner_process")) spec.owner_process = get_string(f["owner_process"], where + ".owner_process");
      s.files.push_back(std::move(spec));
    }
  }

  if (doc.contains("actions")) {
    const json& actions = doc["actions"];
    if (!actions.is_array()) parse_fail("$.actions", "expected array");
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const std::string where = "$.actions[" + std::to_string(i) + "]";
      const json& a = actions[i];
      if (!a.is_object()) parse_fail(where, "expected object");
      ActionSpec spec;
      spec.id = get_string(require(a, "id", where), where + ".id");
      spec.actor = get_string(require(a, "actor", where), where + ".actor");
      spec.action = get_string(require(a, "action", where), where + ".action");
      spec.process = a.contains("process") ? get_string(a["process"], where + ".process") : std::string("System");
      if (a.contains("params")) {
        const json& params = a["params"];
        if (!params.is_object()) parse_fail(where + ".params", "expected object");
        for (auto it = params.begin(); it != params.end(); ++it) {
          const json& v = it.value();
          if (v.is_string()) spec.params[it.key()] = v.get<std::string>();
          else if (v.is_boolean()) spec.params[it.key()] = v.get<bool>() ? "true" : "false";
          else if (v.is_number_integer()) spec.params[it.key()] = std::to_string(parse_number(v, where + ".params." + it.key()));
          else parse_fail(where + ".params." + it.key(), "expected string, integer or boolean");
        }
      }
      s.actions.push_back(std::move(spec));
    }
  }

  if (doc.contains("expectations")) {
    const json& ex = doc["expectations"];
    if (!ex.is_object()) parse_fail("$.expectations", "expected object");
    for (auto mode = ex.begin(); mode != ex.end(); ++mode) {
      const std::string where = "$.expectations." + mode.key();
      if (!mode.value().is_object()) parse_fail(where, "expected object");
      auto& per_action = s.expectations[mode.key()];
      for (auto it = mode.value().begin(); it != mode.value().end(); ++it) {
        per_action[it.key()] = parse_expectation(it.value(), where + "." + it.key());
      }
    }
  }

  validate(s);
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SimError(Errc::ParseError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// Runner

namespace {

bool param_bool(const ActionSpec& a, const char* key, bool fallback) {
  auto it = a.params.find(key);
  return it == a.params.end() ? fallback : it->second == "true";
}

std::uint64_t param_u64(const ActionSpec& a, const char* key, std::uint64_t fallback) {
  auto it = a.params.find(key);
  if (it == a.params.end()) return fallback;
  try {
    return std::stoull(it->second, nullptr, 0);
  } catch (const std::exception&) {
    throw SimError(Errc::ValidationError, "action '" + a.id + "' parameter '" + key + "' is not a number");
  }
}

Bytes param_bytes(const ActionSpec& a) {
  if (auto it = a.params.find("data_hex"); it != a.params.end()) return parse_hex_bytes(it->second, a.id + ".data_hex");
  if (auto it = a.params.find("data"); it != a.params.end()) return Bytes(it->second.begin(), it->second.end());
  return {};
}

class Replayer {
 public:
  Replayer(const Scenario& s, Simulation& sim) : s_(s), sim_(sim), kernel_(sim.kernel) {}

  std::vector<std::string> setup(Protection protection) {
    std::vector<std::string> problems;
    for (const auto& p : s_.processes) {
      auto groups = p.template_name == "SYSTEM" ? system_template_groups() : user_template_groups();
      groups.insert(groups.end(), p.extra_groups.begin(), p.extra_groups.end());
      const std::uint64_t privileges =
          p.privileges.value_or(p.template_name == "SYSTEM" ? kSystemPrivileges : kUserPrivileges);
      pids_[p.name] = kernel_.create_process(p.name, std::move(groups), privileges).pid;
    }
    for (const auto& f : s_.files) kernel_.add_file(f.path, f.content, Sid::parse(f.required_group));

    std::vector<Agent> preloaded;
    for (const auto& d : s_.preloaded_drivers) preloaded.push_back(kernel_.load_driver(d));
    if (protection == Protection::On) {
      std::vector<Agent> trusted;
      for (const auto& d : s_.trusted_drivers) trusted.push_back(Agent{AgentKind::Driver, d, 0});
      sim_.ranger.protection_start(preloaded, trusted);
    }
    for (const auto& d : s_.loaded_drivers) kernel_.load_driver(d);

    for (const auto& f : s_.files) {
      if (!f.exclusive_owner) continue;
      const auto ctx = kernel_.context(pids_.at(f.owner_process), kernel_.driver(*f.exclusive_owner));
      const auto r = kernel_.zw_create_file(ctx, f.path, access::kGenericReadWrite, 0);
      if (!r.status.ok()) problems.push_back("setup: exclusive open of '" + f.path + "' returned " + to_hex32(r.status.code));
    }
    return problems;
  }

  ActionOutcome perform(const ActionSpec& a) {
    ActionOutcome out;
    out.id = a.id;
    out.action = a.action;
    out.actor = a.actor;
    out.status = "OK";
    try {
      dispatch(a, out);
    } catch (const BugCheck& bc) {
      out.bug_check = to_hex32(bc.code());
      out.succeeded = false;
    } catch (const SimError& e) {
      out.error = std::string(to_string(e.code()));
      out.status = "ERROR";
    }
    if (kernel_.halted() && !out.bug_check) out.bug_check = to_hex32(*kernel_.bug_check());
    return out;
  }

 private:
  Agent actor(const ActionSpec& a) const { return a.actor == "kernel" ? Agent::kernel() : kernel_.driver(a.actor); }
  ThreadContext ctx(const ActionSpec& a) { return kernel_.context(pids_.at(a.process), actor(a)); }
  HandleValue handle(const ActionSpec& a, const char* key) {
    const std::string& ref = a.params.at(key);
    auto it = handles_.find(ref);
    // A failed create leaves no handle; 0 is never valid.
    return it == handles_.end() ? 0 : it->second;
  }

  static void observe(ActionOutcome& out, const Bytes& bytes) {
    out.observed_digest = digest_hex(bytes);
    out.observed_len = bytes.size();
  }

  void apply(ActionOutcome& out, const AttackOutcome& r) {
    out.succeeded = r.succeeded;
    out.bytes_patched = r.bytes_patched;
    if (r.bug_check) out.bug_check = to_hex32(*r.bug_check);
    if (r.privileged) out.allowed = *r.privileged;
    for (auto pid : r.swap_flagged) out.flagged.push_back(kernel_.process(pid).name);
    std::sort(out.flagged.begin(), out.flagged.end());
    observe(out, r.observed);
    observed_[out.id] = r.observed;
  }

  void dispatch(const ActionSpec& a, ActionOutcome& out) {
    if (a.action == "create_file") {
      const auto r = kernel_.zw_create_file(ctx(a), a.params.at("path"),
                                            static_cast<std::uint32_t>(param_u64(a, "access", access::kGenericReadWrite)),
                                            static_cast<std::uint32_t>(param_u64(a, "share", 0)));
      out.status = to_hex32(r.status.code);
      out.succeeded = r.status.ok();
      if (r.status.ok()) {
        out.handle = r.handle;
        handles_[a.id] = r.handle;
      }
    } else if (a.action == "read_file") {
      const auto r = kernel_.zw_read_file(ctx(a), handle(a, "handle"), param_u64(a, "offset", 0),
                                          param_u64(a, "length", kAttackReadLength));
      out.status = to_hex32(r.status.code);
      out.succeeded = r.status.ok();
      observe(out, r.data);
      observed_[a.id] = r.data;
    } else if (a.action == "write_file") {
      const Bytes data = param_bytes(a);
      const auto st = kernel_.zw_write_file(ctx(a), handle(a, "handle"), param_u64(a, "offset", 0), data);
      out.status = to_hex32(st.code);
      out.succeeded = st.ok();
    } else if (a.action == "close") {
      const auto st = kernel_.zw_close(ctx(a), handle(a, "handle"));
      out.status = to_hex32(st.code);
      out.succeeded = st.ok();
    } else if (a.action == "privileged_op") {
      out.allowed = kernel_.privileged_op(ctx(a));
    } else if (a.action == "detect_token_swap") {
      for (auto pid : kernel_.detect_token_swap()) out.flagged.push_back(kernel_.process(pid).name);
      std::sort(out.flagged.begin(), out.flagged.end());
    } else if (a.action == "driver_read") {
      const Region image = *kernel_.driver_image(a.params.at("target"));
      const Bytes seen = sim_.memory.read_bytes(actor(a), image.base, image.length);
      out.succeeded = seen == sim_.memory.inspect(image.base, image.length);
      observe(out, seen);
      observed_[a.id] = seen;
    } else if (a.action == "file_object_hijack") {
      apply(out, attack_file_object_hijack(kernel_, ctx(a), handle(a, "hijacker"), a.params.at("secret")));
    } else if (a.action == "handle_table_hijack") {
      apply(out, attack_handle_table_hijack(kernel_, ctx(a), handle(a, "hijacker"), a.params.at("secret")));
    } else if (a.action == "ntfs_hijack") {
      NtfsHijackOptions opt;
      opt.do_step2 = param_bool(a, "do_step2", true);
      opt.accesses = static_cast<std::uint32_t>(param_u64(a, "accesses", 1));
      opt.recopy_each_access = param_bool(a, "recopy", true);
      apply(out, attack_ntfs_hijack(kernel_, ctx(a), handle(a, "hijacker"), a.params.at("secret"), opt));
    } else if (a.action == "token_hijack") {
      apply(out, attack_token_hijack(kernel_, actor(a), pids_.at(a.params.at("target")), pids_.at(a.params.at("donor"))));
    } else if (a.action == "group_patch_legacy") {
      apply(out, attack_group_patch_legacy(kernel_, actor(a), pids_.at(a.params.at("target"))));
    } else if (a.action == "token_swap") {
      apply(out, attack_token_swap(kernel_, actor(a), pids_.at(a.params.at("target")), pids_.at(a.params.at("donor"))));
    }
  }

 public:
  const Bytes* observed(const std::string& id) const {
    auto it = observed_.find(id);
    return it == observed_.end() ? nullptr : &it->second;
  }

 private:
  const Scenario& s_;
  Simulation& sim_;
  Kernel& kernel_;
  std::map<std::string, std::uint64_t> pids_;
  std::map<std::string, HandleValue> handles_;
  std::map<std::string, Bytes> observed_;
};

template <typename T>
void compare(std::vector<std::string>& out, const std::string& id, const char* field, const std::optional<T>& want,
             const std::optional<T>& got, auto&& show) {
  if (!want) return;
  if (!got || *got != *want) {
    out.push_back(id + ": " + field + " expected " + show(*want) + ", got " + (got ? show(*got) : std::string("none")));
  }
}

std::vector<MapEntry> dump_map(const Ranger& ranger) {
  std::vector<MapEntry> out;
  for (const AccessRule& r : ranger.map().rules()) {
    MapEntry m;
    m.label = to_string(r.label);
    m.base = hex64(r.base.value);
    m.length = r.length;
    if (r.deny_read) m.denied.push_back("Read");
    if (r.deny_write) m.denied.push_back("Write");
    m.exempt.assign(r.exempt.begin(), r.exempt.end());
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

Report run(const Scenario& scenario, Protection protection) {
  Simulation sim;
  return run(scenario, protection, sim);
}

Report run(const Scenario& scenario, Protection protection, Simulation& sim) {
  Report report;
  report.scenario = scenario.name;
  report.protection = to_string(protection);

  Replayer replay(scenario, sim);
  report.mismatches = replay.setup(protection);

  for (const auto& action : scenario.actions) {
    if (sim.kernel.halted()) break;
    report.actions.push_back(replay.perform(action));
  }
  report.halted = sim.kernel.halted();
  if (sim.kernel.bug_check()) report.bug_check = to_hex32(*sim.kernel.bug_check());
  report.blocked_accesses = sim.memory.blocked_count();
  if (sim.ranger.started()) {
    report.enclave_switch_count = sim.ranger.enclave_switch_count();
    report.enclave_count = sim.ranger.enclaves().size();
    report.map = dump_map(sim.ranger);
  }

  auto expectations = scenario.expectations.find(to_string(protection));
  if (expectations != scenario.expectations.end()) {
    auto str = [](const std::string& v) { return v; };
    auto boolean = [](bool v) { return std::string(v ? "true" : "false"); };
    auto list = [](const std::vector<std::string>& v) {
      std::string s = "[";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
      return s + "]";
    };
    for (const auto& [id, want] : expectations->second) {
      auto it = std::find_if(report.actions.begin(), report.actions.end(),
                             [&](const ActionOutcome& o) { return o.id == id; });
      if (it == report.actions.end()) {
        report.mismatches.push_back(id + ": not executed");
        continue;
      }
      const ActionOutcome& got = *it;
      auto& mm = report.mismatches;
      compare(mm, id, "succeeded", want.succeeded, got.succeeded, boolean);
      compare(mm, id, "allowed", want.allowed, got.allowed, boolean);
      compare(mm, id, "status", want.status, std::optional<std::string>(got.status), str);
      compare(mm, id, "bug_check", want.bug_check, got.bug_check, str);
      compare(mm, id, "error", want.error, got.error, str);
      compare(mm, id, "flagged", want.flagged, std::optional<std::vector<std::string>>(got.flagged), list);
      if (want.observed) {
        const Bytes* seen = replay.observed(id);
        const std::string text = seen ? std::string(seen->begin(), seen->end()) : std::string();
        if (!seen || text != *want.observed) mm.push_back(id + ": observed bytes differ from expectation");
      }
    }
  }
  report.verdict = report.mismatches.empty() ? "PASS" : "FAIL";
  return report;
}

}  // namespace khs

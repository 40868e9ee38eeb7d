#include "khs/ranger.hpp"

#include <algorithm>

namespace khs {

const char* to_string(EnclaveKind kind) noexcept {
  switch (kind) {
    case EnclaveKind::Default: return "Default";
    case EnclaveKind::Driver: return "Driver";
    case EnclaveKind::DataOnly: return "DataOnly";
  }
  return "?";
}

const char* to_string(GuardLabel label) noexcept {
  switch (label) {
    case GuardLabel::ObjHeaderGuard: return "ObjHeaderGuard";
    case GuardLabel::FcbGuard: return "FcbGuard";
    case GuardLabel::FileObjectGuard: return "FileObjectGuard";
    case GuardLabel::TokenGuard: return "TokenGuard";
    case GuardLabel::EprocessGuard: return "EprocessGuard";
    case GuardLabel::DriverGuard: return "DriverGuard";
  }
  return "?";
}

// ---------------------------------------------------------------------------

void MemoryAccessPolicy::insert(AccessRule rule) {
  if (rule.length == 0) throw SimError(Errc::RuleConflict, "empty rule range");
  for (const AccessRule& existing : rules_) {
    if (!existing.overlaps(rule.base, rule.length)) continue;
    const bool shared_read = existing.deny_read && rule.deny_read;
    const bool shared_write = existing.deny_write && rule.deny_write;
    if ((shared_read || shared_write) && existing.exempt != rule.exempt) {
      throw SimError(Errc::RuleConflict, std::string(to_string(rule.label)) + " overlaps " +
                                             to_string(existing.label) + " with a different exempt set");
    }
  }
  rules_.push_back(std::move(rule));
}

std::size_t MemoryAccessPolicy::remove_key(const std::string& key) {
  const auto before = rules_.size();
  std::erase_if(rules_, [&](const AccessRule& r) { return r.key == key; });
  return before - rules_.size();
}

const AccessRule* MemoryAccessPolicy::match(const Agent& agent, Address addr, std::uint64_t len,
                                            AccessKind kind) const {
  for (const AccessRule& r : rules_) {
    if (r.overlaps(addr, len) && r.denies(agent, kind)) return &r;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

Ranger::Ranger(SimMemory& mem, Kernel& kernel) : mem_(mem), kernel_(kernel) {}

Enclave& Ranger::add_enclave(EnclaveKind kind) {
  Enclave e;
  e.id = static_cast<EnclaveId>(enclaves_.size());
  e.kind = kind;
  enclaves_.push_back(std::move(e));
  return enclaves_.back();
}

void Ranger::protection_start(const std::vector<Agent>& preloaded, const std::vector<Agent>& trusted) {
  if (started_) throw SimError(Errc::AlreadyStarted, "protection already running");
  started_ = true;

  Enclave& def = add_enclave(EnclaveKind::Default);
  default_id_ = def.id;
  def.members.insert(Agent::kernel().name);
  for (const Agent& d : preloaded) def.members.insert(d.name);

  Enclave& data = add_enclave(EnclaveKind::DataOnly);
  data_only_id_ = data.id;
  data.members.insert(Agent::kernel().name);
  for (const Agent& d : trusted) data.trusted_extra.insert(d.name);

  for (const auto& name : enclaves_[default_id_].members) assignment_[name] = default_id_;

  log_start_ = mem_.log().size();
  mem_.install_policy([this](const Agent& agent, Address addr, std::uint64_t len, AccessKind kind) {
    return mediate(agent, addr, len, kind);
  });

  KernelHooks hooks;
  hooks.on_create_file = [this](HandleValue h, const Agent& owner) { hook_create_file(h, owner); };
  hooks.on_close = [this](HandleValue h) { hook_close(h); };
  hooks.on_process_create = [this](const ProcessRecord& p) { on_process_create(p); };
  hooks.on_driver_load = [this](const Agent& d, const Region& image) { on_driver_load(d, image); };
  kernel_.set_hooks(std::move(hooks));

  for (const ProcessRecord& p : kernel_.processes()) on_process_create(p);
}

const Enclave& Ranger::on_driver_load(const Agent& driver, const Region& image) {
  if (!started_) throw SimError(Errc::NotStarted, "protection not started");
  if (assignment_.contains(driver.name)) throw SimError(Errc::DuplicateDriver, "driver '" + driver.name + "'");

  Enclave& e = add_enclave(EnclaveKind::Driver);
  e.members.insert(driver.name);
  assignment_[driver.name] = e.id;

  AccessRule rule;
  rule.base = image.base;
  rule.length = image.length;
  rule.deny_read = true;
  rule.deny_write = true;
  rule.exempt = {Agent::kernel().name, driver.name};
  rule.owning_enclave = e.id;
  rule.label = GuardLabel::DriverGuard;
  rule.key = "driver:" + driver.name;
  map_.insert(std::move(rule));
  return enclaves_[e.id];
}

void Ranger::hook_create_file(HandleValue handle, const Agent& owner) {
  if (!started_) return;

  std::optional<Address> entry;
  enum_handle_table(kernel_.handle_table(), [&](HandleTable&, Address addr, HandleValue h) {
    if (h != handle) return false;
    entry = addr;
    return true;
  });
  if (!entry) return;

  // The hypervisor reads guest memory directly, outside mediation.
  auto u64_at = [&](Address a) {
    const Bytes b = mem_.inspect(a, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  const auto decoded = HandleTableEntry::unpack(u64_at(*entry));
  const Address header = decode_object_pointer(decoded.object_pointer_bits);
  const Address file_object{u64_at(header + layout::kObjectHeaderBody)};
  const Address fcb{u64_at(file_object + layout::kFileObjectFsContext)};

  const std::string key = "handle:" + std::to_string(handle);
  const EnclaveId owning = enclave_of(owner);
  const std::set<std::string> kernel_only{Agent::kernel().name};

  map_.insert(AccessRule{*entry, layout::kObjectPointerSpan, false, true, kernel_only, owning,
                         GuardLabel::ObjHeaderGuard, key});
  map_.insert(AccessRule{fcb, layout::kFcbBlockSize, true, true, kernel_only, owning, GuardLabel::FcbGuard, key});
  map_.insert(AccessRule{file_object, layout::kFileObjectSize, false, true, kernel_only, owning,
                         GuardLabel::FileObjectGuard, key});
}

void Ranger::hook_close(HandleValue handle) {
  if (!started_) return;
  map_.remove_key("handle:" + std::to_string(handle));
}

std::set<std::string> Ranger::data_only_exempt() const {
  const Enclave& data = enclaves_[data_only_id_];
  std::set<std::string> exempt = data.trusted_extra;
  exempt.insert(Agent::kernel().name);
  return exempt;
}

void Ranger::on_process_create(const ProcessRecord& process) {
  if (!started_) return;
  const std::string key = "pid:" + std::to_string(process.pid);
  const auto exempt = data_only_exempt();
  map_.insert(AccessRule{process.token.base, process.token.length, true, true, exempt, data_only_id_,
                         GuardLabel::TokenGuard, key});
  map_.insert(AccessRule{process.eprocess.base + layout::kEprocessTokenRef, 8, false, true, exempt,
                         data_only_id_, GuardLabel::EprocessGuard, key});
}

EnclaveId Ranger::enclave_of(const Agent& agent) const {
  auto it = assignment_.find(agent.name);
  return it == assignment_.end() ? default_id_ : it->second;
}

AccessDecision Ranger::mediate(const Agent& agent, Address addr, std::uint64_t len, AccessKind kind) {
  const EnclaveId current = enclave_of(agent);
  if (last_enclave_ && *last_enclave_ != current) ++switches_;
  last_enclave_ = current;
  return map_.match(agent, addr, len, kind) ? AccessDecision::RedirectFake : AccessDecision::Allow;
}

std::uint64_t Ranger::enclave_switch_count() const {
  if (!started_) throw SimError(Errc::NotStarted, "protection not started");
  return switches_;
}

}  // namespace khs

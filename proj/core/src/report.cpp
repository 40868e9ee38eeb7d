#include <sstream>

#include "json.hpp"
#include "khs/scenario.hpp"

namespace khs {

using nlohmann::ordered_json;

namespace {

ordered_json outcome_json(const ActionOutcome& o) {
  ordered_json j;
  j["id"] = o.id;
  j["action"] = o.action;
  j["actor"] = o.actor;
  j["status"] = o.status;
  if (o.error) j["error"] = *o.error;
  if (o.succeeded) j["succeeded"] = *o.succeeded;
  if (o.allowed) j["allowed"] = *o.allowed;
  if (o.bug_check) j["bug_check"] = *o.bug_check;
  if (o.handle) j["handle"] = *o.handle;
  j["observed_digest"] = o.observed_digest;
  j["observed_len"] = o.observed_len;
  j["bytes_patched"] = o.bytes_patched;
  j["flagged"] = o.flagged;
  return j;
}

ordered_json report_json(const Report& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["protection"] = r.protection;
  j["verdict"] = r.verdict;
  j["mismatches"] = r.mismatches;
  j["halted"] = r.halted;
  j["bug_check"] = r.bug_check ? ordered_json(*r.bug_check) : ordered_json(nullptr);
  ordered_json actions = ordered_json::array();
  for (const auto& o : r.actions) actions.push_back(outcome_json(o));
  j["actions"] = std::move(actions);

  ordered_json metrics;
  metrics["blocked_accesses"] = r.blocked_accesses;
  metrics["enclave_switch_count"] = r.enclave_switch_count;
  metrics["enclave_count"] = r.enclave_count;
  j["metrics"] = std::move(metrics);

  ordered_json map = ordered_json::array();
  for (const auto& m : r.map) {
    ordered_json e;
    e["label"] = m.label;
    e["base"] = m.base;
    e["length"] = m.length;
    e["denied"] = m.denied;
    e["exempt"] = m.exempt;
    map.push_back(std::move(e));
  }
  j["map"] = std::move(map);
  return j;
}

template <typename T>
std::optional<T> opt(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

Report report_from(const ordered_json& j) {
  Report r;
  r.scenario = j.at("scenario").get<std::string>();
  r.protection = j.at("protection").get<std::string>();
  r.verdict = j.at("verdict").get<std::string>();
  r.mismatches = j.at("mismatches").get<std::vector<std::string>>();
  r.halted = j.at("halted").get<bool>();
  r.bug_check = opt<std::string>(j, "bug_check");
  for (const auto& a : j.at("actions")) {
    ActionOutcome o;
    o.id = a.at("id").get<std::string>();
    o.action = a.at("action").get<std::string>();
    o.actor = a.at("actor").get<std::string>();
    o.status = a.at("status").get<std::string>();
    o.error = opt<std::string>(a, "error");
    o.succeeded = opt<bool>(a, "succeeded");
    o.allowed = opt<bool>(a, "allowed");
    o.bug_check = opt<std::string>(a, "bug_check");
    o.handle = opt<std::uint32_t>(a, "handle");
    o.observed_digest = a.at("observed_digest").get<std::string>();
    o.observed_len = a.at("observed_len").get<std::uint64_t>();
    o.bytes_patched = a.at("bytes_patched").get<std::uint64_t>();
    o.flagged = a.at("flagged").get<std::vector<std::string>>();
    r.actions.push_back(std::move(o));
  }
  const auto& metrics = j.at("metrics");
  r.blocked_accesses = metrics.at("blocked_accesses").get<std::uint64_t>();
  r.enclave_switch_count = metrics.at("enclave_switch_count").get<std::uint64_t>();
  r.enclave_count = metrics.at("enclave_count").get<std::uint64_t>();
  for (const auto& e : j.at("map")) {
    MapEntry m;
    m.label = e.at("label").get<std::string>();
    m.base = e.at("base").get<std::string>();
    m.length = e.at("length").get<std::uint64_t>();
    m.denied = e.at("denied").get<std::vector<std::string>>();
    m.exempt = e.at("exempt").get<std::vector<std::string>>();
    r.map.push_back(std::move(m));
  }
  return r;
}

}  // namespace

std::string to_json(const Report& report, int indent) { return report_json(report).dump(indent) + "\n"; }

std::string to_json(const std::vector<Report>& reports, int indent) {
  ordered_json doc;
  ordered_json list = ordered_json::array();
  for (const auto& r : reports) list.push_back(report_json(r));
  doc["reports"] = std::move(list);
  return doc.dump(indent) + "\n";
}

Report report_from_json(std::string_view text) {
  try {
    return report_from(ordered_json::parse(text.begin(), text.end()));
  } catch (const ordered_json::exception& e) {
    throw SimError(Errc::ParseError, std::string("report: ") + e.what());
  }
}

std::string to_text(const Report& r) {
  std::ostringstream out;
  out << "scenario " << r.scenario << " [protection " << r.protection << "]: " << r.verdict << "\n";
  for (const auto& a : r.actions) {
    out << "  " << a.id << "  " << a.action << " by " << a.actor << "  status=" << a.status;
    if (a.succeeded) out << " succeeded=" << (*a.succeeded ? "yes" : "no");
    if (a.allowed) out << " allowed=" << (*a.allowed ? "yes" : "no");
    if (a.bug_check) out << " bug_check=" << *a.bug_check;
    if (a.error) out << " error=" << *a.error;
    if (a.observed_len) out << " observed=" << a.observed_len << "B#" << a.observed_digest;
    if (a.bytes_patched) out << " patched=" << a.bytes_patched;
    if (!a.flagged.empty()) {
      out << " flagged=";
      for (std::size_t i = 0; i < a.flagged.size(); ++i) out << (i ? "," : "") << a.flagged[i];
    }
    out << "\n";
  }
  if (r.halted) out << "  halted by bug check " << r.bug_check.value_or("?") << "\n";
  out << "  blocked accesses " << r.blocked_accesses << ", enclave switches " << r.enclave_switch_count
      << ", enclaves " << r.enclave_count << ", map rules " << r.map.size() << "\n";
  for (const auto& m : r.mismatches) out << "  mismatch: " << m << "\n";
  return out.str();
}

}  // namespace khs

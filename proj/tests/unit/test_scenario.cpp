#include <gtest/gtest.h>

#include <filesystem>

#include "khs/scenario.hpp"

using namespace khs;

namespace {

std::string bundled(const std::string& name) { return std::string(KHS_SCENARIO_DIR) + "/" + name + ".json"; }

Errc load_error(const std::string& text) {
  try {
    load_scenario(text);
  } catch (const SimError& e) {
    return e.code();
  }
  ADD_FAILURE() << "scenario accepted";
  return Errc::WildAccess;
}

const ActionOutcome& outcome(const Report& r, const std::string& id) {
  for (const auto& a : r.actions) {
    if (a.id == id) return a;
  }
  throw std::runtime_error("no action " + id);
}

const char* kMinimal = R"({
  "name": "mini",
  "processes": [{"name": "System", "template": "SYSTEM"}],
  "loaded_drivers": ["d"],
  "files": [{"path": "a.txt", "content": "hello"}],
  "actions": [
    {"id": "open", "actor": "d", "action": "create_file", "params": {"path": "a.txt", "share": 0}},
    {"id": "read", "actor": "d", "action": "read_file", "params": {"handle": "open"}}
  ],
  "expectations": {"off": {"open": {"status": "0x00000000"}, "read": {"observed": "hello"}}}
})";

}  // namespace

TEST(LoadScenario, BundledHandleHijack) {
  const Scenario s = load_scenario_file(bundled("handle_hijack"));
  EXPECT_EQ(s.name, "handle_hijack");
  EXPECT_EQ(s.preloaded_drivers.size() + s.loaded_drivers.size(), 2u);
  EXPECT_EQ(s.files.size(), 2u);
}

TEST(LoadScenario, EveryBundledFixtureLoads) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(KHS_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_scenario_file(entry.path().string())) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 10u);
}

TEST(LoadScenario, MinimalParses) {
  const Scenario s = load_scenario(kMinimal);
  ASSERT_EQ(s.actions.size(), 2u);
  EXPECT_EQ(s.actions[0].params.at("share"), "0");
  EXPECT_EQ(s.actions[1].process, "System");
  EXPECT_EQ(s.files[0].required_group, "S-1-1-0");
}

TEST(LoadScenario, EmptyActionsGiveEmptyReport) {
  const Scenario s = load_scenario(R"({"name": "empty", "actions": []})");
  const Report r = run(s, Protection::Off);
  EXPECT_TRUE(r.actions.empty());
  EXPECT_EQ(r.verdict, "PASS");
}

TEST(LoadScenario, MalformedJsonReportsLine) {
  try {
    load_scenario("{\n  \"name\": \"x\",\n  oops\n}");
    FAIL();
  } catch (const SimError& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadScenario, WrongTypeNamesField) {
  try {
    load_scenario(R"({"name": "x", "actions": [{"id": 5, "actor": "kernel", "action": "close"}]})");
    FAIL();
  } catch (const SimError& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_NE(std::string(e.what()).find("$.actions[0].id"), std::string::npos) << e.what();
  }
}

TEST(LoadScenario, ValidationFailures) {
  // Undeclared actor.
  EXPECT_EQ(load_error(R"({"name": "x", "processes": [{"name": "System", "template": "SYSTEM"}],
    "actions": [{"id": "a", "actor": "ghost", "action": "privileged_op"}]})"), Errc::ValidationError);
  // Undeclared secret.
  EXPECT_EQ(load_error(R"({"name": "x", "processes": [{"name": "System", "template": "SYSTEM"}],
    "loaded_drivers": ["d"], "files": [{"path": "a"}],
    "actions": [{"id": "o", "actor": "d", "action": "create_file", "params": {"path": "a"}},
                {"id": "h", "actor": "d", "action": "ntfs_hijack", "params": {"hijacker": "o", "secret": "b"}}]})"),
            Errc::ValidationError);
  // Handle reference to a later action.
  EXPECT_EQ(load_error(R"({"name": "x", "processes": [{"name": "System", "template": "SYSTEM"}],
    "files": [{"path": "a"}],
    "actions": [{"id": "r", "actor": "kernel", "action": "read_file", "params": {"handle": "o"}},
                {"id": "o", "actor": "kernel", "action": "create_file", "params": {"path": "a"}}]})"),
            Errc::ValidationError);
  // Unknown template, unknown action, expectation for unknown id.
  EXPECT_EQ(load_error(R"({"name": "x", "processes": [{"name": "P", "template": "ROOT"}]})"), Errc::ValidationError);
  EXPECT_EQ(load_error(R"({"name": "x", "processes": [{"name": "System", "template": "SYSTEM"}],
    "actions": [{"id": "a", "actor": "kernel", "action": "format_disk"}]})"), Errc::ValidationError);
  EXPECT_EQ(load_error(R"({"name": "x", "expectations": {"off": {"zz": {"succeeded": true}}}})"), Errc::ValidationError);
}

TEST(Run, MinimalScenarioPasses) {
  const Report r = run(load_scenario(kMinimal), Protection::Off);
  EXPECT_EQ(r.verdict, "PASS") << to_text(r);
  EXPECT_EQ(outcome(r, "read").observed_len, 5u);
}

TEST(Run, FailedExpectationMakesFail) {
  std::string text = kMinimal;
  text.replace(text.find("\"observed\": \"hello\""), 19, "\"observed\": \"bye\"");
  const Report r = run(load_scenario(text), Protection::Off);
  EXPECT_EQ(r.verdict, "FAIL");
  EXPECT_EQ(r.mismatches.size(), 1u);
}

TEST(Run, TokenHijackBothModes) {
  const Scenario s = load_scenario_file(bundled("token_hijack"));
  const Report off = run(s, Protection::Off);
  EXPECT_EQ(off.verdict, "PASS");
  EXPECT_TRUE(*outcome(off, "privileged_op").allowed);
  const Report on = run(s, Protection::On);
  EXPECT_EQ(on.verdict, "PASS");
  EXPECT_FALSE(*outcome(on, "privileged_op").allowed);
  EXPECT_GT(on.blocked_accesses, 0u);
}

TEST(Run, NtfsWithoutStep2HaltsWithBugCheck) {
  const Scenario s = load_scenario_file(bundled("ntfs_hijack_no_step2"));
  const Report r = run(s, Protection::Off);
  EXPECT_TRUE(r.halted);
  EXPECT_EQ(r.bug_check, "0x000000E3");
}

TEST(Run, BugCheckStopsRemainingActions) {
  Scenario s = load_scenario_file(bundled("ntfs_hijack_no_step2"));
  s.actions.push_back(ActionSpec{"after", "kernel", "System", "privileged_op", {}});
  s.expectations["off"]["after"] = Expectation{};
  s.expectations["off"]["after"].allowed = true;
  const Report r = run(s, Protection::Off);
  EXPECT_EQ(r.actions.size(), s.actions.size() - 1);
  EXPECT_EQ(r.verdict, "FAIL");
}

TEST(Run, ModeDifferentialForAttacks) {
  for (const char* name : {"file_object_hijack", "handle_hijack", "ntfs_hijack", "token_hijack",
                           "token_hijack_preloaded", "token_swap"}) {
    const Scenario s = load_scenario_file(bundled(name));
    for (const auto& a : s.actions) {
      if (!is_attack_name(a.action)) continue;
      EXPECT_TRUE(*outcome(run(s, Protection::Off), a.id).succeeded) << name;
      EXPECT_FALSE(*outcome(run(s, Protection::On), a.id).succeeded) << name;
    }
  }
  const Scenario legacy = load_scenario_file(bundled("group_patch_legacy"));
  EXPECT_FALSE(*outcome(run(legacy, Protection::Off), "attack").succeeded);
  EXPECT_FALSE(*outcome(run(legacy, Protection::On), "attack").succeeded);
}

TEST(Run, Deterministic) {
  const Scenario s = load_scenario_file(bundled("ntfs_hijack"));
  for (auto mode : {Protection::Off, Protection::On}) {
    EXPECT_EQ(to_json(run(s, mode)), to_json(run(s, mode)));
  }
}

TEST(ReportJson, Roundtrip) {
  for (const char* name : {"handle_hijack", "token_swap", "legit_workload", "ntfs_hijack_single_copy"}) {
    const Scenario s = load_scenario_file(bundled(name));
    for (auto mode : {Protection::Off, Protection::On}) {
      const Report r = run(s, mode);
      EXPECT_EQ(report_from_json(to_json(r)), r) << name;
    }
  }
}

TEST(ReportJson, MapDumpUsesHexAddresses) {
  const Report r = run(load_scenario_file(bundled("handle_hijack")), Protection::On);
  ASSERT_FALSE(r.map.empty());
  for (const auto& m : r.map) {
    EXPECT_EQ(m.base.rfind("0x", 0), 0u);
    EXPECT_EQ(m.base.size(), 18u);
  }
  EXPECT_EQ(hex64(0xFFFF800000001230ULL), "0xFFFF800000001230");
}

TEST(ReportText, MentionsVerdict) {
  const Report r = run(load_scenario(kMinimal), Protection::Off);
  EXPECT_NE(to_text(r).find("PASS"), std::string::npos);
}

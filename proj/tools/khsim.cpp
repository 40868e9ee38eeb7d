// khsim: replay kernel-hijacking scenarios with the protection engine off
// and on, and report verdicts.
//
// Exit codes: 0 all PASS, 1 any FAIL, 2 unreadable or invalid input.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "khs/scenario.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInput = 2;

std::vector<fs::path> bundled(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<khs::Protection> modes(const std::string& which) {
  if (which == "off") return {khs::Protection::Off};
  if (which == "on") return {khs::Protection::On};
  return {khs::Protection::Off, khs::Protection::On};
}

bool all_pass(const std::vector<khs::Report>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const khs::Report& r) { return r.verdict == "PASS"; });
}

bool write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel hijacking scenario simulator"};
  app.require_subcommand(1);
  std::string scenario_dir = KHS_SCENARIO_DIR;
  app.add_option("--scenario-dir", scenario_dir, "Directory of bundled scenarios");

  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  std::string scenario_path;
  std::string protection = "both";
  std::string report_path;
  std::string format = "json";
  run_cmd->add_option("--scenario", scenario_path, "Scenario file")->required();
  run_cmd->add_option("--protection", protection, "Protection mode")->check(CLI::IsMember({"on", "off", "both"}));
  run_cmd->add_option("--report", report_path, "Write the report here instead of stdout");
  run_cmd->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "text"}));

  auto* list_cmd = app.add_subcommand("list", "List bundled scenarios");

  auto* suite_cmd = app.add_subcommand("suite", "Run every bundled scenario in both modes");
  std::string out_dir = "reports";
  suite_cmd->add_option("--out-dir", out_dir, "Directory for per-scenario reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitInput;
  }

  if (!fs::is_directory(scenario_dir)) {
    // Installed layout: <prefix>/bin/khsim and <prefix>/share/khs/scenarios.
    std::error_code ec;
    const fs::path self = fs::canonical(argv[0], ec);
    const fs::path installed = self.parent_path().parent_path() / "share" / "khs" / "scenarios";
    if (!ec && fs::is_directory(installed)) scenario_dir = installed.string();
  }

  if (*list_cmd) {
    for (const auto& p : bundled(scenario_dir)) {
      try {
        const auto s = khs::load_scenario_file(p.string());
        std::cout << p.stem().string() << "\t" << s.description << "\n";
      } catch (const khs::SimError& e) {
        std::cout << p.stem().string() << "\tinvalid: " << e.what() << "\n";
      }
    }
    return kExitPass;
  }

  if (*run_cmd) {
    khs::Scenario scenario;
    try {
      scenario = khs::load_scenario_file(scenario_path);
    } catch (const khs::SimError& e) {
      std::cerr << "khsim: " << e.what() << "\n";
      return kExitInput;
    }
    std::vector<khs::Report> reports;
    for (auto mode : modes(protection)) reports.push_back(khs::run(scenario, mode));

    std::string text;
    if (format == "text") {
      for (const auto& r : reports) text += khs::to_text(r);
    } else {
      text = reports.size() == 1 ? khs::to_json(reports.front()) : khs::to_json(reports);
    }
    if (report_path.empty()) {
      std::cout << text;
    } else if (!write_file(report_path, text)) {
      std::cerr << "khsim: cannot write '" << report_path << "'\n";
      return kExitInput;
    }
    return all_pass(reports) ? kExitPass : kExitFail;
  }

  // suite
  const auto files = bundled(scenario_dir);
  if (files.empty()) {
    std::cerr << "khsim: no scenarios in '" << scenario_dir << "'\n";
    return kExitInput;
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  bool pass = true;
  bool bad_input = false;
  for (const auto& path : files) {
    khs::Scenario scenario;
    try {
      scenario = khs::load_scenario_file(path.string());
    } catch (const khs::SimError& e) {
      std::cerr << "khsim: " << path.filename().string() << ": " << e.what() << "\n";
      bad_input = true;
      continue;
    }
    std::vector<khs::Report> reports;
    for (auto mode : modes("both")) reports.push_back(khs::run(scenario, mode));
    for (const auto& r : reports) {
      std::cout << r.verdict << "  " << r.scenario << " [" << r.protection << "]\n";
      for (const auto& m : r.mismatches) std::cout << "      " << m << "\n";
    }
    pass = pass && all_pass(reports);
    if (!write_file(fs::path(out_dir) / path.filename(), khs::to_json(reports))) {
      std::cerr << "khsim: cannot write report for " << path.filename().string() << "\n";
      bad_input = true;
    }
  }
  if (bad_input) return kExitInput;
  return pass ? kExitPass : kExitFail;
}

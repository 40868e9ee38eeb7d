#include <benchmark/benchmark.h>

#include "khs/scenario.hpp"

using namespace khs;

namespace {

void BM_MediatedRead(benchmark::State& state) {
  Simulation sim;
  const Agent driver = sim.kernel.load_driver("d");
  if (state.range(0)) sim.ranger.protection_start({}, {});
  const Region r = sim.memory.alloc(64, "x");
  for (auto _ : state) benchmark::DoNotOptimize(sim.memory.read_u64(driver, r.base));
}
BENCHMARK(BM_MediatedRead)->Arg(0)->Arg(1)->ArgNames({"protection"});

void BM_RuleMatch(benchmark::State& state) {
  MemoryAccessPolicy map;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    map.insert(AccessRule{Address{0x10000 + static_cast<std::uint64_t>(i) * 64}, 48, true, true, {"kernel"}, 0,
                          GuardLabel::FcbGuard, "k"});
  }
  const Agent driver{AgentKind::Driver, "d", 1};
  for (auto _ : state) benchmark::DoNotOptimize(map.match(driver, Address{0x8}, 8, AccessKind::Read));
}
BENCHMARK(BM_RuleMatch)->Range(8, 4096);

void BM_ScenarioRun(benchmark::State& state) {
  const Scenario s = load_scenario_file(std::string(KHS_SCENARIO_DIR) + "/ntfs_hijack.json");
  const Protection mode = state.range(0) ? Protection::On : Protection::Off;
  for (auto _ : state) benchmark::DoNotOptimize(run(s, mode));
}
BENCHMARK(BM_ScenarioRun)->Arg(0)->Arg(1)->ArgNames({"protection"});

}  // namespace
BENCHMARK_MAIN();
